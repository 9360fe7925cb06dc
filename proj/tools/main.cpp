// arabeval command-line entry point. Exit codes: 0 ok, 1 usage, 2 config,
// 3 runtime.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "arabeval/af.hpp"
#include "arabeval/annotate.hpp"
#include "arabeval/bias.hpp"
#include "arabeval/bpe.hpp"
#include "arabeval/corpus.hpp"
#include "arabeval/error.hpp"
#include "arabeval/eval.hpp"
#include "arabeval/remote.hpp"
#include "arabeval/taskgen.hpp"
#include "arabeval/unicode.hpp"
#include "cli_support.hpp"

namespace fs = std::filesystem;
using namespace arabeval;
using namespace arabeval::cli;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required");
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::unique_ptr<bpe::Vocabulary> load_tokenizer(const std::string& dir, bool required) {
  if (dir.empty()) {
    if (required) throw ConfigError("--tokenizer is required");
    return nullptr;
  }
  if (!fs::exists(fs::path(dir) / "merges.txt")) throw ConfigError("no tokenizer in " + dir);
  return std::make_unique<bpe::Vocabulary>(bpe::Vocabulary::load(dir));
}

std::string storage_dir(const CLI::App& sub, std::string value) {
  if (!given(sub, "--storage")) {
    if (const char* env = std::getenv("ARABEVAL_STORAGE"); env != nullptr && *env != '\0') value = env;
  }
  if (value.empty()) throw ConfigError("--storage (or ARABEVAL_STORAGE) is required");
  return value;
}

// ------------------------------------------------------------------- clean

struct CleanOpts {
  Common common;
  std::string in;
  std::string report;
  double min_ratio = 0.95;
  int max_repeat = 2;
};

void run_clean(CLI::App& sub, CleanOpts& o) {
  load_config(sub, o.common);
  auto cfg = corpus::CleaningConfig::from_json(o.common.section("cleaning"));
  if (given(sub, "--min-ratio")) cfg.min_arabic_ratio = o.min_ratio;
  if (given(sub, "--max-repeat")) cfg.max_char_repeat = o.max_repeat;
  cfg.validate();
  require_file(o.in, "--in");
  if (o.common.out.empty()) throw ConfigError("--out is required");
  const auto prov = log_run(sub, o.common);

  std::ifstream in(o.in, std::ios::binary);
  std::ofstream out(o.common.out, std::ios::binary);
  if (!out) throw Error("cannot write " + o.common.out);
  const auto stats = corpus::filter_corpus(in, out, cfg, [](const corpus::RecordError& e) {
    std::cerr << "line " << e.line << ": " << e.message << '\n';
  });
  std::cout << "read " << stats.read << ", kept " << stats.kept << ", dropped " << stats.dropped
            << ", malformed " << stats.malformed << '\n';
  write_report(o.report, {{"read", stats.read},
                          {"kept", stats.kept},
                          {"dropped", stats.dropped},
                          {"malformed", stats.malformed},
                          {"cleaning", cfg.to_json()},
                          {"provenance", prov}});
}

// ----------------------------------------------------------------- analyze

struct AnalyzeOpts {
  Common common;
  std::string in, variety, country;
};

void run_analyze(CLI::App& sub, AnalyzeOpts& o) {
  load_config(sub, o.common);
  require_file(o.in, "--in");
  require_file(o.variety, "--variety");
  require_file(o.country, "--country");
  const auto prov = log_run(sub, o.common);
  const auto texts = read_texts(o.in);
  const auto variety = corpus::LexiconClassifier::from_json(read_json_file(o.variety));
  const auto country = corpus::LexiconClassifier::from_json(read_json_file(o.country));
  const auto rep = corpus::distribution_report(texts, variety, country, o.common.workers);
  auto j = rep.to_json();
  j["provenance"] = prov;
  write_report(o.common.out, j);
  std::cout << "sample " << rep.sample_size << ", dialect " << rep.dialect_size << '\n';
  for (const auto& [k, v] : rep.variety_proportions) std::cout << "  " << k << " " << pct(v) << "%\n";
  for (const auto& [k, v] : rep.country_proportions) std::cout << "  " << k << " " << pct(v) << "%\n";
}

// --------------------------------------------------------------- tokenizer

struct TokTrainOpts {
  Common common;
  std::string corpus;
  std::size_t vocab_size = bpe::kDefaultVocabSize;
  std::string specials;
};

void run_tok_train(CLI::App& sub, TokTrainOpts& o) {
  load_config(sub, o.common);
  override_from(o.common.section("tokenizer"), "vocab_size", sub, "--vocab-size", o.vocab_size);
  require_file(o.corpus, "--corpus");
  if (o.common.out.empty()) throw ConfigError("--out (output directory) is required");
  const auto prov = log_run(sub, o.common);
  const auto texts = read_texts(o.corpus);
  const auto specials = o.specials.empty() ? bpe::default_special_tokens() : split_list(o.specials);
  const auto vocab = bpe::train(texts, o.vocab_size, specials);
  vocab.save(o.common.out);
  std::cout << "vocabulary of " << vocab.size() << " tokens (" << vocab.merges().size() << " merges) written to "
            << o.common.out << '\n';
}

struct TokCodecOpts {
  Common common;
  std::string tokenizer, text, ids, in;
};

void run_tok_encode(CLI::App& sub, TokCodecOpts& o) {
  load_config(sub, o.common);
  const auto tok = load_tokenizer(o.tokenizer, true);
  if (!o.text.empty()) {
    const auto ids = tok->encode(o.text);
    for (std::size_t i = 0; i < ids.size(); ++i) std::cout << (i ? " " : "") << ids[i];
    std::cout << '\n';
    return;
  }
  require_file(o.in, "--in or --text");
  if (o.common.out.empty()) throw ConfigError("--out is required with --in");
  log_run(sub, o.common);
  std::vector<json> recs;
  for (const auto& t : read_texts(o.in)) recs.push_back({{"tokens", tok->encode(t)}});
  write_jsonl(o.common.out, recs);
  std::cout << "encoded " << recs.size() << " documents\n";
}

void run_tok_decode(CLI::App& sub, TokCodecOpts& o) {
  load_config(sub, o.common);
  const auto tok = load_tokenizer(o.tokenizer, true);
  if (!o.ids.empty()) {
    TokenSequence ids;
    std::istringstream ss(o.ids);
    for (long long v; ss >> v;) {
      if (v < 0) throw ConfigError("negative token id");
      ids.push_back(static_cast<TokenId>(v));
    }
    std::cout << tok->decode(ids) << '\n';
    return;
  }
  require_file(o.in, "--in or --ids");
  if (o.common.out.empty()) throw ConfigError("--out is required with --in");
  log_run(sub, o.common);
  std::vector<json> recs;
  for (const auto& j : read_jsonl(o.in)) {
    recs.push_back({{"text", tok->decode(j.at("tokens").get<TokenSequence>())}});
  }
  write_jsonl(o.common.out, recs);
  std::cout << "decoded " << recs.size() << " documents\n";
}

// -------------------------------------------------------------------- eval

struct EvalOpts {
  Common common;
  ModelOptions model;
  std::string tokenizer, data, labels;
  std::size_t shots = 0;
  std::size_t max_tokens = 16;
  std::string template_text = "{input}";
  bool sum_logprob = false;
};

void add_eval_options(CLI::App& s, EvalOpts& o, bool generation) {
  add_common(s, o.common);
  add_model_options(s, o.model);
  s.add_option("--tokenizer", o.tokenizer, "Tokenizer directory");
  s.add_option("--data", o.data, "Dataset JSONL");
  s.add_option("--shots", o.shots, "Number of in-context demonstrations");
  s.add_option("--template", o.template_text, "Prompt template containing {input}");
  s.add_flag("--sum-logprob", o.sum_logprob, "Score candidates by summed instead of mean log-probability");
  if (generation) s.add_option("--max-tokens", o.max_tokens, "Greedy continuation length");
}

eval::RunConfig run_config(CLI::App& sub, EvalOpts& o) {
  const auto e = o.common.section("eval");
  override_from(e, "shots", sub, "--shots", o.shots);
  override_from(e, "template", sub, "--template", o.template_text);
  override_from(e, "max_tokens", sub, "--max-tokens", o.max_tokens);
  eval::RunConfig rc;
  rc.k_shots = o.shots;
  rc.seed = o.common.seed;
  rc.template_text = o.template_text;
  rc.answer_separator = e.value("answer_separator", rc.answer_separator);
  rc.separator = e.value("separator", rc.separator);
  rc.max_tokens = o.max_tokens;
  rc.lms_mode = o.sum_logprob ? eval::LmsMode::kSumLogprob : eval::LmsMode::kMeanLogprob;
  rc.workers = o.common.workers;
  return rc;
}

void emit_eval(const eval::EvalReport& r, const json& prov, const std::string& out) {
  auto j = r.to_json();
  j["provenance"] = prov;
  write_report(out, j);
  std::cout << r.task << " shots=" << r.shots << " " << r.metric << "=" << pct(r.value) << " n=" << r.items.size();
  for (const auto& [k, v] : r.secondary) std::cout << ' ' << k << '=' << pct(v);
  std::cout << " model=" << r.model_id << '\n';
}

void run_ppl(CLI::App& sub, EvalOpts& o) {
  load_config(sub, o.common);
  resolve_model_options(sub, o.common, o.model);
  require_file(o.data, "--data");
  const auto tok = load_tokenizer(o.tokenizer, false);
  const auto prov = log_run(sub, o.common);
  const auto model = load_model(o.model, tok.get());

  std::vector<TokenSequence> docs;
  for (const auto& j : read_jsonl(o.data)) {
    if (j.contains("tokens")) {
      docs.push_back(j.at("tokens").get<TokenSequence>());
    } else {
      if (!tok) throw ConfigError("text documents need --tokenizer");
      const auto text = j.contains("body") ? j.at("body") : j.at("text");
      docs.push_back(tok->encode(text.get<std::string>()));
    }
  }
  const auto rep = o.common.workers > 1 ? eval::perplexity_parallel(*model, docs) : eval::perplexity_serial(*model, docs);
  auto j = rep.to_json();
  j["task"] = "ppl";
  j["metric"] = "perplexity";
  j["value"] = rep.corpus_perplexity;
  j["model_id"] = model->id();
  j["provenance"] = prov;
  write_report(o.common.out, j);
  std::cout << "ppl " << std::setprecision(10) << rep.corpus_perplexity << " over " << rep.total_tokens
            << " tokens in " << rep.docs.size() << " documents (" << rep.skipped.size()
            << " empty skipped) model=" << model->id() << '\n';
}

void run_autocomplete(CLI::App& sub, EvalOpts& o) {
  load_config(sub, o.common);
  resolve_model_options(sub, o.common, o.model);
  require_file(o.data, "--data");
  const auto tok = load_tokenizer(o.tokenizer, true);
  const auto rc = run_config(sub, o);
  const auto prov = log_run(sub, o.common);
  const auto model = load_model(o.model, tok.get());
  std::vector<eval::AutocompleteItem> items;
  for (const auto& j : read_jsonl(o.data)) {
    items.push_back({j.at("context").get<std::string>(), j.at("target").get<std::string>()});
  }
  emit_eval(eval::run_autocomplete(*model, *tok, items, rc), prov, o.common.out);
}

void run_mcq(CLI::App& sub, EvalOpts& o) {
  load_config(sub, o.common);
  resolve_model_options(sub, o.common, o.model);
  require_file(o.data, "--data");
  const auto tok = load_tokenizer(o.tokenizer, true);
  const auto rc = run_config(sub, o);
  const auto prov = log_run(sub, o.common);
  const auto model = load_model(o.model, tok.get());
  std::vector<eval::McqItem> items;
  for (const auto& j : read_jsonl(o.data)) items.push_back(eval::McqItem::from_json(j));
  emit_eval(eval::run_mcq(*model, *tok, items, rc), prov, o.common.out);
}

void run_classify(CLI::App& sub, EvalOpts& o) {
  load_config(sub, o.common);
  resolve_model_options(sub, o.common, o.model);
  require_file(o.data, "--data");
  const auto tok = load_tokenizer(o.tokenizer, true);
  const auto rc = run_config(sub, o);
  const auto prov = log_run(sub, o.common);
  const auto model = load_model(o.model, tok.get());
  std::vector<eval::ClassificationItem> items;
  std::set<std::string> seen;
  for (const auto& j : read_jsonl(o.data)) {
    items.push_back({j.at("text").get<std::string>(), j.at("label").get<std::string>()});
    seen.insert(items.back().label);
  }
  auto labels = split_list(o.labels);
  if (labels.empty()) labels.assign(seen.begin(), seen.end());
  std::map<std::string, std::string> verbalizers;
  const auto e = o.common.section("eval");
  if (e.contains("verbalizers")) verbalizers = e.at("verbalizers").get<std::map<std::string, std::string>>();
  emit_eval(eval::run_classification(*model, *tok, items, labels, rc, verbalizers), prov, o.common.out);
}

// --------------------------------------------------------------------- gen

struct GenOpts {
  Common common;
  std::string dictionary, technique = "RW", in, suite, data_dir;
  std::size_t n = 100;
  std::size_t min_words = 2;
};

std::vector<char32_t> insertion_alphabet(const Common& common) {
  json section = common.section("taskgen");
  if (!section.contains("insertion_alphabet")) {
    const auto shipped = taskgen::default_data_dir() / "taskgen.json";
    if (fs::exists(shipped)) section = read_json_file(shipped);
  }
  if (!section.contains("insertion_alphabet")) return taskgen::default_insertion_alphabet();
  std::vector<char32_t> out;
  for (const auto& s : section.at("insertion_alphabet").get<std::vector<std::string>>()) {
    const auto cps = unicode::decode(s);
    if (cps.size() != 1) throw ConfigError("insertion alphabet entries must be single characters");
    out.push_back(cps[0]);
  }
  if (out.empty()) throw ConfigError("empty insertion alphabet");
  return out;
}

void run_gen_scramble(CLI::App& sub, GenOpts& o) {
  load_config(sub, o.common);
  require_file(o.dictionary, "--dictionary");
  if (o.common.out.empty()) throw ConfigError("--out is required");
  const auto technique = taskgen::parse_technique(o.technique);
  const auto alphabet = insertion_alphabet(o.common);
  log_run(sub, o.common);
  const auto words = read_lines(o.dictionary);
  const auto ds = taskgen::build_scramble_dataset(words, technique, o.n, o.common.seed, alphabet);
  std::vector<json> recs;
  for (const auto& it : ds.items) recs.push_back(it.to_json());
  write_jsonl(o.common.out, recs);
  for (const auto& s : ds.skipped) std::cerr << "skipped " << s << '\n';
  std::cout << ds.items.size() << " " << o.technique << " items (" << ds.skipped.size() << " words skipped)\n";
}

void run_gen_autocomplete(CLI::App& sub, GenOpts& o) {
  load_config(sub, o.common);
  require_file(o.in, "--in");
  if (o.common.out.empty()) throw ConfigError("--out is required");
  log_run(sub, o.common);
  const auto texts = read_texts(o.in);
  const auto pairs = taskgen::build_autocomplete_dataset(texts, o.min_words);
  std::vector<json> recs;
  for (const auto& p : pairs) recs.push_back({{"context", p.context}, {"target", p.target}});
  write_jsonl(o.common.out, recs);
  std::cout << pairs.size() << " autocomplete items from " << texts.size() << " texts\n";
}

taskgen::ProbeExpansion expand_suite(const std::string& suite, const taskgen::BiasData& d) {
  if (suite == "occupation") return taskgen::expand_occupation_probes(d.occupations, d.templates.occupation);
  if (suite == "demographic") {
    return taskgen::expand_demographic_probes(d.genders, d.regions, d.colors, d.templates.demographic);
  }
  if (suite == "group") return taskgen::expand_group_probes(d.groups, d.templates.group);
  throw ConfigError("unknown suite \"" + suite + "\" (expected occupation, demographic or group)");
}

fs::path bias_dir(const GenOpts& o) {
  const fs::path dir = o.data_dir.empty() ? taskgen::default_data_dir() / "bias" : fs::path(o.data_dir);
  if (!fs::exists(dir)) throw ConfigError("bias data directory not found: " + dir.string());
  return dir;
}

void run_gen_probes(CLI::App& sub, GenOpts& o) {
  load_config(sub, o.common);
  if (o.common.out.empty()) throw ConfigError("--out is required");
  log_run(sub, o.common);
  const auto exp = expand_suite(o.suite, taskgen::BiasData::load(bias_dir(o)));
  std::vector<json> recs;
  for (const auto& p : exp.probes) recs.push_back(p.to_json());
  write_jsonl(o.common.out, recs);
  for (const auto& w : exp.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << exp.probes.size() << " " << o.suite << " probes\n";
}

// ---------------------------------------------------------------------- af

struct AfOpts {
  Common common;
  ModelOptions model;
  std::string tokenizer, pool, state, generator = "stub", words, watermark, discriminator = "ngram", out_dir;
  std::string fractions = "0.8,0.1,0.1";
  bool resume = false;
  std::size_t max_iterations = 10;
  std::size_t max_tokens = 6;
  double threshold = 0.75;
  std::size_t window = 3;
  double epsilon = 0.02;
};

af::AFConfig af_config(CLI::App& sub, AfOpts& o) {
  auto cfg = af::AFConfig::from_json(o.common.section("af"));
  if (given(sub, "--max-iterations")) cfg.max_iterations = o.max_iterations;
  if (given(sub, "--threshold")) cfg.threshold = o.threshold;
  if (given(sub, "--window")) cfg.window = o.window;
  if (given(sub, "--epsilon")) cfg.epsilon = o.epsilon;
  if (given(sub, "--max-tokens") || !o.common.section("af").contains("generator")) cfg.generator_params.max_tokens = o.max_tokens;
  cfg.seed = o.common.seed;
  cfg.workers = o.common.workers;
  cfg.validate();
  return cfg;
}

struct GeneratorHandle {
  std::unique_ptr<bpe::Vocabulary> tokenizer;
  std::unique_ptr<model::LanguageModel> model;
  std::unique_ptr<af::EndingGenerator> generator;
};

// "stub" draws words from --words (or from the real endings); "model" uses
// the model gateway.
GeneratorHandle make_generator(CLI::App& sub, AfOpts& o, const std::vector<std::string>& real_endings) {
  GeneratorHandle h;
  if (o.generator == "stub") {
    std::vector<std::string> words;
    if (!o.words.empty()) {
      require_file(o.words, "--words");
      words = read_lines(o.words);
    } else {
      for (const auto& e : real_endings) {
        std::istringstream ss(e);
        for (std::string w; ss >> w;) words.push_back(w);
      }
    }
    std::optional<std::string> mark;
    if (!o.watermark.empty()) mark = o.watermark;
    h.generator = std::make_unique<af::WordListGenerator>(std::move(words), mark);
  } else if (o.generator == "model") {
    resolve_model_options(sub, o.common, o.model);
    h.tokenizer = load_tokenizer(o.tokenizer, true);
    h.model = load_model(o.model, h.tokenizer.get());
    h.generator = std::make_unique<af::ModelGenerator>(*h.model, *h.tokenizer);
  } else {
    throw ConfigError("unknown generator \"" + o.generator + "\" (expected stub or model)");
  }
  return h;
}

std::unique_ptr<af::EndingDiscriminator> make_discriminator(const std::string& spec, std::uint64_t seed) {
  if (spec == "ngram") {
    af::NgramDiscriminator::Options opts;
    opts.seed = seed;
    return std::make_unique<af::NgramDiscriminator>(opts);
  }
  if (spec.starts_with("constant:")) return std::make_unique<af::ConstantDiscriminator>(std::stod(spec.substr(9)));
  if (spec.starts_with("marker:")) return std::make_unique<af::MarkerDiscriminator>(spec.substr(7));
  throw ConfigError("unknown discriminator \"" + spec + "\" (expected ngram, constant:P or marker:TEXT)");
}

std::vector<std::string> real_endings_of(const af::AFState& s) {
  std::vector<std::string> out;
  for (const auto& r : s.records) out.push_back(r.real_ending);
  return out;
}

void run_af_init(CLI::App& sub, AfOpts& o) {
  load_config(sub, o.common);
  require_file(o.pool, "--pool");
  if (o.common.out.empty()) throw ConfigError("--out is required");
  const auto cfg = af_config(sub, o);
  log_run(sub, o.common);
  std::vector<af::AFInput> inputs;
  for (const auto& j : read_jsonl(o.pool)) {
    inputs.push_back({j.at("context").get<std::string>(), j.at("real_ending").get<std::string>()});
  }
  std::vector<std::string> reals;
  for (const auto& in : inputs) reals.push_back(in.real_ending);
  auto gen = make_generator(sub, o, reals);
  std::vector<std::string> log;
  const auto state = af::af_initialize(inputs, *gen.generator, cfg, &log);
  for (const auto& l : log) std::cerr << l << '\n';
  write_json_file(o.common.out, state.to_json());
  std::cout << state.records.size() << " records initialized (" << log.size() << " dropped)\n";
}

void run_af_run(CLI::App& sub, AfOpts& o) {
  load_config(sub, o.common);
  if (o.common.out.empty()) throw ConfigError("--out (checkpoint path) is required");
  const auto cfg = af_config(sub, o);
  std::string source = o.state;
  if (o.resume && fs::exists(o.common.out)) source = o.common.out;
  require_file(source, "--state");
  const auto prov = log_run(sub, o.common);
  auto state = af::AFState::from_json(read_json_file(source));
  if (given(sub, "--seed")) state.seed = o.common.seed;
  auto gen = make_generator(sub, o, real_endings_of(state));
  auto disc = make_discriminator(o.discriminator, o.common.seed);
  const auto out = o.common.out;
  state = af::af_run(std::move(state), *disc, *gen.generator, cfg, [&](const af::IterationOutcome& it) {
    write_json_file(out, it.state.to_json());
    std::cout << "iteration " << it.state.iteration << " accuracy " << pct(100.0 * it.accuracy) << "% replaced "
              << it.replacements.size() << '\n';
  });
  write_json_file(out, state.to_json());
  std::cout << "stopped: " << state.stop_reason << " after " << state.iteration << " iterations\n";
}

void run_af_split(CLI::App& sub, AfOpts& o) {
  load_config(sub, o.common);
  require_file(o.state, "--state");
  const std::string dir = o.out_dir.empty() ? o.common.out : o.out_dir;
  if (dir.empty()) throw ConfigError("--out (directory) is required");
  const auto parts = split_list(o.fractions);
  if (parts.size() != 3) throw ConfigError("--fractions needs train,dev,test");
  af::SplitFractions f{std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
  log_run(sub, o.common);
  const auto state = af::AFState::from_json(read_json_file(o.state));
  const auto split = af::af_split(state, f, o.common.seed);
  fs::create_directories(dir);
  auto dump = [&](const std::vector<eval::McqItem>& items, const char* name) {
    std::vector<json> recs;
    for (const auto& it : items) recs.push_back(it.to_json());
    write_jsonl(fs::path(dir) / name, recs);
  };
  dump(split.train, "train.jsonl");
  dump(split.dev, "dev.jsonl");
  dump(split.test, "test.jsonl");
  std::cout << "train " << split.train.size() << ", dev " << split.dev.size() << ", test " << split.test.size()
            << '\n';
}

// -------------------------------------------------------------------- bias

struct BiasOpts {
  Common common;
  ModelOptions model;
  std::string tokenizer, suite, data_dir, harm_lexicon, wage_lexicon, review_out, report, group_by;
  std::size_t n = 0;
  std::size_t top_k = 50;
  double top_p = 0.95;
  std::size_t max_tokens = 20;
};

void run_bias(CLI::App& sub, BiasOpts& o) {
  load_config(sub, o.common);
  resolve_model_options(sub, o.common, o.model);
  const auto b = o.common.section("bias");
  override_from(b, "top_k", sub, "--top-k", o.top_k);
  override_from(b, "top_p", sub, "--top-p", o.top_p);
  override_from(b, "max_tokens", sub, "--max-tokens", o.max_tokens);
  if (o.n == 0) o.n = o.suite == "group" ? 50 : 10;
  const auto tok = load_tokenizer(o.tokenizer, true);
  GenOpts g;
  g.data_dir = o.data_dir;
  const auto data = taskgen::BiasData::load(bias_dir(g));
  const auto exp = expand_suite(o.suite, data);
  for (const auto& w : exp.warnings) std::cerr << "warning: " << w << '\n';
  const auto prov = log_run(sub, o.common);
  const auto model = load_model(o.model, tok.get());

  model::SamplingParams params;
  params.top_k = o.top_k;
  params.top_p = o.top_p;
  params.max_tokens = o.max_tokens;
  params.seed = o.common.seed;
  const auto records = bias::run_probe_suite(*model, *tok, exp.probes, params, o.n, o.common.workers);
  if (!o.common.out.empty()) {
    std::vector<json> recs;
    for (const auto& r : records) recs.push_back(r.to_json());
    write_jsonl(o.common.out, recs);
  }
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.error ? 1 : 0;
  std::cout << records.size() << " completions for " << exp.probes.size() << " " << o.suite << " probes ("
            << failed << " failed)\n";

  json report{{"suite", o.suite}, {"records", records.size()}, {"provenance", prov}};
  if (o.suite == "occupation") {
    bias::SuffixGenderDetector detector;
    const auto lean = bias::gender_lean_report(records, detector);
    report["gender_lean"] = lean.to_json();
    std::cout << "male-leaning occupations " << pct(lean.male_percent) << "% (" << lean.undetermined
              << " undetermined)\n";
  } else if (o.suite == "demographic") {
    const auto split = bias::filter_profession_mentions(records, data.occupations);
    report["profession_mentions"] = split.kept.size();
    if (!o.review_out.empty()) write_jsonl(o.review_out, bias::review_export(split.review));
    if (!o.wage_lexicon.empty()) {
      require_file(o.wage_lexicon, "--wage-lexicon");
      const auto lex = read_json_file(o.wage_lexicon);
      bias::LexiconWageLabeler labeler(lex.value("high", std::vector<std::string>{}),
                                       lex.value("medium", std::vector<std::string>{}),
                                       lex.value("low", std::vector<std::string>{}));
      std::vector<bias::LabeledRecord> labeled;
      for (const auto& r : split.kept) labeled.push_back({r, {}, labeler.label(r.completion)});
      const auto rep = bias::aggregate_bias_report(labeled, o.group_by.empty() ? "color" : o.group_by,
                                                   bias::Tally::kWage);
      report["wage"] = rep.to_json();
    } else {
      std::cout << "wage labels are assigned by annotators; export kept records with --review-out\n";
      if (!o.review_out.empty()) write_jsonl(o.review_out, bias::review_export(split.kept));
    }
  } else {
    std::vector<std::unique_ptr<bias::HarmClassifier>> owned;
    if (!o.harm_lexicon.empty()) {
      require_file(o.harm_lexicon, "--harm-lexicon");
      for (const auto& [cat, words] : read_json_file(o.harm_lexicon).items()) {
        owned.push_back(std::make_unique<bias::KeywordHarmClassifier>(bias::parse_harm(cat),
                                                                      words.get<std::vector<std::string>>()));
      }
    }
    if (owned.empty()) {
      std::cout << "no harm classifiers configured (--harm-lexicon); records left unscored\n";
    } else {
      std::vector<const bias::HarmClassifier*> ptrs;
      for (const auto& c : owned) ptrs.push_back(c.get());
      const auto labeled = bias::classify_harm(records, ptrs, o.common.workers);
      const auto rep = bias::aggregate_bias_report(labeled, o.group_by.empty() ? "group" : o.group_by,
                                                   bias::Tally::kHarm);
      report["harm"] = rep.to_json();
    }
  }
  write_report(o.report, report);
}

// ---------------------------------------------------------------- annotate

struct AnnotateOpts {
  Common common;
  std::string storage, items, schema = "detection", roster, session, host = "127.0.0.1";
  int port = 8080;
};

void run_annotate_create(CLI::App& sub, AnnotateOpts& o) {
  load_config(sub, o.common);
  const auto storage = storage_dir(sub, o.storage);
  require_file(o.items, "--items");
  const auto schema = annotate::parse_schema(o.schema);
  const auto roster = split_list(o.roster);
  log_run(sub, o.common);
  std::vector<annotate::Item> items;
  for (const auto& j : read_jsonl(o.items)) items.push_back(annotate::Item::from_json(j));
  annotate::SessionStore store(storage);
  const auto id = store.create(std::move(items), schema, roster, o.common.seed);
  const json out{{"session", id}, {"tokens", store.get(id).tokens()}};
  write_report(o.common.out, out);
  std::cout << out.dump(2) << '\n';
}

annotate::AnnotationServer* g_server = nullptr;

void run_annotate_serve(CLI::App& sub, AnnotateOpts& o) {
  load_config(sub, o.common);
  const auto storage = storage_dir(sub, o.storage);
  annotate::SessionStore store(storage);
  annotate::AnnotationServer server(store);
  const int port = server.bind(o.host, o.port);
  std::cout << "annotation service on http://" << o.host << ':' << port << " storing to " << storage << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server != nullptr) g_server->stop();
  });
  server.listen_blocking();
  g_server = nullptr;
}

void run_annotate_stats(CLI::App& sub, AnnotateOpts& o) {
  load_config(sub, o.common);
  const auto storage = storage_dir(sub, o.storage);
  if (o.session.empty()) throw ConfigError("--session is required");
  annotate::SessionStore store(storage);
  if (!store.exists(o.session)) throw ConfigError("no such session " + o.session);
  const auto stats = store.get(o.session).stats();
  write_report(o.common.out, stats);
  std::cout << stats.dump(2) << '\n';
}

// ------------------------------------------------------------------ report

struct ReportOpts {
  Common common;
  std::vector<std::string> inputs;
};

void run_report(CLI::App& sub, ReportOpts& o) {
  load_config(sub, o.common);
  if (o.inputs.empty()) throw ConfigError("--in is required");
  json all = json::array();
  for (const auto& path : o.inputs) {
    require_file(path, "--in");
    const auto j = read_json_file(path);
    std::cout << path << ": ";
    if (j.contains("metric") && j.contains("value")) {
      std::cout << j.value("task", std::string("?")) << ' ' << j.at("metric").get<std::string>() << '='
                << pct(j.at("value").get<double>());
    } else if (j.contains("suite")) {
      std::cout << "bias " << j.at("suite").get<std::string>() << ' ' << j.value("records", 0) << " records";
    } else if (j.contains("kept")) {
      std::cout << "clean kept " << j.at("kept") << " of " << j.at("read");
    } else {
      std::cout << "report";
    }
    if (j.contains("provenance")) {
      std::cout << " (seed " << j["provenance"].value("seed", std::uint64_t{0}) << ", config "
                << j["provenance"].value("config_hash", std::string()) << ')';
    }
    std::cout << '\n';
    all.push_back({{"path", path}, {"report", j}});
  }
  write_report(o.common.out, json{{"reports", all}});
}

// ------------------------------------------------------------- serve-model

struct ServeOpts {
  Common common;
  ModelOptions model;
  std::string tokenizer, host = "127.0.0.1";
  int port = 8081;
};

model::ModelServer* g_model_server = nullptr;

void run_serve_model(CLI::App& sub, ServeOpts& o) {
  load_config(sub, o.common);
  resolve_model_options(sub, o.common, o.model);
  const auto tok = load_tokenizer(o.tokenizer, false);
  log_run(sub, o.common);
  const auto model = load_model(o.model, tok.get());
  model::ModelServer server(*model);
  const int port = server.bind(o.host, o.port);
  std::cout << "model " << model->id() << " on http://" << o.host << ':' << port << std::endl;
  g_model_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_model_server != nullptr) g_model_server->stop();
  });
  server.listen_blocking();
  g_model_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arabeval: evaluation toolkit for Arabic autoregressive language models"};
  app.require_subcommand(1);
  app.fallthrough(false);

  // clean / analyze
  CleanOpts clean;
  auto* s_clean = app.add_subcommand("clean", "Clean a JSONL corpus and keep Arabic-majority documents");
  add_common(*s_clean, clean.common);
  s_clean->add_option("--in", clean.in, "Raw JSONL corpus")->required();
  s_clean->add_option("--report", clean.report, "Write counts as JSON");
  s_clean->add_option("--min-ratio", clean.min_ratio, "Minimum Arabic character ratio");
  s_clean->add_option("--max-repeat", clean.max_repeat, "Longest allowed character run");
  s_clean->callback([&] { run_clean(*s_clean, clean); });

  AnalyzeOpts analyze;
  auto* s_analyze = app.add_subcommand("analyze", "Variety and country proportions of a sample");
  add_common(*s_analyze, analyze.common);
  s_analyze->add_option("--in", analyze.in, "Sample (JSONL or lines)")->required();
  s_analyze->add_option("--variety", analyze.variety, "Variety lexicon classifier (JSON)")->required();
  s_analyze->add_option("--country", analyze.country, "Country lexicon classifier (JSON)")->required();
  s_analyze->callback([&] { run_analyze(*s_analyze, analyze); });

  // tokenizer
  auto* s_tok = app.add_subcommand("tokenizer", "Byte-level BPE vocabulary");
  s_tok->require_subcommand(1);
  TokTrainOpts tok_train;
  auto* s_tok_train = s_tok->add_subcommand("train", "Train a vocabulary");
  add_common(*s_tok_train, tok_train.common);
  s_tok_train->add_option("--corpus", tok_train.corpus, "Training corpus (JSONL or lines)")->required();
  s_tok_train->add_option("--vocab-size", tok_train.vocab_size, "Total vocabulary size");
  s_tok_train->add_option("--specials", tok_train.specials, "Comma-separated special tokens");
  s_tok_train->callback([&] { run_tok_train(*s_tok_train, tok_train); });
  TokCodecOpts tok_enc, tok_dec;
  auto* s_tok_enc = s_tok->add_subcommand("encode", "Text to token ids");
  add_common(*s_tok_enc, tok_enc.common);
  s_tok_enc->add_option("--tokenizer", tok_enc.tokenizer, "Tokenizer directory")->required();
  s_tok_enc->add_option("--text", tok_enc.text, "Text to encode");
  s_tok_enc->add_option("--in", tok_enc.in, "Documents to encode");
  s_tok_enc->callback([&] { run_tok_encode(*s_tok_enc, tok_enc); });
  auto* s_tok_dec = s_tok->add_subcommand("decode", "Token ids to text");
  add_common(*s_tok_dec, tok_dec.common);
  s_tok_dec->add_option("--tokenizer", tok_dec.tokenizer, "Tokenizer directory")->required();
  s_tok_dec->add_option("--ids", tok_dec.ids, "Space-separated ids");
  s_tok_dec->add_option("--in", tok_dec.in, "JSONL of {\"tokens\": [...]}");
  s_tok_dec->callback([&] { run_tok_decode(*s_tok_dec, tok_dec); });

  // eval
  auto* s_eval = app.add_subcommand("eval", "Evaluate a model");
  s_eval->require_subcommand(1);
  EvalOpts ev_ppl, ev_ac, ev_mcq, ev_cls;
  auto* s_ppl = s_eval->add_subcommand("ppl", "Perplexity");
  add_eval_options(*s_ppl, ev_ppl, false);
  s_ppl->add_option("--docs", ev_ppl.data, "Documents: JSONL of {\"tokens\"} or {\"body\"}");
  s_ppl->callback([&] { run_ppl(*s_ppl, ev_ppl); });
  auto* s_ac = s_eval->add_subcommand("autocomplete", "Last-word completion");
  add_eval_options(*s_ac, ev_ac, true);
  s_ac->callback([&] { run_autocomplete(*s_ac, ev_ac); });
  auto* s_mcq = s_eval->add_subcommand("mcq", "Four-way multiple choice");
  add_eval_options(*s_mcq, ev_mcq, false);
  s_mcq->callback([&] { run_mcq(*s_mcq, ev_mcq); });
  auto* s_cls = s_eval->add_subcommand("classify", "Few-shot classification");
  add_eval_options(*s_cls, ev_cls, false);
  s_cls->add_option("--labels", ev_cls.labels, "Comma-separated label set");
  s_cls->callback([&] { run_classify(*s_cls, ev_cls); });

  // gen
  auto* s_gen = app.add_subcommand("gen", "Generate task data");
  s_gen->require_subcommand(1);
  GenOpts g_scr, g_ac, g_pr;
  auto* s_scr = s_gen->add_subcommand("scramble", "Word-manipulation dataset");
  add_common(*s_scr, g_scr.common);
  s_scr->add_option("--dictionary", g_scr.dictionary, "Ranked word list, one per line")->required();
  s_scr->add_option("--technique", g_scr.technique, "CL, A1, A2, RI or RW");
  s_scr->add_option("--n", g_scr.n, "Number of items");
  s_scr->callback([&] { run_gen_scramble(*s_scr, g_scr); });
  auto* s_gac = s_gen->add_subcommand("autocomplete", "Context / final-word pairs");
  add_common(*s_gac, g_ac.common);
  s_gac->add_option("--in", g_ac.in, "Texts (JSONL or lines)")->required();
  s_gac->add_option("--min-words", g_ac.min_words, "Skip shorter texts");
  s_gac->callback([&] { run_gen_autocomplete(*s_gac, g_ac); });
  auto* s_pr = s_gen->add_subcommand("probes", "Bias probe prompts");
  add_common(*s_pr, g_pr.common);
  s_pr->add_option("--suite", g_pr.suite, "occupation, demographic or group")->required();
  s_pr->add_option("--data-dir", g_pr.data_dir, "Slot lists and templates");
  s_pr->callback([&] { run_gen_probes(*s_pr, g_pr); });

  // af
  auto* s_af = app.add_subcommand("af", "Adversarial filtering");
  s_af->require_subcommand(1);
  AfOpts af_init, af_run, af_split;
  auto add_af = [](CLI::App& s, AfOpts& o) {
    add_common(s, o.common);
    add_model_options(s, o.model);
    s.add_option("--tokenizer", o.tokenizer, "Tokenizer directory (model generator)");
    s.add_option("--generator", o.generator, "stub or model");
    s.add_option("--words", o.words, "Word list for the stub generator");
    s.add_option("--watermark", o.watermark, "Token the stub generator plants in every ending");
    s.add_option("--max-tokens", o.max_tokens, "Ending length");
  };
  auto* s_af_init = s_af->add_subcommand("init", "Generate three endings per context");
  add_af(*s_af_init, af_init);
  s_af_init->add_option("--pool", af_init.pool, "JSONL of {context, real_ending}")->required();
  s_af_init->callback([&] { run_af_init(*s_af_init, af_init); });
  auto* s_af_run = s_af->add_subcommand("run", "Iterate until discriminator accuracy converges");
  add_af(*s_af_run, af_run);
  s_af_run->add_option("--state", af_run.state, "Initial state");
  s_af_run->add_flag("--resume", af_run.resume, "Continue from the checkpoint at --out when present");
  s_af_run->add_option("--discriminator", af_run.discriminator, "ngram, constant:P or marker:TEXT");
  s_af_run->add_option("--max-iterations", af_run.max_iterations, "Iteration cap");
  s_af_run->add_option("--threshold", af_run.threshold, "Replace endings with P(generated) at or above this");
  s_af_run->add_option("--window", af_run.window, "Convergence window");
  s_af_run->add_option("--epsilon", af_run.epsilon, "Convergence tolerance (fraction)");
  s_af_run->callback([&] { run_af_run(*s_af_run, af_run); });
  auto* s_af_split = s_af->add_subcommand("split", "Emit train/dev/test MCQ files");
  add_common(*s_af_split, af_split.common);
  s_af_split->add_option("--state", af_split.state, "AF state")->required();
  s_af_split->add_option("--fractions", af_split.fractions, "train,dev,test");
  s_af_split->add_option("--out-dir", af_split.out_dir, "Output directory (defaults to --out)");
  s_af_split->callback([&] { run_af_split(*s_af_split, af_split); });

  // bias
  auto* s_bias = app.add_subcommand("bias", "Bias probing");
  s_bias->require_subcommand(1);
  BiasOpts bias_run;
  auto* s_bias_run = s_bias->add_subcommand("run", "Sample completions for a probe suite and aggregate");
  add_common(*s_bias_run, bias_run.common);
  add_model_options(*s_bias_run, bias_run.model);
  s_bias_run->add_option("--suite", bias_run.suite, "occupation, demographic or group")
      ->required()
      ->check(CLI::IsMember({"occupation", "demographic", "group"}));
  s_bias_run->add_option("--tokenizer", bias_run.tokenizer, "Tokenizer directory");
  s_bias_run->add_option("--n", bias_run.n, "Completions per probe (default 10, group 50)");
  s_bias_run->add_option("--top-k", bias_run.top_k, "Top-k");
  s_bias_run->add_option("--top-p", bias_run.top_p, "Nucleus mass");
  s_bias_run->add_option("--max-tokens", bias_run.max_tokens, "Completion length");
  s_bias_run->add_option("--data-dir", bias_run.data_dir, "Slot lists and templates");
  s_bias_run->add_option("--harm-lexicon", bias_run.harm_lexicon, "Keyword harm classifiers (JSON)");
  s_bias_run->add_option("--wage-lexicon", bias_run.wage_lexicon, "Keyword wage labeler (JSON, tests only)");
  s_bias_run->add_option("--review-out", bias_run.review_out, "Annotation items for manual review");
  s_bias_run->add_option("--group-by", bias_run.group_by, "Probe slot to group the report by");
  s_bias_run->add_option("--report", bias_run.report, "Aggregated report (JSON)");
  s_bias_run->callback([&] { run_bias(*s_bias_run, bias_run); });

  // annotate
  auto* s_ann = app.add_subcommand("annotate", "Blind human annotation sessions");
  s_ann->require_subcommand(1);
  AnnotateOpts ann_create, ann_serve, ann_stats;
  auto* s_ann_create = s_ann->add_subcommand("create", "Create a session");
  add_common(*s_ann_create, ann_create.common);
  s_ann_create->add_option("--storage", ann_create.storage, "Storage root");
  s_ann_create->add_option("--items", ann_create.items, "Items JSONL {id, text, truth}")->required();
  s_ann_create->add_option("--schema", ann_create.schema, "detection, dialect-two-stage or harm-agreement");
  s_ann_create->add_option("--roster", ann_create.roster, "Comma-separated annotators")->required();
  s_ann_create->callback([&] { run_annotate_create(*s_ann_create, ann_create); });
  auto* s_ann_serve = s_ann->add_subcommand("serve", "Serve the annotation protocol");
  add_common(*s_ann_serve, ann_serve.common);
  s_ann_serve->add_option("--storage", ann_serve.storage, "Storage root");
  s_ann_serve->add_option("--host", ann_serve.host, "Bind address");
  s_ann_serve->add_option("--port", ann_serve.port, "Port (0 = any)");
  s_ann_serve->callback([&] { run_annotate_serve(*s_ann_serve, ann_serve); });
  auto* s_ann_stats = s_ann->add_subcommand("stats", "Session statistics");
  add_common(*s_ann_stats, ann_stats.common);
  s_ann_stats->add_option("--storage", ann_stats.storage, "Storage root");
  s_ann_stats->add_option("--session", ann_stats.session, "Session id")->required();
  s_ann_stats->callback([&] { run_annotate_stats(*s_ann_stats, ann_stats); });

  // report
  ReportOpts report;
  auto* s_report = app.add_subcommand("report", "Summarize report files");
  add_common(*s_report, report.common);
  s_report->add_option("--in", report.inputs, "Report JSON files")->required();
  s_report->callback([&] { run_report(*s_report, report); });

  ServeOpts serve;
  auto* s_serve = app.add_subcommand("serve-model", "Expose a model over the HTTP model protocol");
  add_common(*s_serve, serve.common);
  add_model_options(*s_serve, serve.model);
  s_serve->add_option("--tokenizer", serve.tokenizer, "Tokenizer directory (sets the vocabulary size)");
  s_serve->add_option("--host", serve.host, "Bind address");
  s_serve->add_option("--port", serve.port, "Port (0 = any)");
  s_serve->callback([&] { run_serve_model(*s_serve, serve); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
