#include "cli_support.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "arabeval/error.hpp"
#include "arabeval/remote.hpp"

namespace arabeval::cli {

namespace fs = std::filesystem;

json Common::section(const std::string& name) const {
  if (config.contains(name) && config.at(name).is_object()) return config.at(name);
  return json::object();
}

void add_common(CLI::App& app, Common& common) {
  app.add_option("--config", common.config_path, "JSON config file; flags override it");
  app.add_option("--seed", common.seed, "Random seed");
  app.add_option("--workers", common.workers, "Parallel workers")->check(CLI::PositiveNumber);
  app.add_option("--out", common.out, "Output path (report or data)");
}

void load_config(CLI::App& sub, Common& common) {
  if (!common.config_path.empty()) {
    if (!fs::exists(common.config_path)) throw ConfigError("config file not found: " + common.config_path);
    try {
      common.config = read_json_file(common.config_path);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cannot parse config: ") + e.what());
    }
    if (!common.config.is_object()) throw ConfigError("config must be a JSON object");
  }
  override_from(common.config, "seed", sub, "--seed", common.seed);
  override_from(common.config, "workers", sub, "--workers", common.workers);
  if (common.workers < 1) throw ConfigError("workers must be >= 1");
}

json log_run(const CLI::App& sub, const Common& common) {
  const std::string material = common.config.dump() + "\n" + sub.get_name() + "\n" + sub.config_to_str(true, false);
  const auto hash = fnv1a_hex(material);
  std::cerr << "[arabeval] " << sub.get_name() << " seed=" << common.seed << " config=" << hash << '\n';
  return json{{"seed", common.seed}, {"config_hash", hash}, {"command", sub.get_name()}};
}

void add_model_options(CLI::App& app, ModelOptions& opts) {
  app.add_option("--model", opts.spec, "uniform[:V] | reference | ngram:FILE | http://host:port");
  app.add_option("--vocab-size", opts.vocab_size, "Vocabulary size for the uniform model");
  app.add_option("--ref-corpus", opts.ref_corpus, "Corpus the reference n-gram model is trained on");
  app.add_option("--ref-model", opts.ref_model, "Saved reference n-gram model (JSON)");
  app.add_option("--ref-order", opts.order, "Reference n-gram order");
  app.add_option("--ref-alpha", opts.alpha, "Reference n-gram additive smoothing");
}

void resolve_model_options(CLI::App& sub, const Common& common, ModelOptions& opts) {
  const auto m = common.section("model");
  override_from(m, "spec", sub, "--model", opts.spec);
  override_from(m, "vocab_size", sub, "--vocab-size", opts.vocab_size);
  override_from(m, "ref_corpus", sub, "--ref-corpus", opts.ref_corpus);
  override_from(m, "ref_model", sub, "--ref-model", opts.ref_model);
  override_from(m, "order", sub, "--ref-order", opts.order);
  override_from(m, "alpha", sub, "--ref-alpha", opts.alpha);
  if (!given(sub, "--model")) {
    if (const char* env = std::getenv("ARABEVAL_ENDPOINT"); env != nullptr && *env != '\0') opts.spec = env;
  }
  if (opts.spec.empty()) opts.spec = "reference";
}

namespace {

std::unique_ptr<model::LanguageModel> uniform(std::size_t v) {
  if (v == 0) throw ConfigError("uniform model needs --vocab-size (or a tokenizer)");
  return std::make_unique<model::UniformModel>(v);
}

}  // namespace

std::unique_ptr<model::LanguageModel> load_model(const ModelOptions& opts, const bpe::Vocabulary* tokenizer) {
  const std::size_t tok_vocab = tokenizer != nullptr ? tokenizer->size() : 0;
  const auto& spec = opts.spec;
  if (spec.starts_with("http://") || spec.starts_with("https://")) {
    model::RemoteOptions ro;
    ro.vocab_size = opts.vocab_size != 0 ? opts.vocab_size : tok_vocab;
    return std::make_unique<model::RemoteModel>(spec, ro);
  }
  if (spec == "uniform") return uniform(opts.vocab_size != 0 ? opts.vocab_size : tok_vocab);
  if (spec.starts_with("uniform:")) {
    try {
      return uniform(std::stoull(spec.substr(8)));
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad model spec " + spec);
    }
  }
  std::string model_file = opts.ref_model;
  if (spec.starts_with("ngram:")) {
    model_file = spec.substr(6);
  } else if (spec != "reference") {
    throw ConfigError("unknown model spec \"" + spec + "\"");
  }
  if (!model_file.empty()) {
    if (!fs::exists(model_file)) throw ConfigError("model file not found: " + model_file);
    return std::make_unique<model::NGramModel>(model::NGramModel::from_json(read_json_file(model_file)));
  }
  if (!opts.ref_corpus.empty()) {
    if (tokenizer == nullptr) throw ConfigError("--ref-corpus needs --tokenizer");
    if (!fs::exists(opts.ref_corpus)) throw ConfigError("reference corpus not found: " + opts.ref_corpus);
    std::vector<TokenSequence> seqs;
    for (const auto& text : read_texts(opts.ref_corpus)) seqs.push_back(tokenizer->encode(text));
    model::NGramConfig cfg;
    cfg.order = opts.order;
    cfg.alpha = opts.alpha;
    cfg.vocab_size = tokenizer->size();
    cfg.end_of_text = tokenizer->special_id("<|endoftext|>");
    return std::make_unique<model::NGramModel>(model::NGramModel::train(seqs, cfg));
  }
  return uniform(opts.vocab_size != 0 ? opts.vocab_size : tok_vocab);
}

std::vector<std::string> read_texts(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("input not found: " + path.string());
  if (path.extension() != ".jsonl") return read_lines(path);
  std::vector<std::string> out;
  for (const auto& j : read_jsonl(path)) {
    if (j.contains("body")) {
      out.push_back(j.at("body").get<std::string>());
    } else if (j.contains("text")) {
      out.push_back(j.at("text").get<std::string>());
    } else {
      throw Error(path.string() + ": record without \"body\" or \"text\"");
    }
  }
  return out;
}

void write_report(const std::string& path, const json& report) {
  if (path.empty()) return;
  write_json_file(path, report);
}

}  // namespace arabeval::cli
