#include "arabeval/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "arabeval/error.hpp"
#include "arabeval/rng.hpp"
#include "arabeval/unicode.hpp"

namespace arabeval::eval {

namespace {

DocPerplexity score_doc(const LanguageModel& model, const TokenSequence& doc, std::size_t index) {
  const auto lp = model.logprobs(doc);
  double sum = 0.0;
  for (double v : lp) sum += v;
  return {index, doc.size(), sum, std::exp(-sum / static_cast<double>(doc.size()))};
}

PerplexityReport reduce(std::vector<std::optional<DocPerplexity>>&& scored) {
  PerplexityReport r;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (!scored[i]) {
      r.skipped.push_back(i);
      continue;
    }
    r.total_tokens += scored[i]->tokens;
    r.total_logprob += scored[i]->sum_logprob;
    r.docs.push_back(*scored[i]);
  }
  if (r.total_tokens > 0) {
    r.corpus_perplexity = std::exp(-r.total_logprob / static_cast<double>(r.total_tokens));
  }
  return r;
}

template <typename F>
void for_each_item(std::size_t n, int workers, F&& body) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::string> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
}

}  // namespace

json PerplexityReport::to_json() const {
  json items = json::array();
  for (const auto& d : docs) {
    items.push_back({{"index", d.index}, {"tokens", d.tokens}, {"sum_logprob", d.sum_logprob},
                     {"perplexity", d.perplexity}});
  }
  return json{{"task", "ppl"},
              {"metric", "perplexity"},
              {"value", corpus_perplexity},
              {"total_tokens", total_tokens},
              {"total_logprob", total_logprob},
              {"skipped", skipped},
              {"items", items}};
}

PerplexityReport perplexity_serial(const LanguageModel& model, std::span<const TokenSequence> docs) {
  std::vector<std::optional<DocPerplexity>> scored(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].empty()) scored[i] = score_doc(model, docs[i], i);
  }
  return reduce(std::move(scored));
}

PerplexityReport perplexity_parallel(const LanguageModel& model, std::span<const TokenSequence> docs) {
  std::vector<std::optional<DocPerplexity>> scored(docs.size());
  std::vector<std::string> errors(docs.size());
  const auto n = static_cast<std::ptrdiff_t>(docs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (docs[k].empty()) continue;
    try {
      scored[k] = score_doc(model, docs[k], k);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  return reduce(std::move(scored));
}

std::string render_template(std::string_view template_text, std::string_view input) {
  static constexpr std::string_view kSlot = "{input}";
  std::string out;
  std::size_t pos = 0;
  bool found = false;
  while (true) {
    const auto at = template_text.find(kSlot, pos);
    if (at == std::string_view::npos) break;
    out.append(template_text.substr(pos, at - pos));
    out.append(input);
    pos = at + kSlot.size();
    found = true;
  }
  out.append(template_text.substr(pos));
  if (!found) throw ConfigError("prompt template has no {input} slot");
  return out;
}

std::string build_prompt(const PromptSpec& spec, std::string_view instance) {
  if (spec.demonstrations.size() != spec.k_shots) {
    throw ConfigError("prompt spec: " + std::to_string(spec.demonstrations.size()) +
                      " demonstrations for k=" + std::to_string(spec.k_shots));
  }
  for (const auto& d : spec.demonstrations) {
    if (d.input == instance) throw Error("leakage");
  }
  std::vector<std::size_t> order(spec.k_shots);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.shot_seed);
  rng.shuffle(order);

  std::string out;
  for (auto i : order) {
    const auto& d = spec.demonstrations[i];
    out += render_template(spec.template_text, d.input);
    out += spec.answer_separator;
    out += d.target;
    out += spec.separator;
  }
  out += render_template(spec.template_text, instance);
  return out;
}

std::vector<Demonstration> select_demonstrations(std::span<const Demonstration> pool, std::size_t k,
                                                 std::uint64_t seed, std::optional<std::size_t> exclude,
                                                 std::string_view instance) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if ((exclude && *exclude == i) || pool[i].input == instance) continue;
    eligible.push_back(i);
  }
  if (eligible.size() < k) {
    throw Error("only " + std::to_string(eligible.size()) + " demonstrations available for k=" +
                std::to_string(k));
  }
  Rng rng(seed);
  rng.shuffle(eligible);
  std::vector<Demonstration> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[eligible[i]]);
  return out;
}

double lms_score(const LanguageModel& model, const Tokenizer& tok, std::string_view context,
                 std::string_view candidate, LmsMode mode) {
  const auto cand = tok.encode(candidate);
  if (cand.empty()) throw Error("empty candidate");
  auto seq = tok.encode(context);
  const std::size_t offset = seq.size();
  seq.insert(seq.end(), cand.begin(), cand.end());
  const auto lp = model.logprobs(seq);
  double sum = 0.0;
  for (std::size_t i = offset; i < lp.size(); ++i) sum += lp[i];
  return mode == LmsMode::kMeanLogprob ? sum / static_cast<double>(cand.size()) : sum;
}

void McqItem::validate() const {
  if (endings.size() != 4) throw Error("mcq item needs 4 endings, got " + std::to_string(endings.size()));
  if (gold >= endings.size()) throw Error("mcq gold index out of range");
  if (!is_real.empty()) {
    if (is_real.size() != endings.size()) throw Error("mcq provenance size mismatch");
    if (std::count(is_real.begin(), is_real.end(), true) != 1 || !is_real[gold]) {
      throw Error("mcq item must mark exactly the gold ending as real");
    }
  }
}

json McqItem::to_json() const {
  json j{{"context", context}, {"endings", endings}, {"gold", gold}};
  if (!is_real.empty()) {
    json prov = json::array();
    for (bool r : is_real) prov.push_back(r ? "real" : "generated");
    j["provenance"] = prov;
  }
  return j;
}

McqItem McqItem::from_json(const json& j) {
  McqItem item;
  try {
    item.context = j.at("context").get<std::string>();
    item.endings = j.at("endings").get<std::vector<std::string>>();
    item.gold = j.at("gold").get<std::size_t>();
    if (j.contains("provenance")) {
      for (const auto& p : j.at("provenance")) item.is_real.push_back(p.get<std::string>() == "real");
    }
  } catch (const json::exception& e) {
    throw Error(std::string("mcq record: ") + e.what());
  }
  item.validate();
  return item;
}

McqDecision pick_highest(std::span<const double> scores) {
  McqDecision d;
  d.scores.assign(scores.begin(), scores.end());
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[d.chosen]) d.chosen = i;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i != d.chosen && scores[i] == scores[d.chosen]) d.tie = true;
  }
  return d;
}

McqDecision score_mcq(const LanguageModel& model, const Tokenizer& tok, const McqItem& item, LmsMode mode) {
  item.validate();
  std::vector<double> scores;
  for (const auto& e : item.endings) {
    const std::string cand = item.context.empty() ? e : " " + e;
    scores.push_back(lms_score(model, tok, item.context, cand, mode));
  }
  return pick_highest(scores);
}

json EvalReport::to_json() const {
  return json{{"task", task},   {"shots", shots},       {"metric", metric},
              {"value", value}, {"secondary", secondary}, {"seed", seed},
              {"model", model_id}, {"items", items}};
}

double exact_match(std::span<const std::string> preds, std::span<const std::string> golds) {
  if (preds.size() != golds.size()) throw Error("prediction/gold length mismatch");
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

double macro_f1(std::span<const std::string> preds, std::span<const std::string> golds,
                std::span<const std::string> label_set) {
  if (preds.size() != golds.size()) throw Error("prediction/gold length mismatch");
  if (label_set.empty()) throw Error("empty label set");
  double total = 0.0;
  for (const auto& label : label_set) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i] == label;
      const bool g = golds[i] == label;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    total += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return 100.0 * total / static_cast<double>(label_set.size());
}

double char_f1(std::string_view pred, std::string_view gold) {
  const auto p = unicode::decode(pred);
  const auto g = unicode::decode(gold);
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 100.0 : 0.0;
  std::multiset<char32_t> gs(g.begin(), g.end());
  std::size_t common = 0;
  for (char32_t c : p) {
    auto it = gs.find(c);
    if (it != gs.end()) {
      ++common;
      gs.erase(it);
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

std::string first_word(std::string_view text) {
  const auto cps = unicode::decode(text);
  std::size_t i = 0;
  while (i < cps.size() && unicode::is_whitespace(cps[i])) ++i;
  std::size_t j = i;
  while (j < cps.size() && !unicode::is_whitespace(cps[j])) ++j;
  return unicode::encode(std::u32string_view(cps).substr(i, j - i));
}

double recompute_metric(const EvalReport& report) {
  if (report.metric == "exact_match") {
    std::vector<std::string> preds, golds;
    for (const auto& it : report.items) {
      preds.push_back(it.at("prediction").get<std::string>());
      golds.push_back(it.at("target").get<std::string>());
    }
    return exact_match(preds, golds);
  }
  if (report.metric == "macro_f1") {
    std::vector<std::string> preds, golds, labels;
    for (const auto& it : report.items) {
      preds.push_back(it.at("prediction").get<std::string>());
      golds.push_back(it.at("gold").get<std::string>());
      if (labels.empty()) labels = it.at("label_set").get<std::vector<std::string>>();
    }
    return macro_f1(preds, golds, labels);
  }
  if (report.metric == "accuracy") {
    std::vector<std::string> preds, golds;
    for (const auto& it : report.items) {
      preds.push_back(std::to_string(it.at("chosen").get<std::size_t>()));
      golds.push_back(std::to_string(it.at("gold").get<std::size_t>()));
    }
    return exact_match(preds, golds);
  }
  throw Error("cannot recompute metric " + report.metric);
}

namespace {

PromptSpec spec_for(const RunConfig& c, std::vector<Demonstration> demos, std::size_t item) {
  PromptSpec s;
  s.k_shots = c.k_shots;
  s.demonstrations = std::move(demos);
  s.template_text = c.template_text;
  s.answer_separator = c.answer_separator;
  s.separator = c.separator;
  s.shot_seed = mix_seed(c.seed, item);
  return s;
}

}  // namespace

EvalReport run_autocomplete(const LanguageModel& model, const Tokenizer& tok,
                            std::span<const AutocompleteItem> dataset, const RunConfig& config) {
  std::vector<Demonstration> pool;
  for (const auto& d : dataset) {
    if (d.target.empty()) throw Error("autocomplete item with empty target");
    pool.push_back({d.text, d.target});
  }
  std::vector<json> records(dataset.size());
  std::vector<std::string> preds(dataset.size());
  std::vector<double> f1s(dataset.size());
  for_each_item(dataset.size(), config.workers, [&](std::size_t i) {
    const auto& item = dataset[i];
    auto demos = select_demonstrations(pool, config.k_shots, mix_seed(config.seed, i), i, item.text);
    const auto prompt = build_prompt(spec_for(config, std::move(demos), i), item.text);
    auto params = model::SamplingParams::greedy(config.max_tokens);
    params.seed = config.seed;
    const auto gen = model.generate(tok.encode(prompt), params);
    const auto text = gen.empty() ? std::string() : tok.decode(gen.front());
    const auto pred = first_word(text);
    preds[i] = pred;
    f1s[i] = char_f1(pred, item.target);
    records[i] = json{{"index", i},
                      {"prediction", pred},
                      {"target", item.target},
                      {"correct", pred == item.target},
                      {"char_f1", f1s[i]},
                      {"flagged", pred.empty()}};
  });
  std::vector<std::string> golds;
  for (const auto& d : dataset) golds.push_back(d.target);
  EvalReport r;
  r.task = "autocomplete";
  r.shots = config.k_shots;
  r.metric = "exact_match";
  r.value = exact_match(preds, golds);
  double f1 = 0.0;
  for (double v : f1s) f1 += v;
  r.secondary["char_f1"] = dataset.empty() ? 0.0 : f1 / static_cast<double>(dataset.size());
  r.items = std::move(records);
  r.seed = config.seed;
  r.model_id = model.id();
  return r;
}

EvalReport run_classification(const LanguageModel& model, const Tokenizer& tok,
                              std::span<const ClassificationItem> dataset,
                              const std::vector<std::string>& label_set, const RunConfig& config,
                              const std::map<std::string, std::string>& verbalizers) {
  if (label_set.empty()) throw ConfigError("empty label set");
  for (const auto& d : dataset) {
    if (std::find(label_set.begin(), label_set.end(), d.label) == label_set.end()) {
      throw Error("unknown label \"" + d.label + "\"");
    }
  }
  auto verbalize = [&](const std::string& label) {
    auto it = verbalizers.find(label);
    return it == verbalizers.end() ? label : it->second;
  };
  std::vector<Demonstration> pool;
  for (const auto& d : dataset) pool.push_back({d.text, verbalize(d.label)});

  std::vector<json> records(dataset.size());
  std::vector<std::string> preds(dataset.size());
  for_each_item(dataset.size(), config.workers, [&](std::size_t i) {
    const auto& item = dataset[i];
    auto demos = select_demonstrations(pool, config.k_shots, mix_seed(config.seed, i), i, item.text);
    const auto prompt = build_prompt(spec_for(config, std::move(demos), i), item.text);
    std::vector<double> scores;
    for (const auto& label : label_set) {
      scores.push_back(lms_score(model, tok, prompt, config.answer_separator + verbalize(label), config.lms_mode));
    }
    const auto d = pick_highest(scores);
    preds[i] = label_set[d.chosen];
    records[i] = json{{"index", i},       {"prediction", preds[i]}, {"gold", item.label},
                      {"scores", scores}, {"tie", d.tie},           {"label_set", label_set}};
  });
  std::vector<std::string> golds;
  for (const auto& d : dataset) golds.push_back(d.label);
  EvalReport r;
  r.task = "classify";
  r.shots = config.k_shots;
  r.metric = "macro_f1";
  r.value = macro_f1(preds, golds, label_set);
  r.secondary["accuracy"] = exact_match(preds, golds);
  r.items = std::move(records);
  r.seed = config.seed;
  r.model_id = model.id();
  return r;
}

EvalReport run_mcq(const LanguageModel& model, const Tokenizer& tok, std::span<const McqItem> items,
                   const RunConfig& config) {
  std::vector<Demonstration> pool;
  for (const auto& it : items) {
    it.validate();
    pool.push_back({it.context, it.endings[it.gold]});
  }
  std::vector<json> records(items.size());
  std::vector<std::string> preds(items.size()), golds(items.size());
  std::size_t ties = 0;
  std::vector<char> tied(items.size(), 0);
  for_each_item(items.size(), config.workers, [&](std::size_t i) {
    McqItem item = items[i];
    if (config.k_shots > 0) {
      auto demos = select_demonstrations(pool, config.k_shots, mix_seed(config.seed, i), i, item.context);
      PromptSpec spec = spec_for(config, std::move(demos), i);
      item.context = build_prompt(spec, item.context);
    }
    const auto d = score_mcq(model, tok, item, config.lms_mode);
    preds[i] = std::to_string(d.chosen);
    golds[i] = std::to_string(item.gold);
    tied[i] = d.tie;
    records[i] = json{{"index", i}, {"chosen", d.chosen}, {"gold", item.gold}, {"scores", d.scores}, {"tie", d.tie}};
  });
  for (char t : tied) ties += t;
  EvalReport r;
  r.task = "mcq";
  r.shots = config.k_shots;
  r.metric = "accuracy";
  r.value = exact_match(preds, golds);
  const std::vector<std::string> positions{"0", "1", "2", "3"};
  r.secondary["macro_f1"] = macro_f1(preds, golds, positions);
  r.secondary["ties"] = static_cast<double>(ties);
  r.items = std::move(records);
  r.seed = config.seed;
  r.model_id = model.id();
  return r;
}

}  // namespace arabeval::eval
