#include "arabeval/af.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "arabeval/error.hpp"
#include "arabeval/rng.hpp"
#include "arabeval/unicode.hpp"

namespace arabeval::af {

namespace {

constexpr std::string_view kStateFormat = "arabeval-af-state-1";

// Seed streams kept apart from one another.
constexpr std::uint64_t kInitStream = 0x1001;
constexpr std::uint64_t kSplitStream = 0x2002;
constexpr std::uint64_t kRegenStream = 0x3003;

std::uint64_t fnv64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string trim(std::string_view s) {
  const auto cps = unicode::decode(s);
  std::size_t b = 0, e = cps.size();
  while (b < e && unicode::is_whitespace(cps[b])) ++b;
  while (e > b && unicode::is_whitespace(cps[e - 1])) --e;
  return unicode::encode(std::u32string_view(cps).substr(b, e - b));
}

// Exceptions cannot leave an OpenMP region; the first one is rethrown after.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& body) {
  std::vector<std::string> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers) if (workers > 1)
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

// ------------------------------------------------------------------- state

json AFState::to_json() const {
  json recs = json::array();
  for (const auto& r : records) {
    recs.push_back({{"context", r.context},
                    {"real_ending", r.real_ending},
                    {"generated_endings", r.generated},
                    {"replacements", r.replacements}});
  }
  return json{{"format", kStateFormat},   {"seed", seed},
              {"iteration", iteration},   {"accuracy_trace", accuracy_trace},
              {"converged", converged},   {"stop_reason", stop_reason},
              {"records", recs}};
}

AFState AFState::from_json(const json& j) {
  try {
    if (j.at("format") != kStateFormat) throw ConfigError("unsupported AF checkpoint format");
    AFState s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.iteration = j.at("iteration").get<std::size_t>();
    s.accuracy_trace = j.at("accuracy_trace").get<std::vector<double>>();
    s.converged = j.value("converged", false);
    s.stop_reason = j.value("stop_reason", "");
    if (s.accuracy_trace.size() != s.iteration) throw ConfigError("AF checkpoint: trace length != iteration");
    for (const auto& r : j.at("records")) {
      AFRecord rec;
      rec.context = r.at("context").get<std::string>();
      rec.real_ending = r.at("real_ending").get<std::string>();
      const auto gen = r.at("generated_endings").get<std::vector<std::string>>();
      if (gen.size() != kGeneratedPerRecord) throw ConfigError("AF checkpoint: record without 3 generated endings");
      std::copy(gen.begin(), gen.end(), rec.generated.begin());
      if (r.contains("replacements")) {
        const auto reps = r.at("replacements").get<std::vector<std::size_t>>();
        if (reps.size() != kGeneratedPerRecord) throw ConfigError("AF checkpoint: bad replacement counts");
        std::copy(reps.begin(), reps.end(), rec.replacements.begin());
      }
      s.records.push_back(std::move(rec));
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("AF checkpoint: ") + e.what());
  }
}

// ------------------------------------------------------------------ config

void AFConfig::validate() const {
  if (train_parts == 0 || test_parts == 0) throw ConfigError("af: split parts must be positive");
  if (!(threshold > 0.5 && threshold <= 1.0)) throw ConfigError("af: threshold must lie in (0.5, 1]");
  if (window == 0) throw ConfigError("af: window must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("af: epsilon must be positive");
  if (max_iterations == 0) throw ConfigError("af: max_iterations must be >= 1");
  if (workers < 1) throw ConfigError("af: workers must be >= 1");
  generator_params.validate();
}

json AFConfig::to_json() const {
  return json{{"split", {train_parts, test_parts}}, {"threshold", threshold},
              {"window", window},                   {"epsilon", epsilon},
              {"max_iterations", max_iterations},   {"generator", generator_params.to_json()},
              {"seed", seed},                       {"workers", workers}};
}

AFConfig AFConfig::from_json(const json& j) {
  AFConfig c;
  try {
    if (j.contains("split")) {
      const auto parts = j.at("split").get<std::vector<std::size_t>>();
      if (parts.size() != 2) throw ConfigError("af: split must be [train, test]");
      c.train_parts = parts[0];
      c.test_parts = parts[1];
    }
    c.threshold = j.value("threshold", c.threshold);
    c.window = j.value("window", c.window);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    if (j.contains("generator")) c.generator_params = SamplingParams::from_json(j.at("generator"));
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("af config: ") + e.what());
  }
  c.validate();
  return c;
}

// -------------------------------------------------------------- operations

AFState af_initialize(std::span<const AFInput> inputs, const EndingGenerator& generator, const AFConfig& config,
                      std::vector<std::string>* log) {
  config.validate();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].context.empty()) throw Error("af: record " + std::to_string(i) + " has an empty context");
  }
  std::vector<std::optional<AFRecord>> built(inputs.size());
  std::vector<std::string> failures(inputs.size());
  parallel_for(inputs.size(), config.workers, [&](std::size_t i) {
    auto params = config.generator_params;
    params.seed = mix_seed(mix_seed(config.seed, kInitStream), i);
    try {
      auto endings = generator.generate(inputs[i].context, params, kGeneratedPerRecord);
      if (endings.size() != kGeneratedPerRecord) throw Error("generator returned a wrong ending count");
      AFRecord r{inputs[i].context, inputs[i].real_ending, {}, {}};
      for (std::size_t k = 0; k < kGeneratedPerRecord; ++k) {
        if (endings[k].empty()) throw Error("generator returned an empty ending");
        r.generated[k] = std::move(endings[k]);
      }
      built[i] = std::move(r);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  AFState state;
  state.seed = config.seed;
  for (std::size_t i = 0; i < built.size(); ++i) {
    if (built[i]) {
      state.records.push_back(std::move(*built[i]));
    } else if (log != nullptr) {
      log->push_back("record " + std::to_string(i) + " dropped: " + failures[i]);
    }
  }
  return state;
}

IterationOutcome af_iteration(const AFState& state, EndingDiscriminator& discriminator,
                              const EndingGenerator& generator, const AFConfig& config) {
  config.validate();
  const std::size_t n = state.records.size();
  if (n < 2) throw Error("af: need at least 2 records to split");

  IterationOutcome out;
  out.state = state;
  auto& records = out.state.records;

  const std::uint64_t round_seed = mix_seed(mix_seed(state.seed, kSplitStream), state.iteration);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(round_seed);
  rng.shuffle(order);
  const double test_share = static_cast<double>(config.test_parts) /
                            static_cast<double>(config.train_parts + config.test_parts);
  const auto n_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_share)), 1, n - 1);
  out.test_records.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(out.test_records.begin(), out.test_records.end());
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(train.begin(), train.end());

  std::vector<LabeledEnding> data;
  data.reserve(train.size() * (kGeneratedPerRecord + 1));
  for (auto i : train) {
    const auto& r = records[i];
    data.push_back({r.context, r.real_ending, false});
    for (const auto& g : r.generated) data.push_back({r.context, g, true});
  }
  discriminator.fit(data);

  // Score every test ending; collect the easy ones.
  const auto& test = out.test_records;
  std::vector<double> p_real(test.size());
  std::vector<std::array<double, kGeneratedPerRecord>> p_gen(test.size());
  parallel_for(test.size(), config.workers, [&](std::size_t t) {
    const auto& r = records[test[t]];
    p_real[t] = discriminator.predict_proba(r.context, r.real_ending);
    for (std::size_t k = 0; k < kGeneratedPerRecord; ++k) p_gen[t][k] = discriminator.predict_proba(r.context, r.generated[k]);
  });
  for (std::size_t t = 0; t < test.size(); ++t) {
    if (!(p_real[t] >= 0.0 && p_real[t] <= 1.0)) throw Error("discriminator probability outside [0, 1]");
    for (double p : p_gen[t]) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error("discriminator probability outside [0, 1]");
    }
  }

  // Balanced accuracy: mean of recall on real and on generated endings.
  std::size_t real_hits = 0, gen_hits = 0;
  for (std::size_t t = 0; t < test.size(); ++t) {
    real_hits += p_real[t] < 0.5 ? 1 : 0;
    for (double p : p_gen[t]) gen_hits += p >= 0.5 ? 1 : 0;
  }
  out.accuracy = 0.5 * (static_cast<double>(real_hits) / static_cast<double>(test.size()) +
                        static_cast<double>(gen_hits) / static_cast<double>(test.size() * kGeneratedPerRecord));

  std::vector<std::vector<Replacement>> per_record(test.size());
  std::vector<std::string> failures(test.size());
  parallel_for(test.size(), config.workers, [&](std::size_t t) {
    const std::size_t i = test[t];
    for (std::size_t k = 0; k < kGeneratedPerRecord; ++k) {
      if (p_gen[t][k] < config.threshold) continue;
      auto params = config.generator_params;
      params.seed = mix_seed(mix_seed(round_seed, kRegenStream), i * kGeneratedPerRecord + k);
      try {
        auto fresh = generator.generate(records[i].context, params, 1);
        if (fresh.size() != 1 || fresh[0].empty()) throw Error("generator returned no ending");
        per_record[t].push_back({i, k, p_gen[t][k], records[i].generated[k], std::move(fresh[0])});
      } catch (const std::exception& e) {
        failures[t] = e.what();
        return;
      }
    }
  });
  for (const auto& f : failures) {
    if (!f.empty()) throw Error("af: regeneration failed: " + f);
  }
  for (auto& reps : per_record) {
    for (auto& rep : reps) {
      records[rep.record].generated[rep.ending] = rep.after;
      ++records[rep.record].replacements[rep.ending];
      out.replacements.push_back(std::move(rep));
    }
  }

  ++out.state.iteration;
  out.state.accuracy_trace.push_back(out.accuracy);
  return out;
}

bool has_converged(std::span<const double> trace, std::size_t window, double epsilon) {
  if (window == 0 || trace.size() < window) return false;
  const auto tail = trace.last(window);
  const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
  return *hi - *lo < epsilon;
}

AFState af_run(AFState state, EndingDiscriminator& discriminator, const EndingGenerator& generator,
               const AFConfig& config, const IterationHook& on_iteration) {
  config.validate();
  state.converged = false;
  state.stop_reason.clear();
  while (true) {
    if (has_converged(state.accuracy_trace, config.window, config.epsilon)) {
      state.converged = true;
      state.stop_reason = "converged";
      return state;
    }
    if (state.iteration >= config.max_iterations) {
      state.stop_reason = "max_iterations";
      return state;
    }
    auto outcome = af_iteration(state, discriminator, generator, config);
    if (on_iteration) on_iteration(outcome);
    state = std::move(outcome.state);
  }
}

SplitSizes split_sizes(std::size_t n, const SplitFractions& f) {
  if (f.train < 0 || f.dev < 0 || f.test < 0) throw ConfigError("split fractions must be non-negative");
  if (std::abs(f.train + f.dev + f.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  SplitSizes s;
  s.train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.train));
  s.dev = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.dev));
  s.train = std::min(s.train, n);
  s.dev = std::min(s.dev, n - s.train);
  s.test = n - s.train - s.dev;
  return s;
}

McqSplit af_split(const AFState& state, const SplitFractions& fractions, std::uint64_t seed) {
  const std::size_t n = state.records.size();
  if (n < 3) throw Error("af_split: need at least 3 records, have " + std::to_string(n));
  const auto sizes = split_sizes(n, fractions);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  McqSplit out;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const auto& r = state.records[order[pos]];
    std::vector<std::pair<std::string, bool>> endings{{r.real_ending, true}};
    for (const auto& g : r.generated) endings.emplace_back(g, false);
    Rng item_rng(mix_seed(seed, order[pos]));
    item_rng.shuffle(endings);
    eval::McqItem item;
    item.context = r.context;
    for (std::size_t k = 0; k < endings.size(); ++k) {
      item.endings.push_back(endings[k].first);
      item.is_real.push_back(endings[k].second);
      if (endings[k].second) item.gold = k;
    }
    auto& bucket = pos < sizes.train ? out.train : pos < sizes.train + sizes.dev ? out.dev : out.test;
    bucket.push_back(std::move(item));
  }
  return out;
}

// --------------------------------------------------------------- built-ins

NgramDiscriminator::NgramDiscriminator(Options options) : options_(options) {
  if (options_.buckets == 0) throw ConfigError("discriminator: buckets must be positive");
}

std::vector<NgramDiscriminator::Feature> NgramDiscriminator::features(std::string_view ending) const {
  // Padded code-point trigrams, counts scaled to unit length.
  std::u32string cps = U"\x02" + unicode::decode(ending) + U"\x03";
  std::vector<std::uint32_t> buckets;
  for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
    const std::string gram = unicode::encode(std::u32string_view(cps).substr(i, 3));
    buckets.push_back(static_cast<std::uint32_t>(fnv64(gram) % options_.buckets));
  }
  std::sort(buckets.begin(), buckets.end());
  std::vector<Feature> out;
  for (auto b : buckets) {
    if (!out.empty() && out.back().bucket == b) {
      out.back().value += 1.0F;
    } else {
      out.push_back({b, 1.0F});
    }
  }
  double norm = 0.0;
  for (const auto& f : out) norm += static_cast<double>(f.value) * f.value;
  norm = std::sqrt(norm);
  for (auto& f : out) f.value = static_cast<float>(f.value / norm);
  return out;
}

void NgramDiscriminator::fit(std::span<const LabeledEnding> data) {
  std::size_t positives = 0;
  for (const auto& d : data) positives += d.generated ? 1 : 0;
  if (positives == 0 || positives == data.size()) throw Error("discriminator: training data needs both labels");

  const double w_pos = 0.5 * static_cast<double>(data.size()) / static_cast<double>(positives);
  const double w_neg = 0.5 * static_cast<double>(data.size()) / static_cast<double>(data.size() - positives);
  std::vector<std::vector<Feature>> xs;
  xs.reserve(data.size());
  for (const auto& d : data) xs.push_back(features(d.ending));

  weights_.assign(options_.buckets, 0.0);
  bias_ = 0.0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options_.seed);
  for (std::size_t epoch = 0; epoch < options_.epochs; ++epoch) {
    rng.shuffle(order);
    const double lr = options_.learning_rate / (1.0 + static_cast<double>(epoch));
    for (auto i : order) {
      double z = bias_;
      for (const auto& f : xs[i]) z += weights_[f.bucket] * f.value;
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double y = data[i].generated ? 1.0 : 0.0;
      const double g = (p - y) * (data[i].generated ? w_pos : w_neg);
      bias_ -= lr * g;
      for (const auto& f : xs[i]) {
        auto& w = weights_[f.bucket];
        w -= lr * (g * f.value + options_.l2 * w);
      }
    }
  }
}

double NgramDiscriminator::predict_proba(std::string_view, std::string_view ending) const {
  if (weights_.empty()) throw Error("discriminator used before fit");
  double z = bias_;
  for (const auto& f : features(ending)) z += weights_[f.bucket] * f.value;
  return 1.0 / (1.0 + std::exp(-z));
}

ModelGenerator::ModelGenerator(const model::LanguageModel& model, const Tokenizer& tokenizer,
                               std::size_t max_attempts)
    : model_(model), tokenizer_(tokenizer), max_attempts_(std::max<std::size_t>(1, max_attempts)) {}

std::vector<std::string> ModelGenerator::generate(std::string_view context, const SamplingParams& params,
                                                  std::size_t n) const {
  const auto prompt = tokenizer_.encode(context);
  if (prompt.empty()) throw Error("empty context");
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string ending;
    for (std::size_t attempt = 0; attempt < max_attempts_ && ending.empty(); ++attempt) {
      auto p = params;
      p.n_samples = 1;
      p.seed = mix_seed(mix_seed(params.seed, i), attempt);
      const auto sample = model_.generate(prompt, p).at(0);
      // Byte-level tokens can split a code point; decode() repairs that.
      auto text = unicode::encode(unicode::decode(tokenizer_.decode(sample)));
      if (auto nl = text.find('\n'); nl != std::string::npos) text.resize(nl);
      ending = trim(text);
    }
    if (ending.empty()) throw Error("model produced only empty endings");
    out.push_back(std::move(ending));
  }
  return out;
}

WordListGenerator::WordListGenerator(std::vector<std::string> words, std::optional<std::string> watermark)
    : words_(std::move(words)), watermark_(std::move(watermark)) {
  if (words_.empty()) throw ConfigError("word-list generator needs at least one word");
}

std::vector<std::string> WordListGenerator::generate(std::string_view context, const SamplingParams& params,
                                                     std::size_t n) const {
  const std::size_t len = std::clamp<std::size_t>(params.max_tokens, 1, 8);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(params.seed ^ fnv64(context), i));
    std::vector<std::string> picked;
    for (std::size_t w = 0; w < len; ++w) picked.push_back(words_[rng.below(words_.size())]);
    if (watermark_) picked[rng.below(len)] = *watermark_;
    std::string text;
    for (const auto& w : picked) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    out.push_back(std::move(text));
  }
  return out;
}

}  // namespace arabeval::af
