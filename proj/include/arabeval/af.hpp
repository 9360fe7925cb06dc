#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arabeval/eval.hpp"
#include "arabeval/jsonl.hpp"
#include "arabeval/model.hpp"
#include "arabeval/tokens.hpp"

namespace arabeval::af {

using model::SamplingParams;

inline constexpr std::size_t kGeneratedPerRecord = 3;

struct AFInput {
  std::string context;
  std::string real_ending;
};

struct AFRecord {
  std::string context;
  std::string real_ending;
  std::array<std::string, kGeneratedPerRecord> generated;
  std::array<std::size_t, kGeneratedPerRecord> replacements{};
};

struct AFState {
  std::vector<AFRecord> records;
  std::size_t iteration = 0;
  std::vector<double> accuracy_trace;  // fractions in [0, 1], one per iteration
  std::uint64_t seed = 0;
  bool converged = false;
  std::string stop_reason;  // "", "converged" or "max_iterations"

  // Versioned checkpoint.
  json to_json() const;
  static AFState from_json(const json& j);
};

class EndingGenerator {
 public:
  virtual ~EndingGenerator() = default;
  // n non-empty endings; a pure function of (context, params). Must be safe
  // to call concurrently.
  virtual std::vector<std::string> generate(std::string_view context, const SamplingParams& params,
                                            std::size_t n) const = 0;
};

struct LabeledEnding {
  std::string_view context;
  std::string_view ending;
  bool generated = false;
};

class EndingDiscriminator {
 public:
  virtual ~EndingDiscriminator() = default;
  virtual void fit(std::span<const LabeledEnding> data) = 0;
  // P(generated) in [0, 1]; called concurrently after fit().
  virtual double predict_proba(std::string_view context, std::string_view ending) const = 0;
};

struct AFConfig {
  std::size_t train_parts = 8;
  std::size_t test_parts = 2;
  double threshold = 0.75;  // endings at or above this P(generated) are "easy"
  std::size_t window = 3;
  double epsilon = 0.02;
  std::size_t max_iterations = 10;
  SamplingParams generator_params{};  // top_k 50, top_p 0.95
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;  // throws ConfigError
  json to_json() const;
  static AFConfig from_json(const json& j);
};

// Initial generations. A record whose generation fails is dropped and
// reported through `log`.
AFState af_initialize(std::span<const AFInput> inputs, const EndingGenerator& generator,
                      const AFConfig& config, std::vector<std::string>* log = nullptr);

struct Replacement {
  std::size_t record = 0;
  std::size_t ending = 0;
  double probability = 0.0;
  std::string before;
  std::string after;
};

struct IterationOutcome {
  AFState state;
  double accuracy = 0.0;
  std::vector<std::size_t> test_records;
  std::vector<Replacement> replacements;
};

// One round: seeded 8:2 re-split, fit on train endings, balanced accuracy on
// test endings at P = 0.5, regenerate every test ending with P >= threshold.
// The input state is never modified, so a failed fit leaves it intact.
IterationOutcome af_iteration(const AFState& state, EndingDiscriminator& discriminator,
                              const EndingGenerator& generator, const AFConfig& config);

// True once the last `window` accuracies span less than epsilon.
bool has_converged(std::span<const double> trace, std::size_t window, double epsilon);

using IterationHook = std::function<void(const IterationOutcome&)>;

// Iterates until convergence or config.max_iterations total iterations
// (counted from state.iteration, so resumed runs keep their budget).
AFState af_run(AFState state, EndingDiscriminator& discriminator, const EndingGenerator& generator,
               const AFConfig& config, const IterationHook& on_iteration = {});

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
};

// train = round(n * f_train), dev = round(n * f_dev), test takes the rest.
SplitSizes split_sizes(std::size_t n, const SplitFractions& fractions);

struct McqSplit {
  std::vector<eval::McqItem> train;
  std::vector<eval::McqItem> dev;
  std::vector<eval::McqItem> test;
};

// Disjoint seeded split; each record's four endings are shuffled and the
// real ending's position recorded as gold.
McqSplit af_split(const AFState& state, const SplitFractions& fractions, std::uint64_t seed);

// ------------------------------------------------------------ built-ins

// Logistic regression over hashed character 3-grams of the ending, class
// weighted so both labels carry equal total weight. Deterministic.
class NgramDiscriminator final : public EndingDiscriminator {
 public:
  struct Options {
    std::size_t buckets = 1u << 18;
    std::size_t epochs = 6;
    double learning_rate = 0.5;
    double l2 = 1e-6;
    std::uint64_t seed = 0;
  };

  NgramDiscriminator() : NgramDiscriminator(Options{}) {}
  explicit NgramDiscriminator(Options options);

  void fit(std::span<const LabeledEnding> data) override;
  double predict_proba(std::string_view context, std::string_view ending) const override;

 private:
  struct Feature {
    std::uint32_t bucket;
    float value;
  };
  std::vector<Feature> features(std::string_view ending) const;

  Options options_;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

// Endings from a language model continuing the context.
class ModelGenerator final : public EndingGenerator {
 public:
  ModelGenerator(const model::LanguageModel& model, const Tokenizer& tokenizer, std::size_t max_attempts = 4);
  std::vector<std::string> generate(std::string_view context, const SamplingParams& params,
                                    std::size_t n) const override;

 private:
  const model::LanguageModel& model_;
  const Tokenizer& tokenizer_;
  std::size_t max_attempts_;
};

// Desk-scale stub: endings are random word sequences drawn from a fixed
// list, optionally carrying a watermark token. Words per ending come from
// params.max_tokens (clamped to [1, 8]).
class WordListGenerator final : public EndingGenerator {
 public:
  WordListGenerator(std::vector<std::string> words, std::optional<std::string> watermark = std::nullopt);
  std::vector<std::string> generate(std::string_view context, const SamplingParams& params,
                                    std::size_t n) const override;

 private:
  std::vector<std::string> words_;
  std::optional<std::string> watermark_;
};

// P = constant, whatever the input.
class ConstantDiscriminator final : public EndingDiscriminator {
 public:
  explicit ConstantDiscriminator(double p) : p_(p) {}
  void fit(std::span<const LabeledEnding>) override {}
  double predict_proba(std::string_view, std::string_view) const override { return p_; }

 private:
  double p_;
};

// P = 1 when the ending contains the marker, else 0.
class MarkerDiscriminator final : public EndingDiscriminator {
 public:
  explicit MarkerDiscriminator(std::string marker) : marker_(std::move(marker)) {}
  void fit(std::span<const LabeledEnding>) override {}
  double predict_proba(std::string_view, std::string_view ending) const override {
    return ending.find(marker_) != std::string_view::npos ? 1.0 : 0.0;
  }

 private:
  std::string marker_;
};

}  // namespace arabeval::af
