#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <span>
#include <string>
#include <vector>

#include "arabeval/jsonl.hpp"
#include "arabeval/tokens.hpp"

namespace arabeval::model {

struct SamplingParams {
  std::size_t top_k = 50;
  double top_p = 0.95;
  std::size_t max_tokens = 32;
  std::size_t n_samples = 1;
  std::uint64_t seed = 0;
  double temperature = 1.0;

  static SamplingParams greedy(std::size_t max_tokens);

  void validate() const;  // throws ConfigError
  json to_json() const;
  static SamplingParams from_json(const json& j);
};

// Every evaluator talks to models through this interface. Implementations
// are immutable after construction and safe to call concurrently.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::string id() const = 0;
  virtual std::size_t vocab_size() const = 0;

  // log p(w_i | w_<i) for each position; w_1 conditions on begin-of-sequence.
  // Throws Error on an empty sequence.
  virtual std::vector<double> logprobs(std::span<const TokenId> seq) const = 0;

  // params.n_samples continuations (prompt excluded). Sample i draws from
  // its own stream seeded by (params.seed, i), so output is a pure function
  // of (prompt, params).
  virtual std::vector<TokenSequence> generate(std::span<const TokenId> prompt,
                                              const SamplingParams& params) const = 0;
};

// A model that can hand out its whole next-token distribution; generation
// is the shared top-k/top-p sampler applied to it.
class DistributionModel : public LanguageModel {
 public:
  virtual std::vector<double> next_distribution(std::span<const TokenId> context) const = 0;
  // Generation stops (exclusively) when this token is drawn.
  virtual std::optional<TokenId> end_of_text() const { return std::nullopt; }

  std::vector<double> logprobs(std::span<const TokenId> seq) const override;
  std::vector<TokenSequence> generate(std::span<const TokenId> prompt,
                                      const SamplingParams& params) const override;
};

class UniformModel final : public DistributionModel {
 public:
  explicit UniformModel(std::size_t vocab_size);

  std::string id() const override;
  std::size_t vocab_size() const override { return vocab_size_; }
  std::vector<double> logprobs(std::span<const TokenId> seq) const override;
  std::vector<double> next_distribution(std::span<const TokenId> context) const override;

 private:
  std::size_t vocab_size_;
};

struct NGramConfig {
  std::size_t order = 3;
  double alpha = 0.1;
  std::size_t vocab_size = 0;
  // Appended to every training sequence and used as the generation stop token.
  std::optional<TokenId> end_of_text;

  void validate() const;
};

// Additive smoothing with backoff to the longest context that was observed:
//   p(w | c) = (count(c, w) + alpha) / (count(c) + alpha * |V|)
// Contexts are padded with a reserved begin-of-sequence symbol.
class NGramModel final : public DistributionModel {
 public:
  static NGramModel train(std::span<const TokenSequence> corpus, const NGramConfig& config);

  std::string id() const override;
  std::size_t vocab_size() const override { return config_.vocab_size; }
  std::optional<TokenId> end_of_text() const override { return config_.end_of_text; }
  const NGramConfig& config() const { return config_; }

  // p(w | history), using the last order-1 tokens of the history.
  double prob(std::span<const TokenId> history, TokenId w) const;

  std::vector<double> logprobs(std::span<const TokenId> seq) const override;
  std::vector<double> next_distribution(std::span<const TokenId> context) const override;

  json to_json() const;
  static NGramModel from_json(const json& j);

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::vector<std::pair<TokenId, std::uint64_t>> next;  // sorted by token id
    std::uint64_t count(TokenId w) const;
  };

  const ContextStats* longest_context(std::span<const TokenId> history) const;

  NGramConfig config_;
  // Packed context ids (begin-of-sequence = UINT32_MAX) -> stats.
  std::unordered_map<std::string, ContextStats> table_;
};

inline constexpr TokenId kBeginOfSequence = UINT32_MAX;

}  // namespace arabeval::model
