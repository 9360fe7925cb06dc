#include <cmath>

#include "arabeval/error.hpp"
#include "arabeval/model.hpp"
#include "arabeval/sampling.hpp"

namespace arabeval::model {

SamplingParams SamplingParams::greedy(std::size_t max_tokens) {
  SamplingParams p;
  p.top_k = 1;
  p.top_p = 1.0;
  p.max_tokens = max_tokens;
  return p;
}

void SamplingParams::validate() const {
  if (top_k < 1) throw ConfigError("sampling: top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("sampling: top_p must lie in (0, 1]");
  if (n_samples < 1) throw ConfigError("sampling: n_samples must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("sampling: temperature must be positive");
}

json SamplingParams::to_json() const {
  return json{{"top_k", top_k},         {"top_p", top_p}, {"max_tokens", max_tokens},
              {"n_samples", n_samples}, {"seed", seed},   {"temperature", temperature}};
}

SamplingParams SamplingParams::from_json(const json& j) {
  SamplingParams p;
  try {
    p.top_k = j.value("top_k", p.top_k);
    p.top_p = j.value("top_p", p.top_p);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    p.n_samples = j.value("n_samples", p.n_samples);
    p.seed = j.value("seed", p.seed);
    p.temperature = j.value("temperature", p.temperature);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sampling: ") + e.what());
  }
  p.validate();
  return p;
}

std::vector<double> DistributionModel::logprobs(std::span<const TokenId> seq) const {
  if (seq.empty()) throw Error("logprobs of an empty sequence");
  std::vector<double> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto dist = next_distribution(seq.first(i));
    if (seq[i] >= dist.size()) throw Error("token id outside the model vocabulary");
    out.push_back(std::log(dist[seq[i]]));
  }
  return out;
}

std::vector<TokenSequence> DistributionModel::generate(std::span<const TokenId> prompt,
                                                       const SamplingParams& params) const {
  params.validate();
  const auto stop = end_of_text();
  std::vector<TokenSequence> samples;
  samples.reserve(params.n_samples);
  for (std::size_t s = 0; s < params.n_samples; ++s) {
    Rng rng(mix_seed(params.seed, s));
    TokenSequence history(prompt.begin(), prompt.end());
    TokenSequence out;
    while (out.size() < params.max_tokens) {
      const auto probs = next_distribution(history);
      const auto cands = candidate_set(probs, params);
      const TokenId next = draw(cands, rng);
      if (stop && next == *stop) break;
      out.push_back(next);
      history.push_back(next);
    }
    samples.push_back(std::move(out));
  }
  return samples;
}

UniformModel::UniformModel(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size == 0) throw ConfigError("uniform model needs a non-empty vocabulary");
}

std::string UniformModel::id() const { return "uniform-" + std::to_string(vocab_size_); }

std::vector<double> UniformModel::logprobs(std::span<const TokenId> seq) const {
  if (seq.empty()) throw Error("logprobs of an empty sequence");
  for (auto t : seq) {
    if (t >= vocab_size_) throw Error("token id outside the model vocabulary");
  }
  return std::vector<double>(seq.size(), -std::log(static_cast<double>(vocab_size_)));
}

std::vector<double> UniformModel::next_distribution(std::span<const TokenId>) const {
  return std::vector<double>(vocab_size_, 1.0 / static_cast<double>(vocab_size_));
}

}  // namespace arabeval::model
