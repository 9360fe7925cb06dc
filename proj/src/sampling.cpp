#include "arabeval/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "arabeval/error.hpp"

namespace arabeval::model {

std::vector<Candidate> candidate_set(std::span<const double> probs, const SamplingParams& params) {
  std::vector<Candidate> all;
  all.reserve(probs.size());
  const bool tempered = params.temperature != 1.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (tempered && p > 0.0) p = std::pow(p, 1.0 / params.temperature);
    if (p > 0.0) all.push_back({static_cast<TokenId>(i), p});
  }
  if (all.empty()) throw Error("next-token distribution has no mass");

  const std::size_t k = std::min(params.top_k, all.size());
  auto by_prob = [](const Candidate& a, const Candidate& b) {
    return a.prob != b.prob ? a.prob > b.prob : a.id < b.id;
  };
  if (params.top_p >= 1.0) {
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), by_prob);
    all.resize(k);
  } else {
    std::sort(all.begin(), all.end(), by_prob);
  }

  double mass = 0.0;
  for (const auto& c : all) mass += c.prob;

  std::size_t keep = all.size();
  if (params.top_p < 1.0) {
    // Nucleus over the whole (tempered) distribution, then intersect with top-k.
    double cum = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      cum += all[i].prob / mass;
      if (cum >= params.top_p) {
        keep = i + 1;
        break;
      }
    }
    keep = std::min(keep, k);
  }
  all.resize(keep);
  double kept = 0.0;
  for (const auto& c : all) kept += c.prob;
  for (auto& c : all) c.prob /= kept;
  return all;
}

TokenId draw(std::span<const Candidate> candidates, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (const auto& c : candidates) {
    cum += c.prob;
    if (u < cum) return c.id;
  }
  return candidates.back().id;
}

}  // namespace arabeval::model
