#pragma once

#include <span>
#include <vector>

#include "arabeval/model.hpp"
#include "arabeval/rng.hpp"

namespace arabeval::model {

struct Candidate {
  TokenId id;
  double prob;  // renormalized over the candidate set
};

// Applies temperature, then keeps the top_k most probable tokens
// intersected with the smallest prefix whose mass reaches top_p, and
// renormalizes. Order: probability descending, id ascending.
std::vector<Candidate> candidate_set(std::span<const double> probs, const SamplingParams& params);

TokenId draw(std::span<const Candidate> candidates, Rng& rng);

}  // namespace arabeval::model
