#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace arabeval {

using TokenId = std::uint32_t;
// A document as vocabulary ids, w_1 .. w_n.
using TokenSequence = std::vector<TokenId>;

// Text <-> ids, as needed by the evaluators.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenSequence encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
};

}  // namespace arabeval
