#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "arabeval/tokens.hpp"

namespace arabeval::bpe {

inline constexpr std::size_t kByteAlphabet = 256;
inline constexpr std::size_t kDefaultVocabSize = 64000;

std::vector<std::string> default_special_tokens();  // <URL>, <USER>, <|endoftext|>

struct Merge {
  TokenId left;
  TokenId right;
  TokenId result;

  friend bool operator==(const Merge&, const Merge&) = default;
};

// Splits text into pre-token chunks: an optional single leading space plus a
// run of non-space bytes, or a run of whitespace. Merges never cross chunks.
std::vector<std::string_view> pretokenize(std::string_view text);

// Byte-level BPE vocabulary. Ids: 0..255 are bytes, then special tokens in
// the order given, then merge results in creation order. Immutable once
// built and safe to share between threads.
class Vocabulary final : public Tokenizer {
 public:
  std::size_t size() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::vector<std::string>& special_tokens() const { return specials_; }
  // Raw bytes of a token.
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::optional<TokenId> id_of(std::string_view token) const;
  std::optional<TokenId> special_id(std::string_view token) const;

  TokenSequence encode(std::string_view text) const override;
  // Throws Error("unknown token id") for an id outside the vocabulary.
  std::string decode(std::span<const TokenId> ids) const override;

  // Plain-text artifacts: merges are "left right" per line, the vocab is
  // "token<TAB>id" per line. Tokens use the GPT-2 printable byte mapping.
  std::string merges_text() const;
  std::string vocab_text() const;
  static Vocabulary from_text(std::string_view merges_text, std::string_view vocab_text);

  void save(const std::filesystem::path& dir) const;  // merges.txt + vocab.txt
  static Vocabulary load(const std::filesystem::path& dir);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.specials_ == b.specials_ && a.merges_ == b.merges_;
  }

 private:
  friend class Builder;
  std::vector<std::string> tokens_;
  std::vector<std::string> specials_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, TokenId> index_;
  // (left << 32 | right) -> merge rank
  std::unordered_map<std::uint64_t, std::uint32_t> rank_;

  void encode_chunk(std::string_view chunk, TokenSequence& out) const;
};

std::size_t base_vocab_size(std::size_t n_special);

// Trains a vocabulary of exactly vocab_size tokens. Pair ties are broken by
// the byte-lexicographic order of (left, right). Errors on an empty corpus,
// vocab_size < base alphabet + specials, or a corpus that runs out of pairs.
Vocabulary train(std::span<const std::string> corpus, std::size_t vocab_size,
                 const std::vector<std::string>& special_tokens = default_special_tokens());

// Recounts every pair after every merge. Quadratic; kept as the serial
// reference the incremental trainer is checked against.
Vocabulary train_reference(std::span<const std::string> corpus, std::size_t vocab_size,
                           const std::vector<std::string>& special_tokens = default_special_tokens());

// Chunk frequencies over the corpus with special tokens removed. The
// parallel kernel is what train() uses.
std::vector<std::pair<std::string, std::uint64_t>> count_chunks_serial(
    std::span<const std::string> corpus, const std::vector<std::string>& special_tokens);
std::vector<std::pair<std::string, std::uint64_t>> count_chunks_parallel(
    std::span<const std::string> corpus, const std::vector<std::string>& special_tokens);

// GPT-2 byte <-> printable code point mapping used by the text artifacts.
std::string bytes_to_printable(std::string_view bytes);
std::string printable_to_bytes(std::string_view printable);

}  // namespace arabeval::bpe
