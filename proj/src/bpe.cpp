#include "arabeval/bpe.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include "arabeval/error.hpp"
#include "arabeval/unicode.hpp"

namespace arabeval::bpe {

std::vector<std::string> default_special_tokens() { return {"<URL>", "<USER>", "<|endoftext|>"}; }

std::size_t base_vocab_size(std::size_t n_special) { return kByteAlphabet + n_special; }

namespace {

bool is_space_byte(char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

constexpr std::uint64_t pair_key(TokenId l, TokenId r) {
  return (static_cast<std::uint64_t>(l) << 32) | r;
}

struct Segment {
  std::string_view text;
  std::optional<TokenId> special;  // index into the special list when set
};

// Leftmost match wins; among specials starting at the same byte the longest.
std::vector<Segment> split_specials(std::string_view text, const std::vector<std::string>& specials) {
  std::vector<Segment> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    std::optional<TokenId> hit;
    std::size_t hit_len = 0;
    for (std::size_t s = 0; s < specials.size(); ++s) {
      const auto& sp = specials[s];
      if (sp.size() > hit_len && text.substr(i, sp.size()) == sp) {
        hit = static_cast<TokenId>(s);
        hit_len = sp.size();
      }
    }
    if (hit) {
      if (i > start) out.push_back({text.substr(start, i - start), std::nullopt});
      out.push_back({text.substr(i, hit_len), hit});
      i += hit_len;
      start = i;
    } else {
      ++i;
    }
  }
  if (start < text.size()) out.push_back({text.substr(start), std::nullopt});
  return out;
}

void validate_specials(const std::vector<std::string>& specials) {
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (specials[i].empty()) throw ConfigError("empty special token");
    for (std::size_t j = 0; j < i; ++j) {
      if (specials[i] == specials[j]) throw ConfigError("duplicate special token " + specials[i]);
    }
  }
}

const std::array<char32_t, 256>& byte_map() {
  static const std::array<char32_t, 256> table = [] {
    std::array<char32_t, 256> t{};
    std::array<bool, 256> printable{};
    for (int b = '!'; b <= '~'; ++b) printable[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) printable[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) printable[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = printable[b] ? static_cast<char32_t>(b) : next++;
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (!is_space_byte(text[i])) {
      std::size_t j = i;
      while (j < n && !is_space_byte(text[j])) ++j;
      out.push_back(text.substr(i, j - i));
      i = j;
    } else if (text[i] == ' ' && i + 1 < n && !is_space_byte(text[i + 1])) {
      std::size_t j = i + 1;
      while (j < n && !is_space_byte(text[j])) ++j;
      out.push_back(text.substr(i, j - i));
      i = j;
    } else {
      std::size_t j = i;
      while (j < n && is_space_byte(text[j])) ++j;
      // A trailing single space before a word attaches to that word.
      if (j < n && j - i > 1 && text[j - 1] == ' ') --j;
      out.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

std::string bytes_to_printable(std::string_view bytes) {
  std::string out;
  for (unsigned char b : bytes) unicode::append_utf8(out, byte_map()[b]);
  return out;
}

std::string printable_to_bytes(std::string_view printable) {
  static const std::map<char32_t, unsigned char> inverse = [] {
    std::map<char32_t, unsigned char> m;
    for (int b = 0; b < 256; ++b) m[byte_map()[b]] = static_cast<unsigned char>(b);
    return m;
  }();
  std::string out;
  for (char32_t cp : unicode::decode(printable)) {
    auto it = inverse.find(cp);
    if (it == inverse.end()) throw Error("token contains a code point outside the byte mapping");
    out.push_back(static_cast<char>(it->second));
  }
  return out;
}

class Builder {
 public:
  explicit Builder(const std::vector<std::string>& specials) {
    validate_specials(specials);
    v_.specials_ = specials;
    for (std::size_t b = 0; b < kByteAlphabet; ++b) add_token(std::string(1, static_cast<char>(b)));
    for (const auto& s : specials) add_token(s);
  }

  const std::string& token(TokenId id) const { return v_.tokens_[id]; }
  std::size_t size() const { return v_.tokens_.size(); }

  // Returns the id of left+right, creating the token when it is new.
  TokenId add_merge(TokenId l, TokenId r) {
    auto joined = v_.tokens_[l] + v_.tokens_[r];
    TokenId result;
    if (auto it = v_.index_.find(joined); it != v_.index_.end()) {
      result = it->second;
    } else {
      result = add_token(std::move(joined));
    }
    v_.rank_.emplace(pair_key(l, r), static_cast<std::uint32_t>(v_.merges_.size()));
    v_.merges_.push_back({l, r, result});
    return result;
  }

  Vocabulary finish() && { return std::move(v_); }

 private:
  TokenId add_token(std::string t) {
    const auto id = static_cast<TokenId>(v_.tokens_.size());
    v_.index_.emplace(t, id);
    v_.tokens_.push_back(std::move(t));
    return id;
  }

  Vocabulary v_;
};

std::optional<TokenId> Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<TokenId> Vocabulary::special_id(std::string_view token) const {
  for (std::size_t i = 0; i < specials_.size(); ++i) {
    if (specials_[i] == token) return static_cast<TokenId>(kByteAlphabet + i);
  }
  return std::nullopt;
}

void Vocabulary::encode_chunk(std::string_view chunk, TokenSequence& out) const {
  std::vector<TokenId> syms;
  syms.reserve(chunk.size());
  for (unsigned char b : chunk) syms.push_back(b);
  // Replays merges in training order: each step applies the lowest-ranked
  // merge above the last one applied.
  std::int64_t last = -1;
  while (syms.size() > 1) {
    std::uint32_t best = UINT32_MAX;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank_.find(pair_key(syms[i], syms[i + 1]));
      if (it != rank_.end() && static_cast<std::int64_t>(it->second) > last && it->second < best) {
        best = it->second;
      }
    }
    if (best == UINT32_MAX) break;
    const auto& m = merges_[best];
    std::vector<TokenId> next;
    next.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size(); ++i) {
      if (i + 1 < syms.size() && syms[i] == m.left && syms[i + 1] == m.right) {
        next.push_back(m.result);
        ++i;
      } else {
        next.push_back(syms[i]);
      }
    }
    syms.swap(next);
    last = best;
  }
  out.insert(out.end(), syms.begin(), syms.end());
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence out;
  std::unordered_map<std::string_view, TokenSequence> cache;
  for (const auto& seg : split_specials(text, specials_)) {
    if (seg.special) {
      out.push_back(static_cast<TokenId>(kByteAlphabet + *seg.special));
      continue;
    }
    for (auto chunk : pretokenize(seg.text)) {
      auto it = cache.find(chunk);
      if (it == cache.end()) {
        TokenSequence ids;
        encode_chunk(chunk, ids);
        it = cache.emplace(chunk, std::move(ids)).first;
      }
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (auto id : ids) {
    if (id >= tokens_.size()) throw Error("unknown token id " + std::to_string(id));
    out += tokens_[id];
  }
  return out;
}

std::string Vocabulary::merges_text() const {
  std::string out;
  for (const auto& m : merges_) {
    out += bytes_to_printable(tokens_[m.left]);
    out += ' ';
    out += bytes_to_printable(tokens_[m.right]);
    out += '\n';
  }
  return out;
}

std::string Vocabulary::vocab_text() const {
  std::string out;
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    out += bytes_to_printable(tokens_[id]);
    out += '\t';
    out += std::to_string(id);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view merges_text, std::string_view vocab_text) {
  std::vector<std::pair<std::string, std::size_t>> entries;
  {
    std::istringstream in{std::string(vocab_text)};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw Error("vocab line without tab: " + line);
      entries.emplace_back(printable_to_bytes(line.substr(0, tab)), std::stoul(line.substr(tab + 1)));
    }
  }
  std::vector<std::string> tokens(entries.size());
  std::vector<bool> seen(entries.size(), false);
  for (auto& [tok, id] : entries) {
    if (id >= tokens.size() || seen[id]) throw Error("vocab ids are not dense");
    seen[id] = true;
    tokens[id] = std::move(tok);
  }
  if (tokens.size() < kByteAlphabet) throw Error("vocab is missing the byte alphabet");
  for (std::size_t b = 0; b < kByteAlphabet; ++b) {
    if (tokens[b] != std::string(1, static_cast<char>(b))) throw Error("vocab byte ids out of order");
  }

  std::vector<std::pair<std::string, std::string>> merge_pairs;
  {
    std::istringstream in{std::string(merges_text)};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto sp = line.find(' ');
      if (sp == std::string::npos) throw Error("merge line without separator: " + line);
      merge_pairs.emplace_back(printable_to_bytes(line.substr(0, sp)), printable_to_bytes(line.substr(sp + 1)));
    }
  }
  std::unordered_map<std::string, TokenId> index;
  for (std::size_t id = 0; id < tokens.size(); ++id) index.emplace(tokens[id], static_cast<TokenId>(id));
  std::vector<bool> is_result(tokens.size(), false);
  for (const auto& [l, r] : merge_pairs) {
    auto it = index.find(l + r);
    if (it == index.end()) throw Error("merge result missing from vocab");
    is_result[it->second] = true;
  }
  std::vector<std::string> specials;
  for (std::size_t id = kByteAlphabet; id < tokens.size() && !is_result[id]; ++id) specials.push_back(tokens[id]);

  Builder b(specials);
  for (const auto& [l, r] : merge_pairs) {
    auto li = index.find(l);
    auto ri = index.find(r);
    if (li == index.end() || ri == index.end()) throw Error("merge refers to unknown token");
    b.add_merge(li->second, ri->second);
  }
  auto v = std::move(b).finish();
  if (v.tokens_ != tokens) throw Error("vocab does not match the merge list");
  return v;
}

void Vocabulary::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "merges.txt", std::ios::binary) << merges_text();
  std::ofstream(dir / "vocab.txt", std::ios::binary) << vocab_text();
}

Vocabulary Vocabulary::load(const std::filesystem::path& dir) {
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  return from_text(slurp(dir / "merges.txt"), slurp(dir / "vocab.txt"));
}

namespace {

using ChunkCounts = std::vector<std::pair<std::string, std::uint64_t>>;

void count_document(const std::string& doc, const std::vector<std::string>& specials,
                    std::unordered_map<std::string, std::uint64_t>& counts) {
  for (const auto& seg : split_specials(doc, specials)) {
    if (seg.special) continue;
    for (auto chunk : pretokenize(seg.text)) ++counts[std::string(chunk)];
  }
}

ChunkCounts sorted_counts(std::unordered_map<std::string, std::uint64_t>&& counts) {
  ChunkCounts out(std::make_move_iterator(counts.begin()), std::make_move_iterator(counts.end()));
  std::sort(out.begin(), out.end());
  return out;
}

struct Word {
  std::vector<TokenId> syms;
  std::uint64_t freq;
};

std::vector<Word> to_words(const ChunkCounts& chunks) {
  std::vector<Word> words;
  words.reserve(chunks.size());
  for (const auto& [chunk, freq] : chunks) {
    Word w{{}, freq};
    for (unsigned char b : chunk) w.syms.push_back(b);
    words.push_back(std::move(w));
  }
  return words;
}

void check_train_args(std::span<const std::string> corpus, std::size_t vocab_size,
                      const std::vector<std::string>& specials) {
  if (corpus.empty()) throw Error("corpus is empty");
  const auto base = base_vocab_size(specials.size());
  if (vocab_size < base) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is below the base alphabet (" +
                      std::to_string(base) + ")");
  }
}

// Count descending, then (left, right) bytes ascending.
bool better(std::int64_t ca, TokenId la, TokenId ra, std::int64_t cb, TokenId lb, TokenId rb,
            const Builder& b) {
  if (ca != cb) return ca > cb;
  const auto& a0 = b.token(la);
  const auto& b0 = b.token(lb);
  if (a0 != b0) return a0 < b0;
  return b.token(ra) < b.token(rb);
}

void apply_merge(std::vector<TokenId>& syms, TokenId l, TokenId r, TokenId result) {
  std::size_t w = 0;
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == l && syms[i + 1] == r) {
      syms[w++] = result;
      ++i;
    } else {
      syms[w++] = syms[i];
    }
  }
  syms.resize(w);
}

[[noreturn]] void out_of_pairs(std::size_t have, std::size_t want) {
  throw Error("corpus ran out of mergeable pairs at " + std::to_string(have) + " of " +
              std::to_string(want) + " tokens");
}

}  // namespace

ChunkCounts count_chunks_serial(std::span<const std::string> corpus,
                                const std::vector<std::string>& special_tokens) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& doc : corpus) count_document(doc, special_tokens, counts);
  return sorted_counts(std::move(counts));
}

ChunkCounts count_chunks_parallel(std::span<const std::string> corpus,
                                  const std::vector<std::string>& special_tokens) {
  const int nthreads = omp_get_max_threads();
  std::vector<std::unordered_map<std::string, std::uint64_t>> local(static_cast<std::size_t>(nthreads));
  const auto n = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel num_threads(nthreads)
  {
    auto& mine = local[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) count_document(corpus[static_cast<std::size_t>(i)], special_tokens, mine);
  }
  auto& total = local[0];
  for (std::size_t t = 1; t < local.size(); ++t) {
    for (auto& [k, v] : local[t]) total[k] += v;
  }
  return sorted_counts(std::move(total));
}

Vocabulary train_reference(std::span<const std::string> corpus, std::size_t vocab_size,
                           const std::vector<std::string>& special_tokens) {
  check_train_args(corpus, vocab_size, special_tokens);
  Builder b(special_tokens);
  auto words = to_words(count_chunks_serial(corpus, special_tokens));
  while (b.size() < vocab_size) {
    std::map<std::pair<TokenId, TokenId>, std::int64_t> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
        counts[{w.syms[i], w.syms[i + 1]}] += static_cast<std::int64_t>(w.freq);
      }
    }
    if (counts.empty()) out_of_pairs(b.size(), vocab_size);
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (better(it->second, it->first.first, it->first.second, best->second, best->first.first,
                 best->first.second, b)) {
        best = it;
      }
    }
    const auto [l, r] = best->first;
    const TokenId result = b.add_merge(l, r);
    for (auto& w : words) apply_merge(w.syms, l, r, result);
  }
  return std::move(b).finish();
}

Vocabulary train(std::span<const std::string> corpus, std::size_t vocab_size,
                 const std::vector<std::string>& special_tokens) {
  check_train_args(corpus, vocab_size, special_tokens);
  Builder b(special_tokens);
  auto words = to_words(count_chunks_parallel(corpus, special_tokens));

  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;
  for (std::uint32_t wi = 0; wi < words.size(); ++wi) {
    const auto& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
      const auto key = pair_key(w.syms[i], w.syms[i + 1]);
      counts[key] += static_cast<std::int64_t>(w.freq);
      auto& list = where[key];
      if (list.empty() || list.back() != wi) list.push_back(wi);
    }
  }

  struct Entry {
    std::int64_t count;
    std::uint64_t key;
  };
  auto worse = [&b](const Entry& x, const Entry& y) {
    return better(y.count, static_cast<TokenId>(y.key >> 32), static_cast<TokenId>(y.key), x.count,
                  static_cast<TokenId>(x.key >> 32), static_cast<TokenId>(x.key), b);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (const auto& [key, c] : counts) heap.push({c, key});

  std::unordered_map<std::uint64_t, std::int64_t> delta;
  while (b.size() < vocab_size) {
    // Lazy deletion: skip entries whose count is stale.
    std::optional<Entry> top;
    while (!heap.empty()) {
      auto e = heap.top();
      heap.pop();
      auto it = counts.find(e.key);
      if (it != counts.end() && it->second == e.count && e.count > 0) {
        top = e;
        break;
      }
    }
    if (!top) out_of_pairs(b.size(), vocab_size);
    const auto l = static_cast<TokenId>(top->key >> 32);
    const auto r = static_cast<TokenId>(top->key);
    const TokenId result = b.add_merge(l, r);

    auto affected = std::move(where[top->key]);
    where.erase(top->key);
    delta.clear();
    for (auto wi : affected) {
      auto& w = words[wi];
      bool present = false;
      for (std::size_t i = 0; i + 1 < w.syms.size() && !present; ++i) {
        present = w.syms[i] == l && w.syms[i + 1] == r;
      }
      if (!present) continue;
      const auto f = static_cast<std::int64_t>(w.freq);
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) delta[pair_key(w.syms[i], w.syms[i + 1])] -= f;
      apply_merge(w.syms, l, r, result);
      for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
        const auto key = pair_key(w.syms[i], w.syms[i + 1]);
        delta[key] += f;
        auto& list = where[key];
        if (list.empty() || list.back() != wi) list.push_back(wi);
      }
    }
    for (const auto& [key, d] : delta) {
      if (d == 0) continue;
      auto& c = counts[key];
      c += d;
      if (c > 0) {
        heap.push({c, key});
      } else {
        counts.erase(key);
      }
    }
  }
  return std::move(b).finish();
}

}  // namespace arabeval::bpe
