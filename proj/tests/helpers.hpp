#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "arabeval/af.hpp"
#include "arabeval/bpe.hpp"
#include "arabeval/error.hpp"
#include "arabeval/model.hpp"
#include "arabeval/rng.hpp"
#include "arabeval/unicode.hpp"

namespace testutil {

namespace fs = std::filesystem;
using namespace arabeval;

inline fs::path data_dir() { return fs::path(ARABEVAL_DATA_DIR); }
inline fs::path fixture(const std::string& rel) { return data_dir() / "fixtures" / rel; }

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("arabeval-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

// Byte-level vocabulary with no merges: one token per byte.
inline const bpe::Vocabulary& byte_vocab() {
  static const bpe::Vocabulary v = [] {
    std::vector<std::string> corpus{"x"};
    return bpe::train(corpus, bpe::base_vocab_size(0), {});
  }();
  return v;
}

inline const std::vector<char32_t>& arabic_letters() {
  static const std::vector<char32_t> letters = [] {
    std::vector<char32_t> v;
    for (char32_t c = 0x0621; c <= 0x063A; ++c) v.push_back(c);
    for (char32_t c = 0x0641; c <= 0x064A; ++c) v.push_back(c);
    return v;
  }();
  return letters;
}

inline std::string random_arabic_word(Rng& rng, std::size_t min_len, std::size_t max_len) {
  const auto& letters = arabic_letters();
  const std::size_t n = min_len + rng.below(max_len - min_len + 1);
  std::u32string w;
  for (std::size_t i = 0; i < n; ++i) w.push_back(letters[rng.below(letters.size())]);
  return unicode::encode(w);
}

// Assigns almost all mass to the continuation of whichever memorized
// sequence the context is a prefix of; uniform otherwise.
class MemorizingModel final : public model::DistributionModel {
 public:
  MemorizingModel(std::vector<TokenSequence> memory, std::size_t vocab, double mass = 0.99)
      : memory_(std::move(memory)), vocab_(vocab), mass_(mass) {}

  std::string id() const override { return "memorizing"; }
  std::size_t vocab_size() const override { return vocab_; }

  std::vector<double> next_distribution(std::span<const TokenId> context) const override {
    std::map<TokenId, double> hits;
    for (const auto& m : memory_) {
      if (m.size() > context.size() && std::equal(context.begin(), context.end(), m.begin())) {
        hits[m[context.size()]] += 1.0;
      }
    }
    std::vector<double> p(vocab_, 0.0);
    if (hits.empty()) {
      std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(vocab_));
      return p;
    }
    double total = 0.0;
    for (const auto& [_, c] : hits) total += c;
    const double rest = (1.0 - mass_) / static_cast<double>(vocab_);
    for (auto& x : p) x = rest;
    for (const auto& [t, c] : hits) p[t] += mass_ * c / total;
    return p;
  }

 private:
  std::vector<TokenSequence> memory_;
  std::size_t vocab_;
  double mass_;
};

// Synthetic separable AF family: real endings and clean generations are
// random word strings over the same list; the initial generator plants a
// watermark word the discriminator can key on, regenerations do not.
struct SeparableFamily {
  std::vector<std::string> words;
  std::vector<af::AFInput> inputs;
  std::string watermark = "علامةمائية";
  std::size_t ending_words = 4;
};

inline SeparableFamily separable_family(std::size_t n, std::uint64_t seed) {
  SeparableFamily fam;
  Rng rng(seed);
  for (int i = 0; i < 300; ++i) fam.words.push_back(random_arabic_word(rng, 3, 6));
  for (std::size_t i = 0; i < n; ++i) {
    std::string ctx = "سياق " + std::to_string(i);
    for (int w = 0; w < 6; ++w) ctx += " " + fam.words[rng.below(fam.words.size())];
    std::string end;
    for (std::size_t w = 0; w < fam.ending_words; ++w) {
      if (!end.empty()) end += ' ';
      end += fam.words[rng.below(fam.words.size())];
    }
    fam.inputs.push_back({ctx, end});
  }
  return fam;
}

template <typename F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace testutil
