// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "arabeval/bpe.hpp"
#include "arabeval/corpus.hpp"
#include "arabeval/eval.hpp"
#include "arabeval/model.hpp"
#include "arabeval/rng.hpp"
#include "arabeval/unicode.hpp"

namespace {

using namespace arabeval;

std::string arabic_word(Rng& rng) {
  std::u32string w;
  const std::size_t n = 2 + rng.below(6);
  for (std::size_t i = 0; i < n; ++i) w.push_back(static_cast<char32_t>(0x0628 + rng.below(18)));
  return unicode::encode(w);
}

std::string sentence(Rng& rng, std::size_t words) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) s += ' ';
    s += rng.below(8) == 0 ? std::string("<b>latin</b>") : arabic_word(rng);
  }
  return s;
}

const std::vector<corpus::RawDocument>& documents() {
  static const auto docs = [] {
    Rng rng(1);
    std::vector<corpus::RawDocument> d;
    for (int i = 0; i < 20000; ++i) d.push_back({std::to_string(i), sentence(rng, 5 + rng.below(30)), "bench"});
    return d;
  }();
  return docs;
}

const std::vector<std::string>& texts() {
  static const auto t = [] {
    std::vector<std::string> out;
    for (const auto& d : documents()) out.push_back(d.body);
    return out;
  }();
  return t;
}

struct PplFixture {
  model::NGramModel model;
  std::vector<TokenSequence> docs;
};

const PplFixture& ppl_fixture() {
  static const PplFixture f = [] {
    Rng rng(2);
    std::vector<TokenSequence> docs(2000);
    for (auto& d : docs) {
      d.resize(50 + rng.below(200));
      for (auto& t : d) t = static_cast<TokenId>(rng.below(rng.below(4) == 0 ? 5000 : 200));
    }
    model::NGramConfig cfg;
    cfg.order = 3;
    cfg.vocab_size = 5000;
    return PplFixture{model::NGramModel::train(docs, cfg), docs};
  }();
  return f;
}

void BM_FilterSerial(benchmark::State& state) {
  const corpus::CleaningConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(corpus::filter_documents_serial(documents(), cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(documents().size()));
}

void BM_FilterParallel(benchmark::State& state) {
  const corpus::CleaningConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(corpus::filter_documents_parallel(documents(), cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(documents().size()));
}

void BM_PerplexitySerial(benchmark::State& state) {
  const auto& f = ppl_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(eval::perplexity_serial(f.model, f.docs));
}

void BM_PerplexityParallel(benchmark::State& state) {
  const auto& f = ppl_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(eval::perplexity_parallel(f.model, f.docs));
}

void BM_ChunkCountSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(bpe::count_chunks_serial(texts(), bpe::default_special_tokens()));
}

void BM_ChunkCountParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(bpe::count_chunks_parallel(texts(), bpe::default_special_tokens()));
}

}  // namespace

BENCHMARK(BM_FilterSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FilterParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerplexitySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerplexityParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ChunkCountSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ChunkCountParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
