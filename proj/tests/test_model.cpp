#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <numeric>
#include <set>

#include "arabeval/error.hpp"
#include "arabeval/model.hpp"
#include "arabeval/remote.hpp"
#include "arabeval/sampling.hpp"
#include "helpers.hpp"

using namespace arabeval;
using namespace arabeval::model;

namespace {

NGramModel hand_model() {
  const auto hand = read_json_file(testutil::fixture("ngram_hand.json"));
  NGramConfig cfg;
  cfg.order = hand.at("order");
  cfg.alpha = hand.at("alpha");
  cfg.vocab_size = hand.at("vocab_size");
  return NGramModel::train(hand.at("train").get<std::vector<TokenSequence>>(), cfg);
}

NGramModel small_model(std::size_t order = 3, double alpha = 0.1) {
  Rng rng(12);
  std::vector<TokenSequence> corpus(40);
  for (auto& s : corpus) {
    s.resize(5 + rng.below(20));
    for (auto& t : s) t = static_cast<TokenId>(rng.below(4) == 0 ? rng.below(12) : rng.below(3));
  }
  NGramConfig cfg;
  cfg.order = order;
  cfg.alpha = alpha;
  cfg.vocab_size = 12;
  return NGramModel::train(corpus, cfg);
}

// Background httplib server with a fixed handler.
struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  template <typename H>
  explicit StubServer(H handler) {
    server.Post(R"(/v1/.*)", handler);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

RemoteOptions fast_options() {
  RemoteOptions o;
  o.backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("n-gram probabilities match the hand table") {
    const auto hand = read_json_file(testutil::fixture("ngram_hand.json"));
    const auto m = hand_model();
    const auto& table = hand.at("table");
    const TokenSequence bos{};
    for (TokenId w = 0; w < 3; ++w) {
      CHECK(m.prob(bos, w) == doctest::Approx(table.at("BOS")[w].get<double>()).epsilon(1e-12));
      for (TokenId c = 0; c < 3; ++c) {
        const TokenSequence ctx{c};
        CHECK(m.prob(ctx, w) == doctest::Approx(table.at(std::to_string(c))[w].get<double>()).epsilon(1e-12));
      }
    }
    const auto lps = m.logprobs(hand.at("doc").get<TokenSequence>());
    const auto want = hand.at("logprobs").get<std::vector<double>>();
    REQUIRE(lps.size() == want.size());
    for (std::size_t i = 0; i < lps.size(); ++i) CHECK(std::abs(lps[i] - want[i]) < 1e-12);
  }

  TEST_CASE("unigram counting and the smoothing limits") {
    NGramConfig cfg;
    cfg.order = 1;
    cfg.alpha = 1e-9;
    cfg.vocab_size = 2;
    const std::vector<TokenSequence> corpus{{0, 0, 1}};
    const auto m = NGramModel::train(corpus, cfg);
    CHECK(m.prob({}, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(m.prob({}, 1) == doctest::Approx(1.0 / 3.0));

    cfg.alpha = 1e9;
    const auto flat = NGramModel::train(corpus, cfg);
    CHECK(flat.prob({}, 0) == doctest::Approx(0.5).epsilon(1e-6));
  }

  TEST_CASE("training errors") {
    NGramConfig cfg;
    cfg.vocab_size = 3;
    std::vector<TokenSequence> empty;
    CHECK_THROWS(NGramModel::train(empty, cfg));
    cfg.order = 0;
    const std::vector<TokenSequence> one{{1}};
    CHECK_THROWS_AS(NGramModel::train(one, cfg), ConfigError);
    cfg.order = 2;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(NGramModel::train(one, cfg), ConfigError);
  }

  TEST_CASE("every context distribution sums to one") {
    const auto m = small_model();
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
      TokenSequence ctx(rng.below(5));
      for (auto& t : ctx) t = static_cast<TokenId>(rng.below(12));
      const auto p = m.next_distribution(ctx);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("logprob contract") {
    const auto m = small_model();
    const TokenSequence seq{1, 2, 0, 5};
    const auto lps = m.logprobs(seq);
    CHECK(lps.size() == 4);
    for (double x : lps) CHECK(x <= 0.0);
    CHECK_THROWS(m.logprobs(TokenSequence{}));

    UniformModel u(50);
    for (double x : u.logprobs(TokenSequence{3, 4, 5})) CHECK(x == doctest::Approx(-std::log(50.0)));

    testutil::MemorizingModel det({{1, 2, 3}}, 5, 1.0);
    for (double x : det.logprobs(TokenSequence{1, 2, 3})) CHECK(x == 0.0);
  }

  TEST_CASE("json round trip keeps the model exact") {
    const auto m = small_model();
    const auto back = NGramModel::from_json(m.to_json());
    const TokenSequence seq{1, 0, 2, 2, 7, 1};
    CHECK(back.logprobs(seq) == m.logprobs(seq));
    CHECK(back.id() == m.id());
  }

  TEST_CASE("greedy decoding ignores the seed") {
    const auto m = small_model();
    const auto p = SamplingParams::greedy(8);
    auto q = p;
    q.seed = 999;
    CHECK(m.generate(TokenSequence{1}, p) == m.generate(TokenSequence{1}, q));
  }

  TEST_CASE("fixed seed reproduces samples and samples use separate streams") {
    const auto m = small_model();
    SamplingParams p;
    p.n_samples = 6;
    p.max_tokens = 10;
    p.seed = 77;
    const auto a = m.generate(TokenSequence{0}, p);
    CHECK(a == m.generate(TokenSequence{0}, p));
    CHECK(a.size() == 6);
    std::set<TokenSequence> distinct(a.begin(), a.end());
    CHECK(distinct.size() > 1);
    for (const auto& s : a) CHECK(s.size() <= 10);
  }

  TEST_CASE("full-distribution sampling matches the model (chi-square)") {
    const auto m = small_model(2, 0.5);
    const TokenSequence prompt{2};
    SamplingParams p;
    p.top_k = 12;
    p.top_p = 1.0;
    p.max_tokens = 1;
    p.n_samples = 100000;
    p.seed = 5;
    const auto probs = m.next_distribution(prompt);
    std::vector<double> counts(12, 0.0);
    for (const auto& s : m.generate(prompt, p)) counts.at(s.at(0)) += 1.0;
    double chi2 = 0.0;
    for (std::size_t w = 0; w < 12; ++w) {
      const double e = probs[w] * 100000.0;
      chi2 += (counts[w] - e) * (counts[w] - e) / e;
      CHECK(std::abs(counts[w] - e) <= 3.0 * std::sqrt(e * (1.0 - probs[w])) + 1e-9);
    }
    CHECK(chi2 < 31.26);  // 99.9% quantile, 11 degrees of freedom
  }

  TEST_CASE("candidate set: top-k intersected with the nucleus") {
    const std::vector<double> probs{0.05, 0.4, 0.3, 0.2, 0.05};
    SamplingParams p;
    p.top_k = 3;
    p.top_p = 0.65;
    const auto c = candidate_set(probs, p);
    REQUIRE(c.size() == 2);
    CHECK(c[0].id == 1);
    CHECK(c[1].id == 2);
    CHECK(c[0].prob + c[1].prob == doctest::Approx(1.0));
    p.top_p = 1.0;
    p.top_k = 1;
    CHECK(candidate_set(probs, p).size() == 1);
  }

  TEST_CASE("nucleus law over 10K sampled steps") {
    const auto m = small_model();
    SamplingParams p;
    p.top_k = 4;
    p.top_p = 0.8;
    p.max_tokens = 1;
    Rng rng(8);
    std::size_t outside = 0;
    for (int i = 0; i < 10000; ++i) {
      TokenSequence ctx(1 + rng.below(3));
      for (auto& t : ctx) t = static_cast<TokenId>(rng.below(12));
      p.seed = rng.next();
      const auto s = m.generate(ctx, p);
      const auto cands = candidate_set(m.next_distribution(ctx), p);
      if (s[0].empty()) continue;
      const bool in = std::any_of(cands.begin(), cands.end(), [&](const Candidate& c) { return c.id == s[0][0]; });
      outside += in ? 0 : 1;
    }
    CHECK(outside == 0);
  }

  TEST_CASE("sampling parameter validation") {
    SamplingParams p;
    CHECK_NOTHROW(p.validate());
    p.top_k = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.top_k = 5;
    p.top_p = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.top_p = 1.2;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.top_p = 0.9;
    p.temperature = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.temperature = 1.0;
    CHECK(SamplingParams::from_json(p.to_json()).to_json() == p.to_json());
  }

  TEST_CASE("end of text stops generation") {
    NGramConfig cfg;
    cfg.order = 2;
    cfg.alpha = 1e-6;
    cfg.vocab_size = 4;
    cfg.end_of_text = 3;
    const std::vector<TokenSequence> corpus{{0, 1}, {0, 1}, {0, 1}};
    const auto m = NGramModel::train(corpus, cfg);
    const auto out = m.generate(TokenSequence{0}, SamplingParams::greedy(10));
    CHECK(out[0] == TokenSequence{1});
  }

  TEST_CASE("remote model over loopback equals the local model") {
    const auto local = small_model();
    ModelServer server(local);
    const int port = server.bind();
    server.start();
    RemoteModel remote("http://127.0.0.1:" + std::to_string(port), fast_options());
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
      TokenSequence seq(1 + rng.below(10));
      for (auto& t : seq) t = static_cast<TokenId>(rng.below(12));
      CHECK(remote.logprobs(seq) == local.logprobs(seq));
    }
    SamplingParams p;
    p.n_samples = 3;
    p.max_tokens = 6;
    p.seed = 11;
    CHECK(remote.generate(TokenSequence{1, 2}, p) == local.generate(TokenSequence{1, 2}, p));
    p.temperature = 0.7;
    CHECK_THROWS_AS(remote.generate(TokenSequence{1}, p), ConfigError);
    server.stop();
  }

  TEST_CASE("remote surfaces repeated 5xx with endpoint and request id") {
    std::atomic<int> calls{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.status = 500;
      res.set_content("{}", "application/json");
    });
    RemoteModel remote(stub.url(), fast_options());
    try {
      remote.logprobs(TokenSequence{1});
      FAIL("expected an error");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CHECK(msg.find(stub.url()) != std::string::npos);
      CHECK(msg.find("request") != std::string::npos);
    }
    CHECK(calls == 3);
  }

  TEST_CASE("remote rejects malformed responses") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"logprobs":[-0.5,)", "application/json");
    });
    RemoteModel remote(stub.url(), fast_options());
    CHECK_THROWS_WITH_AS(remote.logprobs(TokenSequence{1}), doctest::Contains("malformed response"), Error);

    StubServer wrong_len([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"logprobs":[-0.5, -0.1]})", "application/json");
    });
    RemoteModel r2(wrong_len.url(), fast_options());
    CHECK_THROWS_WITH_AS(r2.logprobs(TokenSequence{1}), doctest::Contains("malformed response"), Error);
  }

  TEST_CASE("model server rejects a busy port") {
    const auto local = small_model();
    ModelServer a(local);
    const int port = a.bind();
    ModelServer b(local);
    CHECK_THROWS(b.bind("127.0.0.1", port));
  }
}
