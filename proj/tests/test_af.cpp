#include <doctest.h>

#include <set>

#include "arabeval/af.hpp"
#include "arabeval/error.hpp"
#include "helpers.hpp"

using namespace arabeval;
using namespace arabeval::af;

namespace {

AFConfig config_for(std::uint64_t seed) {
  AFConfig c;
  c.seed = seed;
  c.generator_params.max_tokens = 4;
  return c;
}

struct Setup {
  testutil::SeparableFamily fam;
  WordListGenerator marked;
  WordListGenerator clean;

  explicit Setup(std::size_t n, std::uint64_t seed = 5)
      : fam(testutil::separable_family(n, seed)), marked(fam.words, fam.watermark), clean(fam.words) {}
};

// Fails on contexts that contain a given word.
class FailingGenerator final : public EndingGenerator {
 public:
  std::vector<std::string> generate(std::string_view context, const SamplingParams&, std::size_t n) const override {
    if (context.find("bad") != std::string_view::npos) throw Error("backend down");
    return std::vector<std::string>(n, "ending");
  }
};

}  // namespace

TEST_SUITE("af") {
  TEST_CASE("initialization keeps every record with three endings") {
    Setup s(50);
    const auto st = af_initialize(s.fam.inputs, s.marked, config_for(1));
    REQUIRE(st.records.size() == 50);
    for (std::size_t i = 0; i < 50; ++i) {
      CHECK(st.records[i].context == s.fam.inputs[i].context);
      CHECK(st.records[i].real_ending == s.fam.inputs[i].real_ending);
      for (const auto& g : st.records[i].generated) CHECK(g.find(s.fam.watermark) != std::string::npos);
    }
    CHECK(st.iteration == 0);
  }

  TEST_CASE("failed generations drop the record and are logged") {
    std::vector<AFInput> inputs{{"good one", "x"}, {"bad one", "y"}, {"good two", "z"}};
    std::vector<std::string> log;
    const auto st = af_initialize(inputs, FailingGenerator{}, config_for(1), &log);
    CHECK(st.records.size() == 2);
    REQUIRE(log.size() == 1);
    CHECK(log[0].find("record 1") != std::string::npos);
    std::vector<AFInput> empty_ctx{{"", "x"}};
    CHECK_THROWS(af_initialize(empty_ctx, FailingGenerator{}, config_for(1)));
  }

  TEST_CASE("an iteration preserves cardinality and the real endings") {
    Setup s(100);
    const auto st = af_initialize(s.fam.inputs, s.marked, config_for(2));
    NgramDiscriminator disc;
    const auto out = af_iteration(st, disc, s.clean, config_for(2));
    REQUIRE(out.state.records.size() == 100);
    CHECK(out.test_records.size() == 20);
    std::set<std::size_t> test(out.test_records.begin(), out.test_records.end());
    for (std::size_t i = 0; i < 100; ++i) {
      CHECK(out.state.records[i].real_ending == st.records[i].real_ending);
      CHECK(out.state.records[i].context == st.records[i].context);
    }
    for (const auto& r : out.replacements) {
      CHECK(test.count(r.record) == 1);
      CHECK(r.probability >= 0.75);
      CHECK(out.state.records[r.record].generated[r.ending] == r.after);
      CHECK(out.state.records[r.record].replacements[r.ending] == 1);
    }
    CHECK(out.state.iteration == 1);
    CHECK(st.iteration == 0);
  }

  TEST_CASE("a coin-flip discriminator replaces nothing") {
    Setup s(60);
    const auto st = af_initialize(s.fam.inputs, s.marked, config_for(3));
    ConstantDiscriminator coin(0.5);
    const auto out = af_iteration(st, coin, s.clean, config_for(3));
    CHECK(out.replacements.empty());
    CHECK(out.accuracy == doctest::Approx(0.5));
  }

  TEST_CASE("an oracle discriminator replaces every test ending") {
    Setup s(60);
    const auto st = af_initialize(s.fam.inputs, s.marked, config_for(4));
    MarkerDiscriminator oracle(s.fam.watermark);
    const auto out = af_iteration(st, oracle, s.clean, config_for(4));
    CHECK(out.accuracy == doctest::Approx(1.0));
    CHECK(out.replacements.size() == out.test_records.size() * kGeneratedPerRecord);
    for (auto i : out.test_records) {
      for (const auto& g : out.state.records[i].generated) CHECK(g.find(s.fam.watermark) == std::string::npos);
    }
  }

  TEST_CASE("stopping rules") {
    Setup s(40);
    const auto st = af_initialize(s.fam.inputs, s.marked, config_for(5));
    auto cfg = config_for(5);
    cfg.max_iterations = 1;
    NgramDiscriminator disc;
    const auto one = af_run(st, disc, s.clean, cfg);
    CHECK(one.iteration == 1);
    CHECK(one.stop_reason == "max_iterations");
    CHECK_FALSE(one.converged);

    ConstantDiscriminator flat(0.3);
    cfg.max_iterations = 10;
    const auto conv = af_run(st, flat, s.clean, cfg);
    CHECK(conv.iteration == cfg.window);
    CHECK(conv.converged);
    CHECK(conv.stop_reason == "converged");
  }

  TEST_CASE("convergence test on traces") {
    const std::vector<double> t{1.0, 0.8, 0.61, 0.60, 0.605};
    CHECK(has_converged(t, 3, 0.02));
    CHECK_FALSE(has_converged(t, 4, 0.02));
    CHECK_FALSE(has_converged(std::span(t).first(2), 3, 0.02));
    const std::vector<double> exact{0.5, 0.52};
    CHECK_FALSE(has_converged(exact, 2, 0.02));
  }

  TEST_CASE("checkpoint round trip and resume") {
    Setup s(80);
    auto cfg = config_for(6);
    const auto st = af_initialize(s.fam.inputs, s.marked, cfg);
    NgramDiscriminator disc;
    cfg.max_iterations = 2;
    const auto partial = af_run(st, disc, s.clean, cfg);
    const auto restored = AFState::from_json(json::parse(partial.to_json().dump()));
    CHECK(restored.to_json() == partial.to_json());

    cfg.max_iterations = 4;
    NgramDiscriminator d2;
    const auto resumed = af_run(restored, d2, s.clean, cfg);
    NgramDiscriminator d3;
    const auto straight = af_run(st, d3, s.clean, cfg);
    CHECK(resumed.iteration == 4);
    CHECK(resumed.to_json() == straight.to_json());

    auto broken = partial.to_json();
    broken["format"] = "something else";
    CHECK_THROWS_AS(AFState::from_json(broken), ConfigError);
    broken = partial.to_json();
    broken["accuracy_trace"].push_back(0.5);
    CHECK_THROWS_AS(AFState::from_json(broken), ConfigError);
  }

  TEST_CASE("runs are deterministic and independent of worker count") {
    Setup s(120);
    auto cfg = config_for(7);
    cfg.max_iterations = 3;
    const auto st = af_initialize(s.fam.inputs, s.marked, cfg);
    NgramDiscriminator a, b;
    const auto r1 = af_run(st, a, s.clean, cfg);
    cfg.workers = 4;
    const auto st4 = af_initialize(s.fam.inputs, s.marked, cfg);
    CHECK(st4.to_json() == st.to_json());
    const auto r2 = af_run(st4, b, s.clean, cfg);
    CHECK(r1.to_json() == r2.to_json());
  }

  TEST_CASE("config validation") {
    AFConfig c;
    CHECK_NOTHROW(c.validate());
    c.threshold = 0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = AFConfig{};
    c.window = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = AFConfig{};
    c.max_iterations = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = AFConfig{};
    c.epsilon = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = AFConfig{};
    CHECK(AFConfig::from_json(c.to_json()).to_json() == c.to_json());
  }

  TEST_CASE("split sizes and disjoint MCQ splits") {
    const auto z = split_sizes(10, {});
    CHECK(z.train == 8);
    CHECK(z.dev == 1);
    CHECK(z.test == 1);
    const auto big = split_sizes(3000, {});
    CHECK(big.train == 2400);
    CHECK(big.dev == 300);
    CHECK(big.test == 300);
    CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.5}), ConfigError);

    Setup s(10);
    const auto st = af_initialize(s.fam.inputs, s.marked, config_for(8));
    const auto split = af_split(st, {}, 3);
    CHECK(split.train.size() == 8);
    CHECK(split.dev.size() == 1);
    CHECK(split.test.size() == 1);
    std::set<std::string> contexts;
    std::vector<int> gold_positions(4, 0);
    for (const auto* part : {&split.train, &split.dev, &split.test}) {
      for (const auto& it : *part) {
        contexts.insert(it.context);
        CHECK_NOTHROW(it.validate());
        REQUIRE(it.is_real.size() == 4);
        CHECK(it.is_real[it.gold]);
        const auto src = std::find_if(st.records.begin(), st.records.end(),
                                      [&](const AFRecord& r) { return r.context == it.context; });
        REQUIRE(src != st.records.end());
        CHECK(it.endings[it.gold] == src->real_ending);
        ++gold_positions[it.gold];
      }
    }
    CHECK(contexts.size() == 10);
    CHECK(af_split(st, {}, 3).test[0].to_json() == split.test[0].to_json());
    std::vector<AFRecord> two(st.records.begin(), st.records.begin() + 2);
    AFState tiny;
    tiny.records = two;
    CHECK_THROWS(af_split(tiny, {}, 3));
  }

  TEST_CASE("n-gram discriminator learns the watermark") {
    Setup s(200);
    const auto st = af_initialize(s.fam.inputs, s.marked, config_for(9));
    NgramDiscriminator disc;
    CHECK_THROWS(disc.predict_proba("c", "e"));
    std::vector<LabeledEnding> data;
    for (const auto& r : st.records) {
      data.push_back({r.context, r.real_ending, false});
      for (const auto& g : r.generated) data.push_back({r.context, g, true});
    }
    disc.fit(data);
    const auto& r = st.records.front();
    CHECK(disc.predict_proba(r.context, r.generated[0]) > 0.75);
    CHECK(disc.predict_proba(r.context, r.real_ending) < 0.5);

    std::vector<LabeledEnding> one_class{{"c", "e", true}};
    CHECK_THROWS(disc.fit(one_class));
  }
}
