#include <doctest.h>

#include <atomic>

#include "arabeval/bias.hpp"
#include "arabeval/error.hpp"
#include "helpers.hpp"

using namespace arabeval;
using namespace arabeval::bias;

namespace {

// Throws on prompts that contain a marker, counting calls.
class FlakyModel final : public model::LanguageModel {
 public:
  explicit FlakyModel(TokenSequence poison) : poison_(std::move(poison)) {}
  std::string id() const override { return "flaky"; }
  std::size_t vocab_size() const override { return testutil::byte_vocab().size(); }
  std::vector<double> logprobs(std::span<const TokenId> seq) const override {
    return std::vector<double>(seq.size(), -1.0);
  }
  std::vector<TokenSequence> generate(std::span<const TokenId> prompt, const model::SamplingParams& p) const override {
    ++calls;
    if (std::search(prompt.begin(), prompt.end(), poison_.begin(), poison_.end()) != prompt.end()) {
      throw Error("backend down");
    }
    return std::vector<TokenSequence>(p.n_samples, testutil::byte_vocab().encode(" طبيب"));
  }
  mutable std::atomic<int> calls{0};

 private:
  TokenSequence poison_;
};

BiasProbe probe(std::string slot, std::string value) {
  BiasProbe p;
  p.template_id = "t";
  p.slots = {{std::move(slot), value}};
  p.prompt = "probe " + value;
  return p;
}

CompletionRecord completion(const BiasProbe& p, std::string text) {
  CompletionRecord r;
  r.probe = p;
  r.completion = std::move(text);
  return r;
}

std::vector<BiasProbe> demographic_probes() {
  const auto data = taskgen::BiasData::load(taskgen::default_data_dir() / "bias");
  return taskgen::expand_demographic_probes(data.genders, data.regions, data.colors, data.templates.demographic).probes;
}

}  // namespace

TEST_SUITE("bias") {
  TEST_CASE("probe suite yields probes x n records in probe order") {
    const auto probes = demographic_probes();
    model::UniformModel u(testutil::byte_vocab().size());
    model::SamplingParams p;
    p.max_tokens = 6;
    p.seed = 3;
    const auto recs = run_probe_suite(u, testutil::byte_vocab(), probes, p, 10);
    REQUIRE(recs.size() == 160);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(recs[i].probe.prompt == probes[i / 10].prompt);
      CHECK(recs[i].sample_index == i % 10);
      CHECK(recs[i].seed == mix_seed(3, i / 10));
      CHECK_FALSE(recs[i].error.has_value());
      CHECK(unicode::decode(recs[i].completion).size() <= 6);
    }
    const auto again = run_probe_suite(u, testutil::byte_vocab(), probes, p, 10, 4);
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(again[i].to_json() == recs[i].to_json());
    CHECK(CompletionRecord::from_json(recs[5].to_json()).to_json() == recs[5].to_json());
    CHECK_THROWS_AS(run_probe_suite(u, testutil::byte_vocab(), probes, p, 0), ConfigError);
  }

  TEST_CASE("a failing probe is retried once then recorded as errors") {
    const std::vector<BiasProbe> probes{probe("g", "جيد"), probe("g", "سيئ"), probe("g", "جيد٢")};
    FlakyModel m(testutil::byte_vocab().encode("سيئ"));
    const auto recs = run_probe_suite(m, testutil::byte_vocab(), probes, model::SamplingParams{}, 4);
    REQUIRE(recs.size() == 12);
    CHECK(m.calls == 4);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(recs[i].error.has_value() == (i / 4 == 1));
    }
    CHECK(recs[0].completion == " طبيب");
  }

  TEST_CASE("profession mention filter and review export") {
    const auto p = probe("gender", "الرجال");
    std::vector<CompletionRecord> recs;
    for (int i = 0; i < 100; ++i) recs.push_back(completion(p, i < 70 ? "يعملون كمهندس" : "لا شيء"));
    const std::vector<std::string> lexicon{"مهندس", "طبيب"};
    const auto split = filter_profession_mentions(recs, lexicon);
    CHECK(split.kept.size() == 70);
    CHECK(split.review.size() == 30);
    const auto items = review_export(split.review);
    REQUIRE(items.size() == 30);
    CHECK(items[0].at("id") == "review-0");
    CHECK(items[0].at("text") == "لا شيء");
    const std::vector<std::string> none;
    CHECK_THROWS_AS(filter_profession_mentions(recs, none), ConfigError);
  }

  TEST_CASE("harm rates per category on a planted set") {
    const auto p = probe("group", "أ");
    std::vector<CompletionRecord> recs;
    for (int i = 0; i < 400; ++i) {
      std::string t = "نص";
      if (i < 80) t += " شتيمة";   // 20%
      if (i % 400 < 60) t += " خطر";   // 15%
      if (i >= 360) t += " كراهية";  // 10%
      if (i % 20 == 0) t += " بذيء";  // 5%
      recs.push_back(completion(p, t));
    }
    const KeywordHarmClassifier ab(HarmCategory::kAbusive, {"شتيمة"});
    const KeywordHarmClassifier da(HarmCategory::kDangerous, {"خطر"});
    const KeywordHarmClassifier ha(HarmCategory::kHateful, {"كراهية"});
    const KeywordHarmClassifier of(HarmCategory::kOffensive, {"بذيء"});
    const std::vector<const HarmClassifier*> all{&ab, &da, &ha, &of};
    const auto labeled = classify_harm(recs, all, 2);
    const auto rep = aggregate_bias_report(labeled, "group", Tally::kHarm);
    const auto& row = rep.groups.at("أ");
    CHECK(row.percentages.at("abusive") == doctest::Approx(20.0));
    CHECK(row.percentages.at("dangerous") == doctest::Approx(15.0));
    CHECK(row.percentages.at("hateful") == doctest::Approx(10.0));
    CHECK(row.percentages.at("offensive") == doctest::Approx(5.0));

    // Missing classifier: its category stays unscored and out of the row.
    const std::vector<const HarmClassifier*> two{&ab, &ha};
    const auto partial = aggregate_bias_report(classify_harm(recs, two), "group", Tally::kHarm);
    CHECK(partial.groups.at("أ").percentages.count("dangerous") == 0);
    CHECK(classify_harm(recs, two)[0].to_json().at("harm").at("dangerous") == "unscored");

    const std::vector<const HarmClassifier*> dup{&ab, &ab};
    CHECK_THROWS_AS(classify_harm(recs, dup), ConfigError);
    CHECK_THROWS_AS(classify_harm(recs, {}), ConfigError);
  }

  TEST_CASE("wage table reproduces the planted rows") {
    std::vector<LabeledRecord> labeled;
    for (const auto& j : read_jsonl(testutil::fixture("wage_records.jsonl"))) {
      LabeledRecord lr;
      lr.record = CompletionRecord::from_json(j);
      lr.wage = parse_wage(j.at("wage").get<std::string>());
      labeled.push_back(lr);
    }
    REQUIRE(labeled.size() == 160);
    const auto rep = aggregate_bias_report(labeled, "color", Tally::kWage);
    const auto& white = rep.groups.at("البيض").percentages;
    const auto& black = rep.groups.at("السود").percentages;
    CHECK(white.at("high-wage") == doctest::Approx(51.25));
    CHECK(white.at("medium-wage") == doctest::Approx(48.75));
    CHECK(white.at("low-wage") == doctest::Approx(0.0));
    CHECK(black.at("high-wage") == doctest::Approx(23.75));
    CHECK(black.at("medium-wage") == doctest::Approx(72.50));
    CHECK(black.at("low-wage") == doctest::Approx(3.75));

    // Row order in the input does not matter.
    std::reverse(labeled.begin(), labeled.end());
    CHECK(aggregate_bias_report(labeled, "color", Tally::kWage).to_json() == rep.to_json());
  }

  TEST_CASE("single record and unlabeled groups") {
    LabeledRecord lr;
    lr.record = completion(probe("color", "x"), "t");
    lr.wage = WageLabel::kLow;
    const std::vector<LabeledRecord> one{lr};
    const auto rep = aggregate_bias_report(one, "color", Tally::kWage);
    CHECK(rep.groups.at("x").percentages.at("low-wage") == doctest::Approx(100.0));

    lr.wage = WageLabel::kNone;
    const std::vector<LabeledRecord> none{lr};
    const auto empty = aggregate_bias_report(none, "color", Tally::kWage);
    CHECK(empty.groups.empty());
    CHECK(empty.warnings.size() == 1);
    CHECK_THROWS(aggregate_bias_report(one, "region", Tally::kWage));
  }

  TEST_CASE("wage labels and the lexicon labeler") {
    for (auto w : {WageLabel::kHigh, WageLabel::kMedium, WageLabel::kLow, WageLabel::kNone}) {
      CHECK(parse_wage(wage_name(w)) == w);
    }
    CHECK_THROWS_AS(parse_wage("rich"), ConfigError);
    const LexiconWageLabeler lab({"طبيب"}, {"معلم"}, {"عامل"});
    CHECK(lab.label("يعملون كطبيب") == WageLabel::kHigh);
    CHECK(lab.label("معلم") == WageLabel::kMedium);
    CHECK(lab.label("عامل نظافة") == WageLabel::kLow);
    CHECK(lab.label("لا شيء") == WageLabel::kNone);
    for (auto c : kAllHarmCategories) CHECK(parse_harm(harm_name(c)) == c);
  }

  TEST_CASE("gender lean over occupations") {
    const corpus::LookupClassifier detector({{"هو", "male"}, {"هي", "female"}},
                                            {"male", "female", "neither"}, "neither");
    std::vector<CompletionRecord> recs;
    for (int o = 0; o < 100; ++o) {
      const auto p = probe("occupation", "مهنة" + std::to_string(o));
      const bool male = o < 62;
      for (int s = 0; s < 5; ++s) recs.push_back(completion(p, (s < 3) == male ? "هو" : "هي"));
    }
    const auto rep = gender_lean_report(recs, detector);
    CHECK(rep.occupations == 100);
    CHECK(rep.male == 62);
    CHECK(rep.female == 38);
    CHECK(rep.male_percent == doctest::Approx(62.0));

    std::vector<CompletionRecord> all_male;
    for (int o = 0; o < 10; ++o) all_male.push_back(completion(probe("occupation", std::to_string(o)), "هو"));
    CHECK(gender_lean_report(all_male, detector).male_percent == doctest::Approx(100.0));

    std::vector<CompletionRecord> tie{completion(probe("occupation", "a"), "هو"),
                                      completion(probe("occupation", "a"), "هي"),
                                      completion(probe("occupation", "b"), "لا")};
    const auto t = gender_lean_report(tie, detector);
    CHECK(t.undetermined == 2);
    CHECK(t.majority.at("a") == "undetermined");

    std::vector<CompletionRecord> empty;
    CHECK_THROWS(gender_lean_report(empty, detector));
    const corpus::LookupClassifier wrong({}, {"a"}, "a");
    CHECK_THROWS_AS(gender_lean_report(all_male, wrong), ConfigError);
  }

  TEST_CASE("suffix gender detector cues") {
    const SuffixGenderDetector d;
    CHECK(d.classify("هو مهندس") == "male");
    CHECK(d.classify("هي مهندسة") == "female");
    CHECK(d.classify("...") == "neither");
  }
}
