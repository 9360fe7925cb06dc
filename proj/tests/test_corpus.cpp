#include <doctest.h>

#include <cmath>
#include <sstream>

#include "arabeval/corpus.hpp"
#include "arabeval/error.hpp"
#include "helpers.hpp"

using namespace arabeval;
using namespace arabeval::corpus;

namespace {

CleaningConfig config_with(const json& overrides) { return CleaningConfig::from_json(overrides); }

RawDocument doc(std::string id, std::string body) { return {std::move(id), std::move(body), "test"}; }

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("hand-worked cleaning cases") {
    for (const auto& c : read_jsonl(testutil::fixture("clean_cases.jsonl"))) {
      const auto cfg = config_with(c.at("config"));
      const std::string raw = c.at("raw");
      CAPTURE(raw);
      CHECK(clean_text(raw, cfg) == c.at("expected").get<std::string>());
    }
  }

  TEST_CASE("cleaning removes markup, tatweel and hash signs") {
    const CleaningConfig cfg;
    const auto out = clean_text("<p>كتـــاب</p> #رائع <br/>", cfg);
    CHECK(out.find('<') == std::string::npos);
    CHECK(out.find('#') == std::string::npos);
    CHECK(out.find("ـ") == std::string::npos);
    CHECK(out.find("كتاب") != std::string::npos);
  }

  TEST_CASE("placeholders survive cleaning") {
    const CleaningConfig cfg;
    CHECK(clean_text("<URL> <USER>", cfg) == "<URL> <USER>");
    CHECK(clean_text("@a@b", cfg) == "<USER><USER>");
    CHECK(clean_text("https://x.y/z?q=1 تم", cfg) == "<URL> تم");
  }

  TEST_CASE("repeat cap honours the configured classes") {
    CleaningConfig cfg;
    cfg.max_char_repeat = 3;
    CHECK(clean_text("ههههههه", cfg) == "ههه");
    CHECK(clean_text("!!!!!!", cfg) == "!!!!!!");
    cfg.repeat_arabic_letters = false;
    CHECK(clean_text("ههههههه", cfg) == "ههههههه");
  }

  TEST_CASE("config validation") {
    CleaningConfig cfg;
    cfg.max_char_repeat = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.max_char_repeat = 2;
    cfg.min_arabic_ratio = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(CleaningConfig::from_json({{"min_arabic_ratio", "high"}}), ConfigError);
    const auto round = CleaningConfig::from_json(CleaningConfig{}.to_json());
    CHECK(round.to_json() == CleaningConfig{}.to_json());
  }

  TEST_CASE("arabic character ratio") {
    CHECK(arabic_char_ratio("سلام") == doctest::Approx(1.0));
    CHECK(arabic_char_ratio("abc") == 0.0);
    CHECK(arabic_char_ratio("سلام abc") == doctest::Approx(4.0 / 7.0));
    CHECK(arabic_char_ratio("   ") == 0.0);
    CHECK(arabic_char_ratio("") == 0.0);
  }

  TEST_CASE("threshold straddle and degenerate thresholds") {
    // 24 Arabic letters + 1 Latin = 0.96; 2 + 2 = 0.5
    const std::vector<RawDocument> docs{doc("hi", "بببببببببببببببببببببببب x"),
                                        doc("lo", "بب xx")};
    CleaningConfig cfg;
    cfg.repeat_arabic_letters = false;
    REQUIRE(arabic_char_ratio(docs[0].body) == doctest::Approx(0.96));
    auto kept = filter_documents_serial(docs, cfg);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].id == "hi");

    cfg.min_arabic_ratio = 0.0;
    CHECK(filter_documents_serial(docs, cfg).size() == 2);
    cfg.min_arabic_ratio = 1.0;
    CHECK(filter_documents_serial(docs, cfg).empty());
  }

  TEST_CASE("serial and parallel filters agree") {
    Rng rng(3);
    std::vector<RawDocument> docs;
    for (int i = 0; i < 2000; ++i) {
      std::string body = testutil::random_arabic_word(rng, 1, 8);
      if (rng.below(4) == 0) body += " english words here";
      docs.push_back(doc(std::to_string(i), body));
    }
    const CleaningConfig cfg;
    CHECK(filter_documents_serial(docs, cfg) == filter_documents_parallel(docs, cfg));
  }

  TEST_CASE("stream filter keeps order and reports malformed lines") {
    std::istringstream in(
        "{\"id\":\"1\",\"body\":\"مرحبا\",\"source\":\"a\"}\n"
        "garbage\n"
        "{\"id\":\"2\",\"body\":\"hello\",\"source\":\"a\"}\n"
        "{\"id\":\"3\"}\n"
        "{\"id\":\"4\",\"body\":\"أهلا <b>بك</b>\",\"source\":\"a\"}\n");
    std::ostringstream out;
    std::vector<RecordError> errors;
    const auto stats = filter_corpus(in, out, CleaningConfig{}, [&](const RecordError& e) { errors.push_back(e); }, 2);
    CHECK(stats.read == 5);
    CHECK(stats.kept == 2);
    CHECK(stats.dropped == 1);
    CHECK(stats.malformed == 2);
    REQUIRE(errors.size() == 2);
    CHECK(errors[0].line == 2);
    CHECK(errors[1].line == 4);
    std::istringstream back(out.str());
    const auto kept = read_jsonl(back);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].at("id") == "1");
    CHECK(kept[1].at("body") == "أهلا بك");
  }

  TEST_CASE("distribution report on stubs") {
    const LookupClassifier all_msa({}, {"MSA", "dialect"}, "MSA");
    const LookupClassifier country({}, {"Egypt"}, "Egypt");
    std::vector<std::string> sample(50, "x");
    const auto r = distribution_report(sample, all_msa, country);
    CHECK(r.variety_proportions.at("MSA") == doctest::Approx(100.0));
    CHECK(r.country_proportions.empty());
    CHECK(r.sample_size == 50);

    std::vector<std::string> empty;
    CHECK_THROWS(distribution_report(empty, all_msa, country));
  }

  TEST_CASE("28 planted dialect labels out of 100") {
    std::map<std::string, std::string> table;
    std::vector<std::string> sample;
    for (int i = 0; i < 100; ++i) {
      sample.push_back("t" + std::to_string(i));
      if (i < 28) table[sample.back()] = "dialect";
    }
    const LookupClassifier variety(table, {"MSA", "dialect"}, "MSA");
    const LookupClassifier country({}, {"Egypt"}, "Egypt");
    const auto r = distribution_report(sample, variety, country);
    CHECK(r.variety_proportions.at("dialect") == doctest::Approx(28.0));
    CHECK(r.country_proportions.at("Egypt") == doctest::Approx(100.0));
  }

  TEST_CASE("planted sample reproduces the Egyptian share") {
    std::map<std::string, std::string> variety_table, country_table;
    std::vector<std::string> sample;
    for (const auto& j : read_jsonl(testutil::fixture("distribution_sample.jsonl"))) {
      const std::string t = j.at("text");
      sample.push_back(t);
      variety_table[t] = j.at("variety");
      if (j.contains("country")) country_table[t] = j.at("country");
    }
    const LookupClassifier variety(variety_table, {"MSA", "dialect"}, "MSA");
    const LookupClassifier country(country_table, {"Egypt", "Jordan", "Morocco", "Saudi Arabia", "Algeria"}, "Other");
    const auto r = distribution_report(sample, variety, country, 2);
    CHECK(std::abs(r.variety_proportions.at("dialect") - 28.39) < 0.005);
    CHECK(std::abs(r.country_proportions.at("Egypt") - 80.48) < 0.005);
    double total = 0.0;
    for (const auto& [_, v] : r.country_proportions) total += v;
    CHECK(total == doctest::Approx(100.0).epsilon(1e-4));

    // Order does not matter.
    std::reverse(sample.begin(), sample.end());
    const auto r2 = distribution_report(sample, variety, country);
    CHECK(r2.country_proportions == r.country_proportions);
  }

  TEST_CASE("lexicon classifier picks the first matching label") {
    const auto clf = LexiconClassifier::from_json(
        json::parse(R"({"fallback":"MSA","labels":[["dialect",["ازيك","شلونك"]],["other",["ازيك"]]]})"));
    CHECK(clf.classify("ازيك يا صاحبي") == "dialect");
    CHECK(clf.classify("كيف حالك") == "MSA");
    CHECK(clf.labels() == std::vector<std::string>{"dialect", "other", "MSA"});
    CHECK_THROWS_AS(LexiconClassifier::from_json(json::object()), ConfigError);
  }

  TEST_CASE("accumulators merge in any order") {
    DistributionAccumulator a, b, c;
    a.add("dialect", std::string("Egypt"));
    a.add("MSA", std::nullopt);
    b.add("dialect", std::string("Jordan"));
    c.merge(b);
    c.merge(a);
    a.merge(b);
    CHECK(a.finish().to_json() == c.finish().to_json());
  }
}
