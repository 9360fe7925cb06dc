#include <doctest.h>

#include <cmath>
#include <set>

#include "arabeval/annotate.hpp"
#include "arabeval/error.hpp"
#include "helpers.hpp"

using namespace arabeval;
using namespace arabeval::annotate;

namespace {

std::vector<Item> load_items(const std::string& rel) {
  std::vector<Item> out;
  for (const auto& j : read_jsonl(testutil::fixture(rel))) out.push_back(Item::from_json(j));
  return out;
}

std::vector<Label> load_labels(const std::string& rel) {
  std::vector<Label> out;
  for (const auto& j : read_jsonl(testutil::fixture(rel))) out.push_back(Label::from_json(j));
  return out;
}

std::vector<Item> small_items(std::size_t n) {
  std::vector<Item> items;
  for (std::size_t i = 0; i < n; ++i) {
    items.push_back({"i" + std::to_string(i), "نص " + std::to_string(i),
                     {{"source", i % 2 == 0 ? "generated" : "human"}, {"dialect", "Egyptian"}},
                     {{"note", "hidden"}}});
  }
  return items;
}

bool close(double a, double b) { return std::abs(a - b) < 0.005; }

}  // namespace

TEST_SUITE("annotate") {
  TEST_CASE("detection fixture") {
    const auto items = load_items("detection/items.jsonl");
    const auto labels = load_labels("detection/labels.jsonl");
    const std::vector<std::string> roster{"A", "B"};
    const auto rep = detection_stats(items, labels, roster);
    CHECK(rep.n_generated == 50);
    CHECK(rep.detected == 11);
    CHECK(close(rep.detected_rate, 22.0));
    CHECK(rep.agreed == 0);
    CHECK(rep.flagged.at("A") == 6);
    CHECK(rep.flagged.at("B") == 5);
    const std::vector<Label> none;
    CHECK_THROWS(detection_stats(items, none, roster));
  }

  TEST_CASE("dialect fixture") {
    const auto rep = dialect_stats(load_items("dialect/items.jsonl"), load_labels("dialect/labels.jsonl"));
    CHECK(rep.overall.judged == 350);
    CHECK(rep.overall.dialect == 185);
    CHECK(close(rep.overall.dialect_rate, 52.86));
    CHECK(close(rep.per_dialect.at("Egyptian").same_rate_all, 79.35));
    CHECK(close(rep.per_dialect.at("Jordanian").same_rate_all, 47.62));
    CHECK(close(rep.per_dialect.at("Moroccan").same_rate_all, 48.39));
    CHECK(close(rep.per_dialect.at("Yemeni").same_rate_all, 4.35));
    CHECK(close(rep.per_dialect.at("Algerian").same_rate_all, 47.17));
    CHECK(rep.per_dialect.at("Egyptian").same_rate_conditional.has_value());
  }

  TEST_CASE("harm agreement fixture") {
    const auto rep = agreement_stats(load_items("harm_agreement/items.jsonl"),
                                     load_labels("harm_agreement/labels.jsonl"));
    const std::map<std::string, double> want{
        {"abusive", 90.0}, {"dangerous", 86.5}, {"hateful", 81.0}, {"offensive", 77.5}};
    for (const auto& [cat, pct] : want) {
      CAPTURE(cat);
      CHECK(close(rep.per_category.at(cat).at("pooled"), pct));
      CHECK(close(rep.per_category.at(cat).at("A"), pct));
      CHECK(close(rep.per_category.at(cat).at("B"), pct));
      CHECK(rep.n.at(cat) == 800);
    }
    CHECK(agreement({true, false}, {true, true}) == doctest::Approx(50.0));
    CHECK_THROWS(agreement({}, {}));
    CHECK_THROWS(agreement({true}, {}));
  }

  TEST_CASE("statistics are pure functions of items and labels") {
    auto items = load_items("detection/items.jsonl");
    auto labels = load_labels("detection/labels.jsonl");
    const std::vector<std::string> roster{"A", "B"};
    const auto a = detection_stats(items, labels, roster).to_json();
    std::reverse(items.begin(), items.end());
    Rng rng(4);
    rng.shuffle(labels);
    CHECK(detection_stats(items, labels, roster).to_json() == a);
  }

  TEST_CASE("session creation shuffles under the seed") {
    testutil::TempDir d1, d2, d3;
    const auto a = Session::create(d1.path(), "s", small_items(30), Schema::kDetection, {"A", "B"}, 7);
    const auto b = Session::create(d2.path(), "s", small_items(30), Schema::kDetection, {"A", "B"}, 7);
    const auto c = Session::create(d3.path(), "s", small_items(30), Schema::kDetection, {"A", "B"}, 8);
    std::vector<std::string> ia, ib, ic;
    for (const auto& it : a->items()) ia.push_back(it.id);
    for (const auto& it : b->items()) ib.push_back(it.id);
    for (const auto& it : c->items()) ic.push_back(it.id);
    CHECK(ia == ib);
    CHECK(ia != ic);
    CHECK(std::set<std::string>(ia.begin(), ia.end()).size() == 30);
    CHECK(a->tokens().size() == 2);
    CHECK(a->tokens().at("A") != a->tokens().at("B"));
    CHECK(a->annotator_for_token(a->tokens().at("B")) == "B");
    CHECK_FALSE(a->annotator_for_token("nope").has_value());
  }

  TEST_CASE("session creation errors") {
    testutil::TempDir d;
    CHECK_THROWS(Session::create(d / "a", "s", {}, Schema::kDetection, {"A"}, 0));
    CHECK_THROWS(Session::create(d / "b", "s", small_items(2), Schema::kDetection, {}, 0));
    CHECK_THROWS(Session::create(d / "c", "s", small_items(2), Schema::kDetection, {"A", "A"}, 0));
    auto dup = small_items(2);
    dup[1].id = dup[0].id;
    CHECK_THROWS(Session::create(d / "e", "s", dup, Schema::kDetection, {"A"}, 0));
    CHECK_THROWS_AS(parse_schema("poll"), ConfigError);
  }

  TEST_CASE("next and submit walk the session in order") {
    testutil::TempDir d;
    auto s = Session::create(d.path(), "s", small_items(3), Schema::kDetection, {"A", "B"}, 1);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto p = s->next_item("A");
      REQUIRE(p.has_value());
      CHECK(p->position == k);
      CHECK(p->total == 3);
      CHECK(p->item_id == s->items()[k].id);
      const auto j = p->to_json();
      CHECK_FALSE(j.contains("truth"));
      CHECK_FALSE(j.contains("meta"));
      s->submit("A", p->item_id, {{"label", "generated"}});
    }
    CHECK_FALSE(s->next_item("A").has_value());
    CHECK(s->next_item("B")->position == 0);

    const auto first = s->items()[0].id;
    CHECK_THROWS_WITH(s->submit("A", first, {{"label", "human"}}), "already labeled");
    CHECK_THROWS(s->submit("C", first, {{"label", "human"}}));
    CHECK_THROWS(s->next_item("C"));
    CHECK_THROWS(s->submit("B", "nope", {{"label", "human"}}));
    CHECK_THROWS(s->submit("B", first, {{"label", "maybe"}}));
    CHECK_THROWS(s->submit("B", first, json::array()));
    CHECK(s->labels().size() == 3);
  }

  TEST_CASE("dialect stage rules") {
    testutil::TempDir d;
    auto s = Session::create(d.path(), "s", small_items(2), Schema::kDialect, {"A"}, 1);
    const auto a = s->items()[0].id;
    const auto b = s->items()[1].id;
    CHECK_THROWS_WITH(s->submit("A", a, {{"stage", 2}, {"same_dialect", true}}),
                      doctest::Contains("stage-1"));
    s->submit("A", a, {{"stage", 1}, {"variety", "dialect"}});
    const auto p = s->next_item("A");
    REQUIRE(p.has_value());
    CHECK(p->item_id == a);
    CHECK(p->question.dump().find("same") != std::string::npos);
    CHECK_THROWS(s->submit("A", a, {{"stage", 2}, {"same_dialect", "yes"}}));
    s->submit("A", a, {{"stage", 2}, {"same_dialect", false}});
    CHECK_THROWS_WITH(s->submit("A", a, {{"stage", 2}, {"same_dialect", true}}), "already labeled");

    // MSA closes the item after stage 1.
    s->submit("A", b, {{"stage", 1}, {"variety", "MSA"}});
    CHECK_THROWS_WITH(s->submit("A", b, {{"stage", 2}, {"same_dialect", true}}), "already labeled");
    CHECK_FALSE(s->next_item("A").has_value());
    CHECK_THROWS(s->submit("A", b, {{"stage", 1}, {"variety", "Gulf"}}));
  }

  TEST_CASE("harm answers need every category") {
    testutil::TempDir d;
    auto s = Session::create(d.path(), "s", small_items(1), Schema::kHarm, {"A"}, 1);
    const auto id = s->items()[0].id;
    CHECK_THROWS(s->submit("A", id, {{"abusive", true}}));
    CHECK_THROWS(s->submit("A", id, {{"abusive", true}, {"dangerous", false}, {"hateful", false},
                                     {"offensive", false}, {"rude", true}}));
    s->submit("A", id, {{"abusive", true}, {"dangerous", false}, {"hateful", false}, {"offensive", false}});
  }

  TEST_CASE("reopening replays the label log") {
    testutil::TempDir d;
    std::vector<std::string> order;
    {
      auto s = Session::create(d.path(), "s", small_items(4), Schema::kDialect, {"A", "B"}, 3);
      for (const auto& it : s->items()) order.push_back(it.id);
      s->submit("A", order[0], {{"stage", 1}, {"variety", "dialect"}});
      s->submit("A", order[0], {{"stage", 2}, {"same_dialect", true}});
      s->submit("A", order[1], {{"stage", 1}, {"variety", "dialect"}});
      s->submit("B", order[0], {{"stage", 1}, {"variety", "MSA"}});
    }
    auto s = Session::open(d.path());
    std::vector<std::string> again;
    for (const auto& it : s->items()) again.push_back(it.id);
    CHECK(again == order);
    CHECK(s->labels().size() == 4);
    CHECK(s->next_item("A")->item_id == order[1]);
    CHECK(s->next_item("B")->item_id == order[1]);
    CHECK_THROWS_WITH(s->submit("A", order[0], {{"stage", 1}, {"variety", "MSA"}}), "already labeled");
    CHECK(s->items()[0].meta == json{{"note", "hidden"}});
    CHECK_THROWS(Session::open(d / "missing"));
  }

  TEST_CASE("all-MSA answers leave the conditional rate undefined") {
    testutil::TempDir d;
    auto s = Session::create(d.path(), "s", small_items(3), Schema::kDialect, {"A"}, 1);
    for (const auto& it : s->items()) s->submit("A", it.id, {{"stage", 1}, {"variety", "MSA"}});
    const auto st = s->stats();
    CHECK(st.at("report").at("overall").at("same_rate_conditional") == "n/a");
    CHECK(st.at("report").at("overall").at("dialect_rate") == 0.0);
    CHECK(st.at("progress").at("A") == 3);
  }

  TEST_CASE("store creates, finds and reloads sessions") {
    testutil::TempDir d;
    std::string id;
    {
      SessionStore store(d.path());
      id = store.create(small_items(5), Schema::kDetection, {"A"}, 2);
      CHECK(store.exists(id));
      store.get(id).submit("A", store.get(id).items()[0].id, {{"label", "human"}});
      CHECK_FALSE(store.exists("nope"));
      CHECK_THROWS(store.get("nope"));
    }
    SessionStore reopened(d.path());
    CHECK(reopened.get(id).labels().size() == 1);
  }
}
