#include "arabeval/annotate.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "arabeval/error.hpp"
#include "arabeval/rng.hpp"

namespace arabeval::annotate {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSessionFormat = "arabeval-session-1";
constexpr std::array<std::string_view, 4> kHarmKeys{"abusive", "dangerous", "hateful", "offensive"};

std::string new_token() {
  std::random_device rd;
  std::string out;
  static constexpr char kHex[] = "0123456789abcdef";
  for (int i = 0; i < 32; ++i) out.push_back(kHex[rd() % 16]);
  return out;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

double pct(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

json question_for(Schema schema, std::size_t stage) {
  switch (schema) {
    case Schema::kDetection:
      return {{"kind", "detection"},
              {"prompt", "Was this text written by a person or generated by a model?"},
              {"field", "label"},
              {"options", {"human", "generated"}}};
    case Schema::kDialect:
      if (stage == 1) {
        return {{"kind", "dialect"}, {"stage", 1}, {"prompt", "Is the text MSA or dialectal?"},
                {"field", "variety"}, {"options", {"MSA", "dialect"}}};
      }
      return {{"kind", "dialect"}, {"stage", 2}, {"prompt", "Does it represent a dialect from your country?"},
              {"field", "same_dialect"}, {"options", {true, false}}};
    case Schema::kHarm:
      return {{"kind", "harm"}, {"prompt", "Mark every category the text belongs to."},
              {"categories", kHarmKeys}};
  }
  throw Error("unknown schema");
}

}  // namespace

std::string_view schema_name(Schema s) {
  switch (s) {
    case Schema::kDetection: return "detection";
    case Schema::kDialect: return "dialect-two-stage";
    case Schema::kHarm: return "harm-agreement";
  }
  throw Error("unknown schema");
}

Schema parse_schema(std::string_view name) {
  for (auto s : {Schema::kDetection, Schema::kDialect, Schema::kHarm}) {
    if (schema_name(s) == name) return s;
  }
  throw ConfigError("unknown schema \"" + std::string(name) +
                    "\" (expected detection, dialect-two-stage or harm-agreement)");
}

json Item::to_json() const { return {{"id", id}, {"text", text}, {"truth", truth}, {"meta", meta}}; }

Item Item::from_json(const json& j) {
  Item it;
  try {
    const auto& id = j.at("id");
    it.id = id.is_string() ? id.get<std::string>() : id.dump();
    it.text = j.at("text").get<std::string>();
    if (j.contains("truth")) it.truth = j.at("truth");
    if (j.contains("meta")) it.meta = j.at("meta");
  } catch (const json::exception& e) {
    throw Error(std::string("annotation item: ") + e.what());
  }
  return it;
}

json Label::to_json() const {
  return {{"annotator", annotator}, {"item", item}, {"answer", answer}, {"timestamp_ms", timestamp_ms}};
}

Label Label::from_json(const json& j) {
  try {
    return Label{j.at("annotator").get<std::string>(), j.at("item").get<std::string>(), j.at("answer"),
                 j.value("timestamp_ms", std::int64_t{0})};
  } catch (const json::exception& e) {
    throw Error(std::string("label record: ") + e.what());
  }
}

json Prompt::to_json() const {
  return {{"item", {{"id", item_id}, {"text", text}}}, {"question", question}, {"position", position},
          {"total", total}};
}

// ----------------------------------------------------------------- session

std::unique_ptr<Session> Session::create(const fs::path& dir, std::string id, std::vector<Item> items,
                                         Schema schema, std::vector<std::string> roster, std::uint64_t seed) {
  if (items.empty()) throw Error("session needs at least one item");
  if (roster.empty()) throw Error("session needs a non-empty roster");
  std::set<std::string> seen;
  for (const auto& it : items) {
    if (!seen.insert(it.id).second) throw Error("duplicate item id " + it.id);
  }
  std::set<std::string> names(roster.begin(), roster.end());
  if (names.size() != roster.size()) throw Error("duplicate annotator in roster");
  if (names.contains("")) throw Error("empty annotator name");

  std::unique_ptr<Session> s(new Session());
  s->dir_ = dir;
  s->id_ = std::move(id);
  s->schema_ = schema;
  s->roster_ = std::move(roster);
  s->seed_ = seed;
  Rng rng(seed);
  rng.shuffle(items);
  s->items_ = std::move(items);
  for (std::size_t i = 0; i < s->items_.size(); ++i) s->index_[s->items_[i].id] = i;
  for (const auto& a : s->roster_) s->tokens_[a] = new_token();

  // Write into a scratch directory, then rename, so a crash never leaves a
  // half-written session behind.
  const fs::path tmp = dir.parent_path() / (dir.filename().string() + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  std::vector<json> lines;
  for (const auto& it : s->items_) lines.push_back(it.to_json());
  write_jsonl(tmp / "items.jsonl", lines);
  write_json_file(tmp / "session.json", json{{"format", kSessionFormat},
                                             {"id", s->id_},
                                             {"schema", schema_name(schema)},
                                             {"roster", s->roster_},
                                             {"tokens", s->tokens_},
                                             {"seed", seed}});
  std::ofstream(tmp / "labels.jsonl").close();
  fs::rename(tmp, dir);
  return s;
}

std::unique_ptr<Session> Session::open(const fs::path& dir) {
  const auto meta = read_json_file(dir / "session.json");
  std::unique_ptr<Session> s(new Session());
  try {
    if (meta.at("format") != kSessionFormat) throw Error("unsupported session format in " + dir.string());
    s->dir_ = dir;
    s->id_ = meta.at("id").get<std::string>();
    s->schema_ = parse_schema(meta.at("schema").get<std::string>());
    s->roster_ = meta.at("roster").get<std::vector<std::string>>();
    s->tokens_ = meta.at("tokens").get<std::map<std::string, std::string>>();
    s->seed_ = meta.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error("session " + dir.string() + ": " + e.what());
  }
  for (const auto& j : read_jsonl(dir / "items.jsonl")) s->items_.push_back(Item::from_json(j));
  for (std::size_t i = 0; i < s->items_.size(); ++i) s->index_[s->items_[i].id] = i;
  // A torn final line from an interrupted append is dropped; the rest replays.
  std::vector<LineError> errors;
  for (const auto& j : read_jsonl(dir / "labels.jsonl", &errors)) s->apply(Label::from_json(j));
  return s;
}

std::vector<Label> Session::labels() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::optional<std::string> Session::annotator_for_token(std::string_view token) const {
  for (const auto& [a, t] : tokens_) {
    if (t == token) return a;
  }
  return std::nullopt;
}

bool Session::finished(const std::string& annotator, const std::string& item_id) const {
  auto it = answers_.find({annotator, item_id});
  if (it == answers_.end()) return false;
  if (schema_ != Schema::kDialect) return true;
  const auto& a = it->second;
  return a.size() == 2 || a.front().at("variety") == "MSA";
}

std::optional<Prompt> Session::next_item(const std::string& annotator) const {
  if (std::find(roster_.begin(), roster_.end(), annotator) == roster_.end()) {
    throw Error("unknown annotator " + annotator);
  }
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (finished(annotator, items_[i].id)) continue;
    auto it = answers_.find({annotator, items_[i].id});
    const std::size_t stage = it == answers_.end() ? 1 : it->second.size() + 1;
    return Prompt{items_[i].id, items_[i].text, question_for(schema_, stage), i, items_.size()};
  }
  return std::nullopt;
}

void Session::check_answer(const std::string& annotator, const std::string& item_id, const json& answer) const {
  if (std::find(roster_.begin(), roster_.end(), annotator) == roster_.end()) {
    throw Error("unknown annotator " + annotator);
  }
  if (!index_.contains(item_id)) throw Error("unknown item " + item_id);
  if (!answer.is_object()) throw Error("answer must be an object");
  if (finished(annotator, item_id)) throw Error("already labeled");
  auto it = answers_.find({annotator, item_id});
  switch (schema_) {
    case Schema::kDetection: {
      const auto label = answer.value("label", json());
      if (label != "human" && label != "generated") throw Error("label must be \"human\" or \"generated\"");
      return;
    }
    case Schema::kDialect: {
      const std::size_t expected = it == answers_.end() ? 1 : 2;
      const auto stage = answer.value("stage", json());
      if (!stage.is_number_integer()) throw Error("answer needs an integer stage");
      if (stage.get<int>() != static_cast<int>(expected)) {
        if (expected == 1) throw Error("stage 2 requires a stage-1 dialect answer first");
        throw Error("already labeled");
      }
      if (expected == 1) {
        const auto v = answer.value("variety", json());
        if (v != "MSA" && v != "dialect") throw Error("variety must be \"MSA\" or \"dialect\"");
      } else if (!answer.value("same_dialect", json()).is_boolean()) {
        throw Error("same_dialect must be a boolean");
      }
      return;
    }
    case Schema::kHarm: {
      for (const auto& [k, v] : answer.items()) {
        if (std::find(kHarmKeys.begin(), kHarmKeys.end(), k) == kHarmKeys.end()) {
          throw Error("unknown harm category " + k);
        }
        if (!v.is_boolean()) throw Error("harm answers must be booleans");
      }
      for (auto k : kHarmKeys) {
        if (!answer.contains(std::string(k))) throw Error("missing harm category " + std::string(k));
      }
      return;
    }
  }
}

void Session::apply(const Label& label) {
  answers_[{label.annotator, label.item}].push_back(label.answer);
  log_.push_back(label);
}

void Session::submit(const std::string& annotator, const std::string& item_id, const json& answer) {
  std::lock_guard lock(mutex_);
  check_answer(annotator, item_id, answer);
  Label label{annotator, item_id, answer, now_ms()};
  {
    std::ofstream out(dir_ / "labels.jsonl", std::ios::app | std::ios::binary);
    out << label.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error("cannot append to label log in " + dir_.string());
  }
  apply(label);
}

json Session::stats() const {
  const auto log = labels();
  json progress = json::object();
  {
    std::lock_guard lock(mutex_);
    for (const auto& a : roster_) {
      std::size_t done = 0;
      for (const auto& it : items_) done += finished(a, it.id) ? 1 : 0;
      progress[a] = done;
    }
  }
  json report;
  if (log.empty()) {
    report = nullptr;
  } else if (schema_ == Schema::kDetection) {
    report = detection_stats(items_, log, roster_).to_json();
  } else if (schema_ == Schema::kDialect) {
    report = dialect_stats(items_, log).to_json();
  } else {
    report = agreement_stats(items_, log).to_json();
  }
  return {{"session", id_}, {"schema", schema_name(schema_)}, {"items", items_.size()},
          {"labels", log.size()}, {"progress", progress},     {"report", report}};
}

// ------------------------------------------------------------------- store

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "sessions", ec);
  const auto probe = root_ / "sessions" / ".write-test";
  std::ofstream out(probe);
  if (ec || !out) throw Error("storage " + root_.string() + " is not writable");
  out.close();
  fs::remove(probe, ec);
}

std::string SessionStore::create(std::vector<Item> items, Schema schema, std::vector<std::string> roster,
                                 std::uint64_t seed) {
  std::string fingerprint = std::string(schema_name(schema)) + '\n' + std::to_string(seed);
  for (const auto& it : items) fingerprint += '\n' + it.id + '\t' + it.text;
  for (const auto& a : roster) fingerprint += '\n' + a;
  const std::string base = "s" + fnv1a_hex(fingerprint);

  std::lock_guard lock(mutex_);
  std::string id = base;
  for (int n = 2; fs::exists(root_ / "sessions" / id); ++n) id = base + "-" + std::to_string(n);
  auto s = Session::create(root_ / "sessions" / id, id, std::move(items), schema, std::move(roster), seed);
  sessions_[id] = std::move(s);
  return id;
}

bool SessionStore::exists(const std::string& id) const {
  return !id.empty() && id.find('/') == std::string::npos && id.find("..") == std::string::npos &&
         fs::exists(root_ / "sessions" / id / "session.json");
}

Session& SessionStore::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return *it->second;
  if (!exists(id)) throw Error("no such session " + id);
  auto& slot = sessions_[id];
  slot = Session::open(root_ / "sessions" / id);
  return *slot;
}

// ------------------------------------------------------------------- stats

json DetectionReport::to_json() const {
  return {{"n_generated", n_generated}, {"detected", detected}, {"detected_rate", detected_rate},
          {"agreed", agreed},           {"accuracy", accuracy}, {"flagged", flagged}};
}

DetectionReport detection_stats(std::span<const Item> items, std::span<const Label> labels,
                                std::span<const std::string> roster) {
  if (labels.empty()) throw Error("no labels");
  std::map<std::string, bool> generated;  // item -> truth
  for (const auto& it : items) {
    const auto src = it.truth.value("source", json());
    if (src != "human" && src != "generated") throw Error("item " + it.id + " lacks truth.source");
    generated[it.id] = src == "generated";
  }
  const std::set<std::string> members(roster.begin(), roster.end());
  std::map<std::string, std::set<std::string>> flaggers;  // generated item -> annotators who caught it
  std::map<std::string, std::pair<std::size_t, std::size_t>> acc;  // annotator -> (correct, total)
  DetectionReport rep;
  for (const auto& l : labels) {
    if (!members.contains(l.annotator)) continue;
    auto g = generated.find(l.item);
    if (g == generated.end()) throw Error("label for unknown item " + l.item);
    const bool said_generated = l.answer.at("label") == "generated";
    auto& [correct, total] = acc[l.annotator];
    ++total;
    correct += said_generated == g->second ? 1 : 0;
    if (g->second && said_generated) {
      flaggers[l.item].insert(l.annotator);
      ++rep.flagged[l.annotator];
    }
  }
  for (const auto& [_, is_gen] : generated) rep.n_generated += is_gen ? 1 : 0;
  for (const auto& [_, who] : flaggers) {
    ++rep.detected;
    rep.agreed += who.size() == members.size() ? 1 : 0;
  }
  rep.detected_rate = pct(rep.detected, rep.n_generated);
  for (const auto& [a, ct] : acc) rep.accuracy[a] = pct(ct.first, ct.second);
  for (const auto& a : roster) rep.flagged.try_emplace(a, 0);
  return rep;
}

json DialectBucket::to_json() const {
  return {{"judged", judged},
          {"dialect", dialect},
          {"answered_stage2", answered_stage2},
          {"same_dialect", same},
          {"dialect_rate", dialect_rate},
          {"same_rate_all", same_rate_all},
          {"same_rate_conditional", same_rate_conditional ? json(*same_rate_conditional) : json("n/a")}};
}

json DialectReport::to_json() const {
  json per = json::object();
  for (const auto& [d, b] : per_dialect) per[d] = b.to_json();
  return {{"overall", overall.to_json()}, {"per_dialect", per}};
}

DialectReport dialect_stats(std::span<const Item> items, std::span<const Label> labels) {
  std::map<std::string, std::string> dialect_of;
  for (const auto& it : items) dialect_of[it.id] = it.truth.value("dialect", std::string("unknown"));
  DialectReport rep;
  auto tally = [](DialectBucket& b, const json& answer) {
    if (answer.at("stage") == 1) {
      ++b.judged;
      b.dialect += answer.at("variety") == "dialect" ? 1 : 0;
    } else {
      ++b.answered_stage2;
      b.same += answer.at("same_dialect").get<bool>() ? 1 : 0;
    }
  };
  for (const auto& l : labels) {
    auto d = dialect_of.find(l.item);
    if (d == dialect_of.end()) throw Error("label for unknown item " + l.item);
    tally(rep.overall, l.answer);
    tally(rep.per_dialect[d->second], l.answer);
  }
  auto finish = [](DialectBucket& b) {
    b.dialect_rate = pct(b.dialect, b.judged);
    b.same_rate_all = pct(b.same, b.judged);
    if (b.answered_stage2 > 0) b.same_rate_conditional = pct(b.same, b.answered_stage2);
  };
  finish(rep.overall);
  for (auto& [_, b] : rep.per_dialect) finish(b);
  return rep;
}

double agreement(const std::vector<bool>& human, const std::vector<bool>& machine) {
  if (human.size() != machine.size()) throw Error("agreement: length mismatch");
  if (human.empty()) throw Error("agreement: no labels");
  std::size_t same = 0;
  for (std::size_t i = 0; i < human.size(); ++i) same += human[i] == machine[i] ? 1 : 0;
  return pct(same, human.size());
}

json AgreementReport::to_json() const { return {{"per_category", per_category}, {"n", n}}; }

AgreementReport agreement_stats(std::span<const Item> items, std::span<const Label> labels) {
  std::map<std::string, const Item*> by_id;
  for (const auto& it : items) by_id[it.id] = &it;
  // category -> annotator -> (human, machine)
  std::map<std::string, std::map<std::string, std::pair<std::vector<bool>, std::vector<bool>>>> pairs;
  for (const auto& l : labels) {
    auto it = by_id.find(l.item);
    if (it == by_id.end()) throw Error("label for unknown item " + l.item);
    for (auto key : kHarmKeys) {
      const std::string k(key);
      if (!l.answer.contains(k) || !it->second->truth.contains(k)) continue;
      const bool h = l.answer.at(k).get<bool>();
      const bool m = it->second->truth.at(k).get<bool>();
      for (const auto& who : {l.annotator, std::string("pooled")}) {
        auto& [hv, mv] = pairs[k][who];
        hv.push_back(h);
        mv.push_back(m);
      }
    }
  }
  AgreementReport rep;
  for (auto& [cat, per] : pairs) {
    for (auto& [who, hm] : per) rep.per_category[cat][who] = agreement(hm.first, hm.second);
    rep.n[cat] = per.at("pooled").first.size();
  }
  return rep;
}

}  // namespace arabeval::annotate
