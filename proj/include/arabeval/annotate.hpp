#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "arabeval/jsonl.hpp"

namespace httplib {
class Server;
}

namespace arabeval::annotate {

// detection: {"label": "human"|"generated"}
// dialect:   stage 1 {"stage":1,"variety":"MSA"|"dialect"}, then only after
//            "dialect", stage 2 {"stage":2,"same_dialect":bool}
// harm:      {"abusive":bool,"dangerous":bool,"hateful":bool,"offensive":bool}
enum class Schema { kDetection, kDialect, kHarm };

std::string_view schema_name(Schema s);
Schema parse_schema(std::string_view name);

struct Item {
  std::string id;
  std::string text;
  json truth = json::object();  // never sent to annotators
  json meta = json::object();   // stored, never sent either

  json to_json() const;
  static Item from_json(const json& j);
};

struct Label {
  std::string annotator;
  std::string item;
  json answer;
  std::int64_t timestamp_ms = 0;

  json to_json() const;
  static Label from_json(const json& j);
};

// What an annotator sees: no truth, no metadata.
struct Prompt {
  std::string item_id;
  std::string text;
  json question;
  std::size_t position = 0;  // 0-based index in session order
  std::size_t total = 0;

  json to_json() const;
};

class Session {
 public:
  // Shuffles items under seed and persists to dir. Throws on empty items,
  // duplicate ids, empty or duplicate roster.
  static std::unique_ptr<Session> create(const std::filesystem::path& dir, std::string id,
                                         std::vector<Item> items, Schema schema,
                                         std::vector<std::string> roster, std::uint64_t seed);
  // Reloads a persisted session, replaying the label log.
  static std::unique_ptr<Session> open(const std::filesystem::path& dir);

  const std::string& id() const { return id_; }
  Schema schema() const { return schema_; }
  const std::vector<std::string>& roster() const { return roster_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Item>& items() const { return items_; }  // session order
  std::vector<Label> labels() const;
  // annotator -> bearer token
  const std::map<std::string, std::string>& tokens() const { return tokens_; }
  // The annotator owning the token, if any.
  std::optional<std::string> annotator_for_token(std::string_view token) const;

  // First item in session order this annotator has not finished; nullopt
  // once the session is complete for them.
  std::optional<Prompt> next_item(const std::string& annotator) const;

  // Validates the answer against the schema and appends it to the log.
  // Errors: unknown annotator, unknown item, "already labeled", stage out of
  // order, malformed answer.
  void submit(const std::string& annotator, const std::string& item_id, const json& answer);

  json stats() const;

 private:
  Session() = default;
  void check_answer(const std::string& annotator, const std::string& item_id, const json& answer) const;
  void apply(const Label& label);
  bool finished(const std::string& annotator, const std::string& item_id) const;

  std::filesystem::path dir_;
  std::string id_;
  Schema schema_ = Schema::kDetection;
  std::vector<std::string> roster_;
  std::map<std::string, std::string> tokens_;
  std::uint64_t seed_ = 0;
  std::vector<Item> items_;
  std::map<std::string, std::size_t> index_;

  mutable std::mutex mutex_;
  std::vector<Label> log_;
  // (annotator, item) -> answers so far, one per stage
  std::map<std::pair<std::string, std::string>, std::vector<json>> answers_;
};

// Directory of sessions: root/sessions/{id}/.
class SessionStore {
 public:
  // Creates the root if needed; throws when it cannot be written.
  explicit SessionStore(std::filesystem::path root);

  // Returns the new session id (derived from content and seed).
  std::string create(std::vector<Item> items, Schema schema, std::vector<std::string> roster,
                     std::uint64_t seed);
  Session& get(const std::string& id);  // loads from disk on first use; throws if absent
  bool exists(const std::string& id) const;

 private:
  std::filesystem::path root_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

// ----------------------------------------------------------------- stats
// Pure functions of (items, labels).

struct DetectionReport {
  std::size_t n_generated = 0;
  std::size_t detected = 0;  // generated items flagged by at least one annotator
  double detected_rate = 0.0;
  std::size_t agreed = 0;  // flagged by every annotator in the roster
  std::map<std::string, double> accuracy;
  std::map<std::string, std::size_t> flagged;

  json to_json() const;
};

DetectionReport detection_stats(std::span<const Item> items, std::span<const Label> labels,
                                std::span<const std::string> roster);

struct DialectBucket {
  std::size_t judged = 0;   // stage-1 answers
  std::size_t dialect = 0;  // stage-1 "dialect"
  std::size_t answered_stage2 = 0;
  std::size_t same = 0;
  double dialect_rate = 0.0;
  double same_rate_all = 0.0;                  // same / judged
  std::optional<double> same_rate_conditional;  // same / answered_stage2

  json to_json() const;
};

struct DialectReport {
  DialectBucket overall;
  std::map<std::string, DialectBucket> per_dialect;  // by the item's truth "dialect"

  json to_json() const;
};

DialectReport dialect_stats(std::span<const Item> items, std::span<const Label> labels);

// matches / n in percent. Throws on length mismatch or empty input.
double agreement(const std::vector<bool>& human, const std::vector<bool>& machine);

struct AgreementReport {
  // category -> annotator -> percent; "pooled" holds every annotator's labels
  std::map<std::string, std::map<std::string, double>> per_category;
  std::map<std::string, std::size_t> n;

  json to_json() const;
};

// Human harm answers against the machine labels stored in each item's truth.
AgreementReport agreement_stats(std::span<const Item> items, std::span<const Label> labels);

// ----------------------------------------------------------------- server

// POST /api/session                  {items, schema, roster, seed}
//                                    -> {session, tokens}
// GET  /api/session/{id}/next?annotator=NAME       (Authorization: Bearer)
// POST /api/session/{id}/label       {annotator, item, answer}  (Bearer)
// GET  /api/session/{id}/stats
class AnnotationServer {
 public:
  explicit AnnotationServer(SessionStore& store);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  int bind(const std::string& host = "127.0.0.1", int port = 0);
  void start();
  void listen_blocking();
  void stop();

 private:
  SessionStore& store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace arabeval::annotate
