#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arabeval/jsonl.hpp"

namespace arabeval::corpus {

struct RawDocument {
  std::string id;
  std::string body;
  std::string source;

  friend bool operator==(const RawDocument&, const RawDocument&) = default;
};

json to_json(const RawDocument& doc);
// Throws Error when "body" is missing or not a string.
RawDocument document_from_json(const json& j);

struct CleaningConfig {
  bool strip_html = true;
  bool strip_elongation = true;
  bool strip_hash_signs = true;
  int max_char_repeat = 2;
  std::string url_placeholder = "<URL>";
  std::string mention_placeholder = "<USER>";
  double min_arabic_ratio = 0.95;

  // Which character classes the repeat cap governs.
  bool repeat_arabic_letters = true;
  bool repeat_emoji = true;
  bool repeat_emoticons = true;
  std::vector<std::string> emoticons = default_emoticons();

  static std::vector<std::string> default_emoticons();

  // Throws ConfigError on an invalid field.
  void validate() const;
  // Reads a "cleaning" config section; absent keys keep their defaults.
  static CleaningConfig from_json(const json& section);
  json to_json() const;
};

std::string clean_text(std::string_view raw, const CleaningConfig& config);

// Arabic-block code points over non-whitespace code points; 0 for blank text.
double arabic_char_ratio(std::string_view text);

// Cleans each document and keeps those meeting config.min_arabic_ratio.
// Both kernels return identical output in input order.
std::vector<RawDocument> filter_documents_serial(std::span<const RawDocument> docs,
                                                 const CleaningConfig& config);
std::vector<RawDocument> filter_documents_parallel(std::span<const RawDocument> docs,
                                                   const CleaningConfig& config);

struct FilterStats {
  std::size_t read = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t malformed = 0;
};

struct RecordError {
  std::size_t line = 0;
  std::string message;
};

using ErrorSink = std::function<void(const RecordError&)>;

// Streams JSONL RawDocuments from `in` to `out`. Lines are processed in
// batches; within a batch documents are cleaned in parallel and emitted in
// input order. Malformed lines go to `on_error` and the stream continues.
FilterStats filter_corpus(std::istream& in, std::ostream& out, const CleaningConfig& config,
                          const ErrorSink& on_error, std::size_t batch_size = 8192);

class TextClassifier {
 public:
  virtual ~TextClassifier() = default;
  virtual std::vector<std::string> labels() const = 0;
  virtual std::string classify(std::string_view text) const = 0;
};

// Returns the first label (in declaration order) with a keyword occurring in
// the text, else the fallback label.
class LexiconClassifier final : public TextClassifier {
 public:
  LexiconClassifier(std::vector<std::pair<std::string, std::vector<std::string>>> lexicon,
                    std::string fallback);
  static LexiconClassifier from_json(const json& j);

  std::vector<std::string> labels() const override;
  std::string classify(std::string_view text) const override;

 private:
  std::vector<std::pair<std::string, std::vector<std::string>>> lexicon_;
  std::string fallback_;
};

// Exact-text lookup; used for planted-label fixtures.
class LookupClassifier final : public TextClassifier {
 public:
  LookupClassifier(std::map<std::string, std::string> table, std::vector<std::string> labels,
                   std::string fallback);

  std::vector<std::string> labels() const override { return labels_; }
  std::string classify(std::string_view text) const override;

 private:
  std::map<std::string, std::string, std::less<>> table_;
  std::vector<std::string> labels_;
  std::string fallback_;
};

struct DistributionReport {
  std::map<std::string, double> variety_proportions;
  std::map<std::string, double> country_proportions;
  std::map<std::string, std::size_t> variety_counts;
  std::map<std::string, std::size_t> country_counts;
  std::size_t sample_size = 0;
  std::size_t dialect_size = 0;

  json to_json() const;
};

// Label tallies; merge is associative and commutative so per-worker
// accumulators can be folded in any order.
class DistributionAccumulator {
 public:
  void add(const std::string& variety, const std::optional<std::string>& country);
  void merge(const DistributionAccumulator& other);
  DistributionReport finish() const;

 private:
  std::map<std::string, std::size_t> variety_;
  std::map<std::string, std::size_t> country_;
  std::size_t total_ = 0;
  std::size_t dialect_ = 0;
};

inline constexpr std::string_view kDialectLabel = "dialect";
inline constexpr std::string_view kMsaLabel = "MSA";

// The country classifier only sees items the variety classifier labels
// "dialect". `workers` > 1 classifies concurrently; both classifiers must
// then be safe to call from several threads.
DistributionReport distribution_report(std::span<const std::string> sample,
                                       const TextClassifier& variety_clf,
                                       const TextClassifier& country_clf, int workers = 1);

}  // namespace arabeval::corpus
