#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arabeval/corpus.hpp"
#include "arabeval/jsonl.hpp"
#include "arabeval/model.hpp"
#include "arabeval/taskgen.hpp"
#include "arabeval/tokens.hpp"

namespace arabeval::bias {

using taskgen::BiasProbe;

struct CompletionRecord {
  BiasProbe probe;
  std::string completion;
  std::size_t sample_index = 0;
  std::uint64_t seed = 0;  // the seed passed to the model for this probe
  model::SamplingParams params;
  std::optional<std::string> error;  // set when the model failed twice

  json to_json() const;
  static CompletionRecord from_json(const json& j);
};

// params.n_samples is replaced by n; probe i samples with seed
// mix(params.seed, i). A failing probe is retried once; if it fails again it
// yields n records carrying the error, so the output always holds
// |probes| * n records in probe order.
std::vector<CompletionRecord> run_probe_suite(const model::LanguageModel& model, const Tokenizer& tokenizer,
                                              std::span<const BiasProbe> probes,
                                              const model::SamplingParams& params, std::size_t n,
                                              int workers = 1);

struct MentionSplit {
  std::vector<CompletionRecord> kept;
  std::vector<CompletionRecord> review;  // no lexicon entry found
};

MentionSplit filter_profession_mentions(std::span<const CompletionRecord> records,
                                        std::span<const std::string> lexicon);

// Annotation items for manual triage, in the format `annotate create` reads.
std::vector<json> review_export(std::span<const CompletionRecord> records);

// ------------------------------------------------------------------- harm

enum class HarmCategory { kAbusive, kDangerous, kHateful, kOffensive };
inline constexpr std::size_t kHarmCategories = 4;
inline constexpr std::array<HarmCategory, kHarmCategories> kAllHarmCategories{
    HarmCategory::kAbusive, HarmCategory::kDangerous, HarmCategory::kHateful, HarmCategory::kOffensive};

std::string_view harm_name(HarmCategory c);
HarmCategory parse_harm(std::string_view name);

class HarmClassifier {
 public:
  virtual ~HarmClassifier() = default;
  virtual HarmCategory category() const = 0;
  virtual bool classify(std::string_view text) const = 0;
};

class KeywordHarmClassifier final : public HarmClassifier {
 public:
  KeywordHarmClassifier(HarmCategory category, std::vector<std::string> keywords);
  HarmCategory category() const override { return category_; }
  bool classify(std::string_view text) const override;

 private:
  HarmCategory category_;
  std::vector<std::string> keywords_;
};

// nullopt = unscored (classifier failed or absent).
using HarmFlags = std::array<std::optional<bool>, kHarmCategories>;

// ------------------------------------------------------------------- wage

enum class WageLabel { kHigh, kMedium, kLow, kNone };

std::string_view wage_name(WageLabel w);  // "high-wage", ...
WageLabel parse_wage(std::string_view name);

// Keyword auto-labeler; meant for tests, real wage labels come from people.
class LexiconWageLabeler {
 public:
  LexiconWageLabeler(std::vector<std::string> high, std::vector<std::string> medium, std::vector<std::string> low);
  WageLabel label(std::string_view text) const;

 private:
  std::array<std::vector<std::string>, 3> lexicon_;
};

struct LabeledRecord {
  CompletionRecord record;
  HarmFlags harm{};
  std::optional<WageLabel> wage;

  json to_json() const;
};

// At most one classifier per category; a missing category stays unscored.
std::vector<LabeledRecord> classify_harm(std::span<const CompletionRecord> records,
                                         std::span<const HarmClassifier* const> classifiers, int workers = 1);

// ----------------------------------------------------------------- reports

enum class Tally { kWage, kHarm };

struct GroupRow {
  std::size_t records = 0;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::size_t> denominators;
  std::map<std::string, double> percentages;
  std::size_t none = 0;  // wage tally: records labeled none or unlabeled
};

struct BiasReport {
  std::string slot;
  Tally tally = Tally::kWage;
  std::map<std::string, GroupRow> groups;
  std::vector<std::string> warnings;

  json to_json() const;
};

// Wage: per group, share of {high, medium, low} over records carrying one of
// them. Harm: per group and category, share flagged positive over scored
// records. Groups without a denominator are omitted with a warning.
BiasReport aggregate_bias_report(std::span<const LabeledRecord> records, std::string_view slot, Tally tally);

struct GenderLeanReport {
  std::size_t occupations = 0;
  std::size_t male = 0;
  std::size_t female = 0;
  std::size_t undetermined = 0;  // ties and all-neither
  double male_percent = 0.0;     // over all occupations
  std::map<std::string, std::string> majority;

  json to_json() const;
};

inline constexpr std::string_view kMale = "male";
inline constexpr std::string_view kFemale = "female";
inline constexpr std::string_view kNeither = "neither";

GenderLeanReport gender_lean_report(std::span<const CompletionRecord> records,
                                    const corpus::TextClassifier& detector);

// Rough linguistic-gender cue counter (pronouns, plural and feminine
// suffixes). Not a real classifier.
class SuffixGenderDetector final : public corpus::TextClassifier {
 public:
  std::vector<std::string> labels() const override;
  std::string classify(std::string_view text) const override;
};

}  // namespace arabeval::bias
