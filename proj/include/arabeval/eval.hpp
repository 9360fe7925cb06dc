#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arabeval/jsonl.hpp"
#include "arabeval/model.hpp"
#include "arabeval/tokens.hpp"

namespace arabeval::eval {

using model::LanguageModel;

// ---------------------------------------------------------------- perplexity

struct DocPerplexity {
  std::size_t index = 0;
  std::size_t tokens = 0;
  double sum_logprob = 0.0;
  double perplexity = 0.0;
};

struct PerplexityReport {
  std::vector<DocPerplexity> docs;
  std::vector<std::size_t> skipped;  // empty documents
  std::size_t total_tokens = 0;
  double total_logprob = 0.0;
  // exp of the token-weighted mean negative logprob over all documents
  double corpus_perplexity = 0.0;

  json to_json() const;
};

// PPL(T) = exp(-(1/n) * sum_i log p(w_i | w_<i)) per document. The parallel
// kernel scores documents concurrently and reduces in document order, so both
// return bit-identical reports.
PerplexityReport perplexity_serial(const LanguageModel& model, std::span<const TokenSequence> docs);
PerplexityReport perplexity_parallel(const LanguageModel& model, std::span<const TokenSequence> docs);

// ------------------------------------------------------------------ prompts

struct Demonstration {
  std::string input;
  std::string target;
};

struct PromptSpec {
  std::size_t k_shots = 0;
  std::vector<Demonstration> demonstrations;  // exactly k_shots
  std::string template_text = "{input}";
  std::string answer_separator = " ";  // between a demonstration's input and target
  std::string separator = "\n\n";      // between blocks
  std::uint64_t shot_seed = 0;
};

std::string render_template(std::string_view template_text, std::string_view input);

// k demonstration blocks in seeded order, then the instance; blocks are
// joined by spec.separator. Throws Error("leakage") when a demonstration
// input equals the instance.
std::string build_prompt(const PromptSpec& spec, std::string_view instance);

// Picks k demonstrations from a pool, skipping `exclude` and any entry whose
// input equals `instance`. Deterministic under seed.
std::vector<Demonstration> select_demonstrations(std::span<const Demonstration> pool, std::size_t k,
                                                 std::uint64_t seed, std::optional<std::size_t> exclude,
                                                 std::string_view instance);

// ---------------------------------------------------------------- LM scores

enum class LmsMode { kMeanLogprob, kSumLogprob };

// Log-probability of the candidate's tokens conditioned on the context;
// averaged over candidate tokens by default.
double lms_score(const LanguageModel& model, const Tokenizer& tok, std::string_view context,
                 std::string_view candidate, LmsMode mode = LmsMode::kMeanLogprob);

struct McqItem {
  std::string context;
  std::vector<std::string> endings;  // 4
  std::size_t gold = 0;
  std::vector<bool> is_real;  // provenance per ending; may be empty

  void validate() const;
  json to_json() const;
  static McqItem from_json(const json& j);
};

struct McqDecision {
  std::size_t chosen = 0;
  std::vector<double> scores;
  bool tie = false;
};

// Argmax; ties go to the lowest index and are flagged.
McqDecision pick_highest(std::span<const double> scores);

// Endings are scored as " " + ending after a non-empty context.
McqDecision score_mcq(const LanguageModel& model, const Tokenizer& tok, const McqItem& item,
                      LmsMode mode = LmsMode::kMeanLogprob);

// ------------------------------------------------------------------ reports

struct EvalReport {
  std::string task;
  std::size_t shots = 0;
  std::string metric;
  double value = 0.0;
  std::map<std::string, double> secondary;
  std::vector<json> items;
  std::uint64_t seed = 0;
  std::string model_id;

  json to_json() const;
};

// Recomputes the headline metric from the per-item records alone.
double recompute_metric(const EvalReport& report);

struct RunConfig {
  std::size_t k_shots = 0;
  std::uint64_t seed = 0;
  std::string template_text = "{input}";
  std::string answer_separator = " ";
  std::string separator = "\n\n";
  std::size_t max_tokens = 16;
  LmsMode lms_mode = LmsMode::kMeanLogprob;
  int workers = 1;
};

struct AutocompleteItem {
  std::string text;    // context without the final word
  std::string target;  // the final word
};

// Greedy continuation; the prediction is its first whitespace-delimited
// word. Headline metric exact_match, secondary char_f1.
EvalReport run_autocomplete(const LanguageModel& model, const Tokenizer& tok,
                            std::span<const AutocompleteItem> dataset, const RunConfig& config);

struct ClassificationItem {
  std::string text;
  std::string label;
};

// Prediction is the label whose verbalizer scores highest after the prompt.
// Headline metric macro_f1 over label_set. Verbalizers default to the labels.
EvalReport run_classification(const LanguageModel& model, const Tokenizer& tok,
                              std::span<const ClassificationItem> dataset,
                              const std::vector<std::string>& label_set, const RunConfig& config,
                              const std::map<std::string, std::string>& verbalizers = {});

// Headline metric accuracy; demonstrations are other items' context + real ending.
EvalReport run_mcq(const LanguageModel& model, const Tokenizer& tok, std::span<const McqItem> items,
                   const RunConfig& config);

// ------------------------------------------------------------------ metrics

// Percentages in [0, 100]. Classes with no gold and no predicted instance
// contribute F1 = 0. Length mismatch throws.
double macro_f1(std::span<const std::string> preds, std::span<const std::string> golds,
                std::span<const std::string> label_set);
double exact_match(std::span<const std::string> preds, std::span<const std::string> golds);
// Character-multiset overlap F1 between two words, in [0, 100].
double char_f1(std::string_view pred, std::string_view gold);

std::string first_word(std::string_view text);

}  // namespace arabeval::eval
