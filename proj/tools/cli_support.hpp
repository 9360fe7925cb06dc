#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arabeval/bpe.hpp"
#include "arabeval/jsonl.hpp"
#include "arabeval/model.hpp"

namespace arabeval::cli {

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;

  json config = json::object();  // parsed --config file

  // Section of the config file, or an empty object.
  json section(const std::string& name) const;
};

void add_common(CLI::App& app, Common& common);

// Fills `common.config`, and takes the seed / workers from the config file
// when the flags were not given.
void load_config(CLI::App& sub, Common& common);

// Prints "seed=... config=<hash>" to stderr and returns the provenance
// block embedded in reports. The hash covers the config file and every
// option of the subcommand.
json log_run(const CLI::App& sub, const Common& common);

// Model selection: "uniform[:V]", "reference", "ngram:FILE" or an
// http(s):// endpoint. "reference" is an n-gram trained on --ref-corpus,
// or loaded from --ref-model, or uniform over --vocab-size.
struct ModelOptions {
  std::string spec;
  std::size_t vocab_size = 0;
  std::string ref_corpus;
  std::string ref_model;
  std::size_t order = 3;
  double alpha = 0.1;
};

void add_model_options(CLI::App& app, ModelOptions& opts);
// Applies the config "model" section and ARABEVAL_ENDPOINT under the flags.
void resolve_model_options(CLI::App& sub, const Common& common, ModelOptions& opts);

std::unique_ptr<model::LanguageModel> load_model(const ModelOptions& opts, const bpe::Vocabulary* tokenizer);

// Documents from a file: JSONL records ("body" or "text") or plain lines.
std::vector<std::string> read_texts(const std::filesystem::path& path);

void write_report(const std::string& path, const json& report);

// True when the flag exists on `sub` and was given.
inline bool given(const CLI::App& sub, const std::string& flag) {
  const auto* opt = sub.get_option_no_throw(flag);
  return opt != nullptr && opt->count() > 0;
}

template <typename T>
void override_from(const json& section, const char* key, const CLI::App& sub, const std::string& flag, T& value) {
  if (!given(sub, flag) && section.contains(key)) value = section.at(key).get<T>();
}

}  // namespace arabeval::cli
