#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "arabeval/error.hpp"
#include "arabeval/model.hpp"

namespace arabeval::model {

namespace {

std::string pack(std::span<const TokenId> ids) {
  std::string key(ids.size() * sizeof(TokenId), '\0');
  if (!ids.empty()) std::memcpy(key.data(), ids.data(), key.size());
  return key;
}

std::vector<TokenId> unpack(const std::string& key) {
  std::vector<TokenId> ids(key.size() / sizeof(TokenId));
  if (!ids.empty()) std::memcpy(ids.data(), key.data(), key.size());
  return ids;
}

// The last `len` tokens of (BOS * pad) ++ history.
std::vector<TokenId> context_of(std::span<const TokenId> history, std::size_t len) {
  std::vector<TokenId> ctx(len, kBeginOfSequence);
  const std::size_t take = std::min(len, history.size());
  std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
            ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

}  // namespace

void NGramConfig::validate() const {
  if (order < 1) throw ConfigError("ngram: order must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("ngram: alpha must be positive");
  if (vocab_size == 0) throw ConfigError("ngram: vocab_size must be positive");
  if (end_of_text && *end_of_text >= vocab_size) throw ConfigError("ngram: end_of_text outside vocabulary");
}

std::uint64_t NGramModel::ContextStats::count(TokenId w) const {
  auto it = std::lower_bound(next.begin(), next.end(), w,
                             [](const auto& e, TokenId t) { return e.first < t; });
  return it != next.end() && it->first == w ? it->second : 0;
}

NGramModel NGramModel::train(std::span<const TokenSequence> corpus, const NGramConfig& config) {
  config.validate();
  std::unordered_map<std::string, std::map<TokenId, std::uint64_t>> counts;
  std::uint64_t tokens = 0;
  TokenSequence padded;
  for (const auto& seq : corpus) {
    padded.assign(seq.begin(), seq.end());
    if (config.end_of_text) padded.push_back(*config.end_of_text);
    for (std::size_t i = 0; i < padded.size(); ++i) {
      const TokenId w = padded[i];
      if (w >= config.vocab_size) throw Error("training token id outside vocabulary");
      const std::span<const TokenId> history(padded.data(), i);
      for (std::size_t len = 0; len < config.order; ++len) {
        ++counts[pack(context_of(history, len))][w];
      }
      ++tokens;
    }
  }
  if (tokens == 0) throw Error("ngram: empty corpus");

  NGramModel m;
  m.config_ = config;
  m.table_.reserve(counts.size());
  for (auto& [key, next] : counts) {
    ContextStats s;
    s.next.assign(next.begin(), next.end());
    for (const auto& [_, c] : s.next) s.total += c;
    m.table_.emplace(key, std::move(s));
  }
  return m;
}

std::string NGramModel::id() const {
  return "ngram-o" + std::to_string(config_.order) + "-v" + std::to_string(config_.vocab_size);
}

const NGramModel::ContextStats* NGramModel::longest_context(std::span<const TokenId> history) const {
  for (std::size_t len = config_.order; len-- > 0;) {
    auto it = table_.find(pack(context_of(history, len)));
    if (it != table_.end() && it->second.total > 0) return &it->second;
  }
  return nullptr;  // unreachable after a successful train()
}

double NGramModel::prob(std::span<const TokenId> history, TokenId w) const {
  if (w >= config_.vocab_size) throw Error("token id outside the model vocabulary");
  const auto* s = longest_context(history);
  const double v = static_cast<double>(config_.vocab_size);
  return (static_cast<double>(s->count(w)) + config_.alpha) /
         (static_cast<double>(s->total) + config_.alpha * v);
}

std::vector<double> NGramModel::logprobs(std::span<const TokenId> seq) const {
  if (seq.empty()) throw Error("logprobs of an empty sequence");
  std::vector<double> out;
  out.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) out.push_back(std::log(prob(seq.first(i), seq[i])));
  return out;
}

std::vector<double> NGramModel::next_distribution(std::span<const TokenId> context) const {
  const auto* s = longest_context(context);
  const double denom =
      static_cast<double>(s->total) + config_.alpha * static_cast<double>(config_.vocab_size);
  std::vector<double> dist(config_.vocab_size, config_.alpha / denom);
  for (const auto& [w, c] : s->next) dist[w] = (static_cast<double>(c) + config_.alpha) / denom;
  return dist;
}

json NGramModel::to_json() const {
  json contexts = json::array();
  std::vector<const std::pair<const std::string, ContextStats>*> entries;
  for (const auto& e : table_) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return unpack(a->first) < unpack(b->first); });
  for (const auto* e : entries) {
    json next = json::array();
    for (const auto& [w, c] : e->second.next) next.push_back({w, c});
    contexts.push_back({{"context", unpack(e->first)}, {"next", next}});
  }
  json j{{"format", "arabeval-ngram-1"},
         {"order", config_.order},
         {"alpha", config_.alpha},
         {"vocab_size", config_.vocab_size},
         {"contexts", contexts}};
  if (config_.end_of_text) j["end_of_text"] = *config_.end_of_text;
  return j;
}

NGramModel NGramModel::from_json(const json& j) {
  try {
    if (j.at("format") != "arabeval-ngram-1") throw ConfigError("unsupported ngram model format");
    NGramModel m;
    m.config_.order = j.at("order").get<std::size_t>();
    m.config_.alpha = j.at("alpha").get<double>();
    m.config_.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (j.contains("end_of_text")) m.config_.end_of_text = j.at("end_of_text").get<TokenId>();
    m.config_.validate();
    for (const auto& c : j.at("contexts")) {
      ContextStats s;
      for (const auto& e : c.at("next")) {
        s.next.emplace_back(e.at(0).get<TokenId>(), e.at(1).get<std::uint64_t>());
        s.total += s.next.back().second;
      }
      std::sort(s.next.begin(), s.next.end());
      m.table_.emplace(pack(c.at("context").get<std::vector<TokenId>>()), std::move(s));
    }
    if (!m.table_.contains(pack({}))) throw ConfigError("ngram model has no unigram table");
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ngram model: ") + e.what());
  }
}

}  // namespace arabeval::model
