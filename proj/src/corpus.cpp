#include "arabeval/corpus.hpp"

#include <omp.h>

#include <algorithm>
#include <istream>
#include <ostream>

#include "arabeval/error.hpp"
#include "arabeval/unicode.hpp"

namespace arabeval::corpus {

namespace uc = arabeval::unicode;

json to_json(const RawDocument& doc) {
  return json{{"id", doc.id}, {"body", doc.body}, {"source", doc.source}};
}

RawDocument document_from_json(const json& j) {
  if (!j.is_object()) throw Error("record is not an object");
  auto it = j.find("body");
  if (it == j.end() || !it->is_string()) throw Error("missing string field \"body\"");
  RawDocument doc;
  doc.body = it->get<std::string>();
  if (auto id = j.find("id"); id != j.end()) {
    doc.id = id->is_string() ? id->get<std::string>() : id->dump();
  }
  if (auto src = j.find("source"); src != j.end() && src->is_string()) {
    doc.source = src->get<std::string>();
  }
  return doc;
}

std::vector<std::string> CleaningConfig::default_emoticons() {
  return {":)",  ":-)", ":(",  ":-(", ":D", ":-D", ";)",  ";-)", ":P",  ":-P", ":p",
          ":-p", "xD",  "XD",  "<3",  ":'(", ":O", ":o",  "^_^", "-_-", ":*",  ":|"};
}

void CleaningConfig::validate() const {
  if (max_char_repeat < 1) throw ConfigError("cleaning: max_char_repeat must be >= 1");
  if (!(min_arabic_ratio >= 0.0 && min_arabic_ratio <= 1.0)) {
    throw ConfigError("cleaning: min_arabic_ratio must lie in [0, 1]");
  }
  for (const auto& e : emoticons) {
    if (e.empty()) throw ConfigError("cleaning: empty emoticon in lexicon");
  }
}

CleaningConfig CleaningConfig::from_json(const json& s) {
  CleaningConfig c;
  try {
    c.strip_html = s.value("strip_html", c.strip_html);
    c.strip_elongation = s.value("strip_elongation", c.strip_elongation);
    c.strip_hash_signs = s.value("strip_hash_signs", c.strip_hash_signs);
    c.max_char_repeat = s.value("max_char_repeat", c.max_char_repeat);
    c.url_placeholder = s.value("url_placeholder", c.url_placeholder);
    c.mention_placeholder = s.value("mention_placeholder", c.mention_placeholder);
    c.min_arabic_ratio = s.value("min_arabic_ratio", c.min_arabic_ratio);
    c.repeat_arabic_letters = s.value("repeat_arabic_letters", c.repeat_arabic_letters);
    c.repeat_emoji = s.value("repeat_emoji", c.repeat_emoji);
    c.repeat_emoticons = s.value("repeat_emoticons", c.repeat_emoticons);
    if (s.contains("emoticons")) c.emoticons = s.at("emoticons").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cleaning: ") + e.what());
  }
  c.validate();
  return c;
}

json CleaningConfig::to_json() const {
  return json{{"strip_html", strip_html},
              {"strip_elongation", strip_elongation},
              {"strip_hash_signs", strip_hash_signs},
              {"max_char_repeat", max_char_repeat},
              {"url_placeholder", url_placeholder},
              {"mention_placeholder", mention_placeholder},
              {"min_arabic_ratio", min_arabic_ratio},
              {"repeat_arabic_letters", repeat_arabic_letters},
              {"repeat_emoji", repeat_emoji},
              {"repeat_emoticons", repeat_emoticons},
              {"emoticons", emoticons}};
}

namespace {

bool is_ascii_letter(char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool starts_with_at(const std::u32string& s, std::size_t pos, std::u32string_view prefix) {
  return s.size() - pos >= prefix.size() && std::u32string_view(s).substr(pos, prefix.size()) == prefix;
}

bool starts_with_ci(const std::u32string& s, std::size_t pos, std::string_view ascii) {
  if (s.size() - pos < ascii.size()) return false;
  for (std::size_t k = 0; k < ascii.size(); ++k) {
    char32_t c = s[pos + k];
    if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
    if (c != static_cast<char32_t>(ascii[k])) return false;
  }
  return true;
}

struct Cleaner {
  const CleaningConfig& cfg;
  std::u32string url_ph;
  std::u32string user_ph;
  std::vector<std::u32string> emoticons;  // longest first

  explicit Cleaner(const CleaningConfig& c)
      : cfg(c), url_ph(uc::decode(c.url_placeholder)), user_ph(uc::decode(c.mention_placeholder)) {
    for (const auto& e : c.emoticons) emoticons.push_back(uc::decode(e));
    std::stable_sort(emoticons.begin(), emoticons.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
  }

  bool is_placeholder(std::u32string_view v) const { return v == url_ph || v == user_ph; }

  // Removes one layer of tags; '<' must be followed by a letter, '/' or '!'
  // and the tag must close before another '<'. Placeholders are kept.
  bool strip_tags(std::u32string& s) const {
    std::u32string out;
    out.reserve(s.size());
    bool changed = false;
    std::size_t i = 0;
    while (i < s.size()) {
      if (s[i] == '<' && i + 1 < s.size() &&
          (is_ascii_letter(s[i + 1]) || s[i + 1] == '/' || s[i + 1] == '!')) {
        std::size_t j = i + 1;
        while (j < s.size() && s[j] != '>' && s[j] != '<') ++j;
        if (j < s.size() && s[j] == '>' &&
            !is_placeholder(std::u32string_view(s).substr(i, j - i + 1))) {
          i = j + 1;
          changed = true;
          continue;
        }
      }
      out.push_back(s[i++]);
    }
    s.swap(out);
    return changed;
  }

  bool strip_chars(std::u32string& s) const {
    const auto before = s.size();
    std::erase_if(s, [&](char32_t c) {
      return (cfg.strip_hash_signs && c == '#') || (cfg.strip_elongation && c == uc::kTatweel);
    });
    return s.size() != before;
  }

  // Deletions can expose new tags ("<#b>"), so they run to a fixpoint.
  void delete_markup(std::u32string& s) const {
    bool changed = true;
    while (changed) {
      changed = false;
      if (cfg.strip_html) changed |= strip_tags(s);
      changed |= strip_chars(s);
    }
  }

  static bool boundary_before(const std::u32string& s, std::size_t i) {
    return i == 0 || !uc::is_word_char(s[i - 1]);
  }

  void replace_urls_and_mentions(std::u32string& s) const {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      if (boundary_before(s, i) &&
          (starts_with_ci(s, i, "http://") || starts_with_ci(s, i, "https://") ||
           starts_with_ci(s, i, "www."))) {
        std::size_t j = i;
        while (j < s.size() && !uc::is_whitespace(s[j])) ++j;
        out += url_ph;
        i = j;
        continue;
      }
      if (s[i] == '@' && boundary_before(s, i) && i + 1 < s.size() && uc::is_word_char(s[i + 1])) {
        // "@a@b" is two mentions: once the first is replaced the second
        // would sit on a boundary, so take it now to stay idempotent.
        std::size_t j = i;
        while (j + 1 < s.size() && s[j] == '@' && uc::is_word_char(s[j + 1])) {
          ++j;
          while (j < s.size() && uc::is_word_char(s[j])) ++j;
          out += user_ph;
        }
        i = j;
        continue;
      }
      out.push_back(s[i++]);
    }
    s.swap(out);
  }

  const std::u32string* emoticon_at(const std::u32string& s, std::size_t i) const {
    for (const auto& e : emoticons) {
      if (starts_with_at(s, i, e)) return &e;
    }
    return nullptr;
  }

  void collapse_repeats(std::u32string& s) const {
    const auto cap = static_cast<std::size_t>(cfg.max_char_repeat);
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
      if (cfg.repeat_emoticons) {
        if (const auto* e = emoticon_at(s, i)) {
          std::size_t run = 0;
          std::size_t j = i;
          while (starts_with_at(s, j, *e)) {
            ++run;
            j += e->size();
          }
          for (std::size_t k = 0; k < std::min(run, cap); ++k) out += *e;
          i = j;
          continue;
        }
      }
      const char32_t c = s[i];
      const bool governed = (cfg.repeat_arabic_letters && uc::is_arabic_letter(c)) ||
                            (cfg.repeat_emoji && uc::is_emoji(c));
      std::size_t j = i + 1;
      if (governed) {
        while (j < s.size() && s[j] == c) ++j;
      }
      out.append(std::min(j - i, governed ? cap : j - i), c);
      i = j;
    }
    s.swap(out);
  }

  std::string operator()(std::string_view raw) const {
    auto s = uc::decode(raw);
    delete_markup(s);
    replace_urls_and_mentions(s);
    collapse_repeats(s);
    return uc::encode(s);
  }
};

}  // namespace

std::string clean_text(std::string_view raw, const CleaningConfig& config) {
  if (raw.empty()) return {};
  return Cleaner(config)(raw);
}

double arabic_char_ratio(std::string_view text) {
  std::size_t arabic = 0;
  std::size_t counted = 0;
  for (char32_t c : uc::decode(text)) {
    if (uc::is_whitespace(c)) continue;
    ++counted;
    if (uc::is_arabic(c)) ++arabic;
  }
  return counted == 0 ? 0.0 : static_cast<double>(arabic) / static_cast<double>(counted);
}

std::vector<RawDocument> filter_documents_serial(std::span<const RawDocument> docs,
                                                 const CleaningConfig& config) {
  const Cleaner clean(config);
  std::vector<RawDocument> out;
  for (const auto& d : docs) {
    RawDocument c{d.id, clean(d.body), d.source};
    if (arabic_char_ratio(c.body) >= config.min_arabic_ratio) out.push_back(std::move(c));
  }
  return out;
}

std::vector<RawDocument> filter_documents_parallel(std::span<const RawDocument> docs,
                                                   const CleaningConfig& config) {
  const Cleaner clean(config);
  const auto n = static_cast<std::ptrdiff_t>(docs.size());
  std::vector<std::optional<RawDocument>> slots(docs.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& d = docs[static_cast<std::size_t>(i)];
    RawDocument c{d.id, clean(d.body), d.source};
    if (arabic_char_ratio(c.body) >= config.min_arabic_ratio) {
      slots[static_cast<std::size_t>(i)] = std::move(c);
    }
  }
  std::vector<RawDocument> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

FilterStats filter_corpus(std::istream& in, std::ostream& out, const CleaningConfig& config,
                          const ErrorSink& on_error, std::size_t batch_size) {
  config.validate();
  const Cleaner clean(config);
  FilterStats stats;
  std::vector<std::string> lines;
  std::size_t first_line = 1;

  auto flush = [&] {
    const auto n = static_cast<std::ptrdiff_t>(lines.size());
    std::vector<std::string> emitted(lines.size());
    std::vector<std::optional<std::string>> errors(lines.size());
    std::vector<char> kept(lines.size(), 0);
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const auto& line = lines[k];
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto doc = document_from_json(json::parse(line));
        doc.body = clean(doc.body);
        if (arabic_char_ratio(doc.body) >= config.min_arabic_ratio) {
          emitted[k] = to_json(doc).dump();
          kept[k] = 1;
        }
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
    for (std::size_t k = 0; k < lines.size(); ++k) {
      if (lines[k].find_first_not_of(" \t\r") == std::string::npos) continue;
      ++stats.read;
      if (errors[k]) {
        ++stats.malformed;
        if (on_error) on_error({first_line + k, *errors[k]});
      } else if (kept[k]) {
        ++stats.kept;
        out << emitted[k] << '\n';
      } else {
        ++stats.dropped;
      }
    }
    first_line += lines.size();
    lines.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    lines.push_back(std::move(line));
    if (lines.size() >= batch_size) flush();
  }
  if (!lines.empty()) flush();
  return stats;
}

LexiconClassifier::LexiconClassifier(
    std::vector<std::pair<std::string, std::vector<std::string>>> lexicon, std::string fallback)
    : lexicon_(std::move(lexicon)), fallback_(std::move(fallback)) {}

LexiconClassifier LexiconClassifier::from_json(const json& j) {
  // {"fallback": "MSA", "labels": [["dialect", ["kw", ...]], ...]}
  std::vector<std::pair<std::string, std::vector<std::string>>> lex;
  try {
    for (const auto& entry : j.at("labels")) {
      lex.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<std::vector<std::string>>());
    }
    return LexiconClassifier(std::move(lex), j.at("fallback").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("lexicon classifier: ") + e.what());
  }
}

std::vector<std::string> LexiconClassifier::labels() const {
  std::vector<std::string> out;
  for (const auto& [label, _] : lexicon_) {
    if (std::find(out.begin(), out.end(), label) == out.end()) out.push_back(label);
  }
  if (std::find(out.begin(), out.end(), fallback_) == out.end()) out.push_back(fallback_);
  return out;
}

std::string LexiconClassifier::classify(std::string_view text) const {
  for (const auto& [label, words] : lexicon_) {
    for (const auto& w : words) {
      if (!w.empty() && text.find(w) != std::string_view::npos) return label;
    }
  }
  return fallback_;
}

LookupClassifier::LookupClassifier(std::map<std::string, std::string> table,
                                   std::vector<std::string> labels, std::string fallback)
    : table_(table.begin(), table.end()), labels_(std::move(labels)), fallback_(std::move(fallback)) {}

std::string LookupClassifier::classify(std::string_view text) const {
  auto it = table_.find(text);
  return it == table_.end() ? fallback_ : it->second;
}

json DistributionReport::to_json() const {
  return json{{"sample_size", sample_size},
              {"dialect_size", dialect_size},
              {"variety_proportions", variety_proportions},
              {"country_proportions", country_proportions},
              {"variety_counts", variety_counts},
              {"country_counts", country_counts}};
}

void DistributionAccumulator::add(const std::string& variety,
                                  const std::optional<std::string>& country) {
  ++total_;
  ++variety_[variety];
  if (country) {
    ++dialect_;
    ++country_[*country];
  }
}

void DistributionAccumulator::merge(const DistributionAccumulator& other) {
  total_ += other.total_;
  dialect_ += other.dialect_;
  for (const auto& [k, v] : other.variety_) variety_[k] += v;
  for (const auto& [k, v] : other.country_) country_[k] += v;
}

DistributionReport DistributionAccumulator::finish() const {
  DistributionReport r;
  r.sample_size = total_;
  r.dialect_size = dialect_;
  r.variety_counts = variety_;
  r.country_counts = country_;
  for (const auto& [k, v] : variety_) {
    r.variety_proportions[k] = 100.0 * static_cast<double>(v) / static_cast<double>(total_);
  }
  for (const auto& [k, v] : country_) {
    r.country_proportions[k] = 100.0 * static_cast<double>(v) / static_cast<double>(dialect_);
  }
  return r;
}

namespace {

std::string checked_label(const TextClassifier& clf, const std::vector<std::string>& labels,
                          std::string_view text) {
  auto label = clf.classify(text);
  if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
    throw Error("classifier returned undeclared label \"" + label + "\"");
  }
  return label;
}

}  // namespace

DistributionReport distribution_report(std::span<const std::string> sample,
                                       const TextClassifier& variety_clf,
                                       const TextClassifier& country_clf, int workers) {
  if (sample.empty()) throw Error("empty sample");
  const auto vlabels = variety_clf.labels();
  for (auto need : {kMsaLabel, kDialectLabel}) {
    if (std::find(vlabels.begin(), vlabels.end(), need) == vlabels.end()) {
      throw ConfigError("variety classifier must declare label \"" + std::string(need) + "\"");
    }
  }
  const auto clabels = country_clf.labels();

  const int nworkers = std::max(1, workers);
  std::vector<DistributionAccumulator> partial(static_cast<std::size_t>(nworkers));
  std::vector<std::string> failures(static_cast<std::size_t>(nworkers));
  const auto n = static_cast<std::ptrdiff_t>(sample.size());
#pragma omp parallel for num_threads(nworkers) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto w = static_cast<std::size_t>(omp_get_thread_num());
    if (!failures[w].empty()) continue;
    try {
      const auto& text = sample[static_cast<std::size_t>(i)];
      auto variety = checked_label(variety_clf, vlabels, text);
      std::optional<std::string> country;
      if (variety == kDialectLabel) country = checked_label(country_clf, clabels, text);
      partial[w].add(variety, country);
    } catch (const std::exception& e) {
      failures[w] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw Error(f);
  }
  DistributionAccumulator total;
  for (const auto& p : partial) total.merge(p);
  return total.finish();
}

}  // namespace arabeval::corpus
