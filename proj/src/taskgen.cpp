#include "arabeval/taskgen.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <unordered_set>

#include "arabeval/error.hpp"
#include "arabeval/rng.hpp"
#include "arabeval/unicode.hpp"

namespace arabeval::taskgen {

namespace uc = arabeval::unicode;

namespace {

constexpr int kRedraws = 20;

struct Spec {
  Technique t;
  std::string_view name;
  std::size_t min_len;
};

constexpr Spec kSpecs[] = {
    {Technique::kCycleLetters, "CL", 2},     {Technique::kAnagram1, "A1", 4},
    {Technique::kAnagram2, "A2", 5},         {Technique::kRandomInsertion, "RI", 2},
    {Technique::kReversedWord, "RW", 1},
};

const Spec& spec(Technique t) {
  for (const auto& s : kSpecs) {
    if (s.t == t) return s;
  }
  throw Error("unknown technique");
}

std::u32string rotate_left(const std::u32string& w, std::size_t r) {
  return w.substr(r) + w.substr(0, r);
}

// Shuffles w[lo, hi) until it differs from the original; falls back to a
// one-step rotation, which differs for any non-constant span.
std::u32string scramble_interior(const std::u32string& w, std::size_t lo, std::size_t hi, Rng& rng) {
  std::u32string out = w;
  for (int attempt = 0; attempt <= kRedraws; ++attempt) {
    std::span<char32_t> interior(out.data() + lo, hi - lo);
    rng.shuffle(interior);
    if (out != w) return out;
  }
  out = w;
  std::rotate(out.begin() + static_cast<std::ptrdiff_t>(lo), out.begin() + static_cast<std::ptrdiff_t>(lo) + 1,
              out.begin() + static_cast<std::ptrdiff_t>(hi));
  return out;
}

std::size_t distinct(const std::u32string& w, std::size_t lo, std::size_t hi) {
  return std::set<char32_t>(w.begin() + static_cast<std::ptrdiff_t>(lo), w.begin() + static_cast<std::ptrdiff_t>(hi)).size();
}

bool in_alphabet(char32_t c, std::span<const char32_t> alphabet) {
  return std::find(alphabet.begin(), alphabet.end(), c) != alphabet.end();
}

// The reason a word is rejected, or empty.
std::string rejection(const std::u32string& w, Technique t, std::span<const char32_t> alphabet) {
  if (w.empty()) return "empty word";
  for (char32_t c : w) {
    if (uc::is_whitespace(c)) return "not a single token";
  }
  if (w.size() < spec(t).min_len) return "too short";
  if (t == Technique::kAnagram1 && distinct(w, 1, w.size() - 1) < 2) return "unscrambleable";
  if (t == Technique::kAnagram2 && distinct(w, 2, w.size() - 2) < 2) return "unscrambleable";
  if (t == Technique::kRandomInsertion) {
    for (char32_t c : w) {
      if (in_alphabet(c, alphabet)) return "contains an insertion character";
    }
  }
  return {};
}

}  // namespace

std::string_view technique_name(Technique t) { return spec(t).name; }

Technique parse_technique(std::string_view name) {
  for (const auto& s : kSpecs) {
    if (s.name == name) return s.t;
  }
  throw ConfigError("unknown technique \"" + std::string(name) + "\" (expected CL, A1, A2, RI or RW)");
}

std::size_t min_length(Technique t) { return spec(t).min_len; }

const std::vector<char32_t>& default_insertion_alphabet() {
  static const std::vector<char32_t> alphabet{U' ', U'.', U',', U'!', U'?', U':', U'-', U'+'};
  return alphabet;
}

json ScrambleItem::to_json() const {
  return json{{"original", original},
              {"manipulated", manipulated},
              {"technique", std::string(technique_name(technique))},
              {"seed", seed}};
}

std::string scramble(std::string_view word, Technique technique, std::uint64_t seed,
                     std::span<const char32_t> insertion_alphabet) {
  const auto w = uc::decode(word);
  if (auto why = rejection(w, technique, insertion_alphabet); !why.empty()) throw Error(why);
  Rng rng(seed);
  switch (technique) {
    case Technique::kCycleLetters: {
      const std::size_t n = w.size();
      for (int attempt = 0; attempt <= kRedraws; ++attempt) {
        auto out = rotate_left(w, 1 + rng.below(n - 1));
        if (out != w) return uc::encode(out);
      }
      // Periodic word: take the smallest rotation that changes it, if any.
      for (std::size_t r = 1; r < n; ++r) {
        auto out = rotate_left(w, r);
        if (out != w) return uc::encode(out);
      }
      return std::string(word);
    }
    case Technique::kAnagram1:
      return uc::encode(scramble_interior(w, 1, w.size() - 1, rng));
    case Technique::kAnagram2:
      return uc::encode(scramble_interior(w, 2, w.size() - 2, rng));
    case Technique::kRandomInsertion: {
      std::u32string out;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i > 0) out.push_back(insertion_alphabet[rng.below(insertion_alphabet.size())]);
        out.push_back(w[i]);
      }
      return uc::encode(out);
    }
    case Technique::kReversedWord:
      return uc::encode(std::u32string(w.rbegin(), w.rend()));
  }
  throw Error("unknown technique");
}

bool eligible(std::string_view word, Technique technique, std::span<const char32_t> insertion_alphabet) {
  const auto w = uc::decode(word);
  if (!rejection(w, technique, insertion_alphabet).empty()) return false;
  for (char32_t c : w) {
    if (uc::is_digit(c) || in_alphabet(c, insertion_alphabet)) return false;
  }
  return true;
}

ScrambleDataset build_scramble_dataset(std::span<const std::string> dictionary, Technique technique,
                                       std::size_t n, std::uint64_t seed,
                                       std::span<const char32_t> insertion_alphabet) {
  ScrambleDataset out;
  std::unordered_set<std::string> seen;
  for (std::size_t rank = 0; rank < dictionary.size() && out.items.size() < n; ++rank) {
    const auto& word = dictionary[rank];
    if (!seen.insert(word).second) {
      out.skipped.push_back(word + ": duplicate");
      continue;
    }
    if (!eligible(word, technique, insertion_alphabet)) {
      auto why = rejection(uc::decode(word), technique, insertion_alphabet);
      out.skipped.push_back(word + ": " + (why.empty() ? "contains a digit or insertion character" : why));
      continue;
    }
    const auto item_seed = mix_seed(seed, rank);
    out.items.push_back({word, scramble(word, technique, item_seed, insertion_alphabet), technique, item_seed});
  }
  if (out.items.size() < n) {
    throw Error("only " + std::to_string(out.items.size()) + " eligible words for n=" + std::to_string(n));
  }
  return out;
}

std::vector<AutocompletePair> build_autocomplete_dataset(std::span<const std::string> texts,
                                                         std::size_t min_words) {
  std::vector<AutocompletePair> out;
  for (const auto& text : texts) {
    const auto cps = uc::decode(text);
    // Word spans over code points.
    std::vector<std::pair<std::size_t, std::size_t>> words;
    std::size_t i = 0;
    while (i < cps.size()) {
      while (i < cps.size() && uc::is_whitespace(cps[i])) ++i;
      std::size_t j = i;
      while (j < cps.size() && !uc::is_whitespace(cps[j])) ++j;
      if (j > i) words.emplace_back(i, j);
      i = j;
    }
    if (words.size() < std::max<std::size_t>(min_words, 2)) continue;
    auto [start, end] = words.back();
    while (end > start && uc::is_punct(cps[end - 1])) --end;
    if (end == start) continue;
    const auto ctx_end = words[words.size() - 2].second;
    out.push_back({uc::encode(std::u32string_view(cps).substr(words.front().first, ctx_end - words.front().first)),
                   uc::encode(std::u32string_view(cps).substr(start, end - start))});
  }
  return out;
}

std::optional<std::string> BiasProbe::slot(std::string_view name) const {
  for (const auto& [k, v] : slots) {
    if (k == name) return v;
  }
  return std::nullopt;
}

json BiasProbe::to_json() const {
  json s = json::object();
  for (const auto& [k, v] : slots) s[k] = v;
  json order = json::array();
  for (const auto& [k, _] : slots) order.push_back(k);
  return json{{"template_id", template_id}, {"slots", s}, {"slot_order", order}, {"prompt", prompt}};
}

BiasProbe BiasProbe::from_json(const json& j) {
  BiasProbe p;
  try {
    p.template_id = j.at("template_id").get<std::string>();
    p.prompt = j.at("prompt").get<std::string>();
    const auto& s = j.at("slots");
    if (j.contains("slot_order")) {
      for (const auto& k : j.at("slot_order")) p.slots.emplace_back(k.get<std::string>(), s.at(k.get<std::string>()).get<std::string>());
    } else {
      for (const auto& [k, v] : s.items()) p.slots.emplace_back(k, v.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(std::string("probe record: ") + e.what());
  }
  return p;
}

std::string fill_slots(std::string_view template_text,
                       std::span<const std::pair<std::string, std::string>> slots) {
  std::string out(template_text);
  for (const auto& [name, value] : slots) {
    const std::string key = "{" + name + "}";
    auto at = out.find(key);
    if (at == std::string::npos) throw ConfigError("template has no " + key + " slot");
    while (at != std::string::npos) {
      out.replace(at, key.size(), value);
      at = out.find(key, at + value.size());
    }
  }
  if (out.find('{') != std::string::npos && out.find('}') != std::string::npos) {
    throw ConfigError("template has unfilled slots: " + out);
  }
  return out;
}

namespace {

void warn_duplicates(std::span<const std::string> values, std::string_view what, ProbeExpansion& out) {
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (!seen.insert(v).second) out.warnings.push_back("duplicate " + std::string(what) + ": " + v);
  }
}

void require_nonempty(std::span<const std::string> values, std::string_view what) {
  if (values.empty()) throw Error("empty " + std::string(what) + " list");
}

}  // namespace

ProbeExpansion expand_occupation_probes(std::span<const std::string> occupations, std::string_view template_text) {
  require_nonempty(occupations, "occupation");
  ProbeExpansion out;
  warn_duplicates(occupations, "occupation", out);
  for (const auto& o : occupations) {
    std::vector<std::pair<std::string, std::string>> slots{{"occupation", o}};
    out.probes.push_back({"occupation", slots, fill_slots(template_text, slots)});
  }
  return out;
}

ProbeExpansion expand_demographic_probes(std::span<const std::string> genders, std::span<const std::string> regions,
                                         std::span<const std::string> colors, std::string_view template_text) {
  require_nonempty(genders, "gender");
  require_nonempty(regions, "region");
  require_nonempty(colors, "color");
  ProbeExpansion out;
  for (const auto& g : genders) {
    for (const auto& r : regions) {
      for (const auto& c : colors) {
        std::vector<std::pair<std::string, std::string>> slots{{"gender", g}, {"region", r}, {"color", c}};
        out.probes.push_back({"demographic", slots, fill_slots(template_text, slots)});
      }
    }
  }
  return out;
}

ProbeExpansion expand_group_probes(std::span<const std::string> groups, std::string_view template_text) {
  require_nonempty(groups, "group");
  ProbeExpansion out;
  warn_duplicates(groups, "group", out);
  for (const auto& g : groups) {
    std::vector<std::pair<std::string, std::string>> slots{{"group", g}};
    out.probes.push_back({"group", slots, fill_slots(template_text, slots)});
  }
  return out;
}

BiasData BiasData::load(const std::filesystem::path& dir) {
  BiasData d;
  d.occupations = read_lines(dir / "occupations.txt");
  d.genders = read_lines(dir / "genders.txt");
  d.regions = read_lines(dir / "regions.txt");
  d.colors = read_lines(dir / "colors.txt");
  d.groups = read_lines(dir / "groups.txt");
  if (std::filesystem::exists(dir / "templates.json")) {
    const auto t = read_json_file(dir / "templates.json");
    d.templates.occupation = t.value("occupation", d.templates.occupation);
    d.templates.demographic = t.value("demographic", d.templates.demographic);
    d.templates.group = t.value("group", d.templates.group);
  }
  return d;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("ARABEVAL_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return ARABEVAL_DATA_DIR;
}

}  // namespace arabeval::taskgen
