#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace arabeval {

using json = nlohmann::json;

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

// Reads every JSONL record; blank lines are skipped, malformed lines are
// reported through `errors` (when given) and otherwise throw.
std::vector<json> read_jsonl(const std::filesystem::path& path,
                             std::vector<LineError>* errors = nullptr);
std::vector<json> read_jsonl(std::istream& in, std::vector<LineError>* errors = nullptr);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
void write_jsonl(std::ostream& out, const std::vector<json>& records);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& value);

// One entry per non-empty line, trailing whitespace trimmed. '#' comments
// are NOT stripped because several data files hold literal '#'.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace arabeval
