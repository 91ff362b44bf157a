#pragma once

// Internal JSONL helpers shared by the file-format readers.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dpolab/errors.hpp"

namespace dpolab::detail {

using json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path,
                       std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

/// Calls fn(record, line_number) for every non-blank line. JSON syntax and
/// type errors become ParseError with the 1-based line number.
template <typename Fn>
void for_each_jsonl(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!record.is_object()) {
      throw ParseError(line_no, "expected a JSON object");
    }
    try {
      fn(record, line_no);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

/// Required field accessor with a readable message.
inline const json& field(const json& record, const char* name,
                         std::size_t line) {
  auto it = record.find(name);
  if (it == record.end()) {
    throw ParseError(line, std::string("missing field '") + name + "'");
  }
  return *it;
}

}  // namespace dpolab::detail
