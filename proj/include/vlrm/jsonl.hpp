#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vlrm/errors.hpp"
#include "vlrm/records.hpp"

namespace vlrm {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

/// Reads and validates every record in a JSONL file. Throws on the first
/// invalid line; use validate_dataset for a full report instead.
template <typename Record>
std::vector<Record> read_jsonl(const std::filesystem::path& path) {
  std::vector<Record> records;
  std::size_t line_no = 0;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j = parse_json_line(line, line_no);
    Record r = Record::from_json(j, line_no);
    r.validate();
    records.push_back(std::move(r));
  }
  return records;
}

template <typename Record>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  for (const auto& r : records) {
    out << serialize_record(r) << '\n';
  }
}

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << content;
}

}  // namespace vlrm
