#pragma once

// Stage manifests record what happened to every input record plus the
// gateway call log, in input order, with no wall-clock content: two runs
// over the same inputs and script produce byte-identical manifests. The
// run-level manifest written by the CLI carries timing and is the one file
// exempt from byte determinism.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlrm/gateway.hpp"
#include "vlrm/jsonl.hpp"
#include "vlrm/records.hpp"
#include "vlrm/sha256.hpp"

namespace vlrm {

struct RecordNote {
  std::size_t index = 0;
  std::string id;
  std::string status;  // "ok" | "failed"
  std::string note;    // provenance detail, judge outcome, ...
  std::string error;   // failure reason when status == "failed"

  json to_json() const {
    json j{{"kind", "record"}, {"index", index}, {"id", id}, {"status", status}};
    if (!note.empty()) j["note"] = note;
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

class StageManifest {
 public:
  explicit StageManifest(std::string stage) : stage_(std::move(stage)) {}

  void add_record(RecordNote note) { records_.push_back(std::move(note)); }

  void add_calls(std::vector<CallLogEntry> calls) {
    for (auto& c : calls) calls_.push_back(std::move(c));
  }

  void set_summary(json summary) { summary_ = std::move(summary); }

  std::size_t failure_count() const {
    std::size_t n = 0;
    for (const auto& r : records_) {
      if (r.status == "failed") ++n;
    }
    return n;
  }

  const std::vector<RecordNote>& records() const { return records_; }

  std::vector<std::string> lines() const {
    std::vector<std::string> out;
    json header{{"kind", "stage"}, {"stage", stage_}};
    for (const auto& item : summary_.items()) header[item.key()] = item.value();
    out.push_back(header.dump());
    for (const auto& r : records_) out.push_back(r.to_json().dump());
    for (const auto& c : calls_) {
      json j = c.to_json();
      j["kind"] = "call";
      out.push_back(j.dump());
    }
    return out;
  }

  void write(const std::filesystem::path& path) const { write_lines(path, lines()); }

 private:
  std::string stage_;
  json summary_ = json::object();
  std::vector<RecordNote> records_;
  std::vector<CallLogEntry> calls_;
};

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot hash missing file: " + path.string());
  Sha256 hash;
  char buffer[65536];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    hash.update(buffer, static_cast<std::size_t>(in.gcount()));
  }
  return hash.hex_digest();
}

}  // namespace vlrm
