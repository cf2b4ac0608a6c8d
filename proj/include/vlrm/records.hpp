#pragma once

// Domain records shared by every pipeline stage, their JSONL wire schemas,
// and dataset-level validation. Records are plain values: immutable once
// built, cheap to move, safe to hand between worker threads.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vlrm/errors.hpp"

namespace vlrm {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Small enums, stored as literal strings on the wire.

enum class Verdict { yes, no };
enum class Provenance { hallucination_retained, object_altered, external_augmented, random_injected };
enum class RationaleMode { critique, descriptive };
enum class RationaleSource { teacher, self };
enum class ScoreNormalization { raw, renormalized };
enum class EvalCategory { general, hallucination, reasoning };

inline std::string to_string(Verdict v) { return v == Verdict::yes ? "Yes" : "No"; }

inline Verdict verdict_from_string(const std::string& s) {
  if (s == "Yes") return Verdict::yes;
  if (s == "No") return Verdict::no;
  throw ValidationError("label must be \"Yes\" or \"No\", got \"" + s + "\"");
}

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::hallucination_retained: return "hallucination-retained";
    case Provenance::object_altered: return "object-altered";
    case Provenance::external_augmented: return "external-augmented";
    case Provenance::random_injected: return "random-injected";
  }
  return "";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "hallucination-retained") return Provenance::hallucination_retained;
  if (s == "object-altered") return Provenance::object_altered;
  if (s == "external-augmented") return Provenance::external_augmented;
  if (s == "random-injected") return Provenance::random_injected;
  throw ValidationError("unknown provenance \"" + s + "\"");
}

inline std::string to_string(RationaleMode m) { return m == RationaleMode::critique ? "critique" : "descriptive"; }

inline RationaleMode rationale_mode_from_string(const std::string& s) {
  if (s == "critique") return RationaleMode::critique;
  if (s == "descriptive") return RationaleMode::descriptive;
  throw ValidationError("unknown rationale mode \"" + s + "\"");
}

inline std::string to_string(RationaleSource s) { return s == RationaleSource::teacher ? "teacher" : "self"; }

inline RationaleSource rationale_source_from_string(const std::string& s) {
  if (s == "teacher") return RationaleSource::teacher;
  if (s == "self") return RationaleSource::self;
  throw ValidationError("unknown rationale source \"" + s + "\"");
}

inline std::string to_string(ScoreNormalization n) {
  return n == ScoreNormalization::raw ? "raw" : "renormalized";
}

inline ScoreNormalization normalization_from_string(const std::string& s) {
  if (s == "raw") return ScoreNormalization::raw;
  if (s == "renormalized") return ScoreNormalization::renormalized;
  throw ValidationError("unknown normalization mode \"" + s + "\"");
}

inline std::string to_string(EvalCategory c) {
  switch (c) {
    case EvalCategory::general: return "general";
    case EvalCategory::hallucination: return "hallucination";
    case EvalCategory::reasoning: return "reasoning";
  }
  return "";
}

inline EvalCategory eval_category_from_string(const std::string& s) {
  if (s == "general") return EvalCategory::general;
  if (s == "hallucination") return EvalCategory::hallucination;
  if (s == "reasoning") return EvalCategory::reasoning;
  throw ValidationError("unknown eval category \"" + s + "\"");
}

// ---------------------------------------------------------------------------
// ImageRef

struct ImageRef {
  std::string uri;                       // file path, URL, or data: URI
  std::string media_type = "image/jpeg";

  void validate() const {
    if (uri.empty()) throw ValidationError("image uri must be non-empty");
    if (uri.rfind("data:", 0) == 0) {
      auto comma = uri.find(',');
      if (comma == std::string::npos || comma + 1 >= uri.size()) {
        throw ValidationError("inline image data must decode to nonzero bytes");
      }
    }
  }

  json to_json() const { return json{{"uri", uri}, {"media_type", media_type}}; }

  static ImageRef from_json(const json& j) {
    if (!j.is_object() || !j.contains("uri") || !j["uri"].is_string()) throw SchemaError("image.uri");
    ImageRef ref;
    ref.uri = j["uri"].get<std::string>();
    if (j.contains("media_type")) ref.media_type = j["media_type"].get<std::string>();
    return ref;
  }

  bool operator==(const ImageRef&) const = default;
};

// ---------------------------------------------------------------------------
// ObjectSet: normalized object labels, optionally with confidence and box.

/// Lowercase, trim, and collapse internal whitespace. Idempotent.
inline std::string normalize_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

struct ObjectEntry {
  std::string label;  // normalized
  std::optional<double> confidence;
  std::optional<std::array<double, 4>> box;  // x0, y0, x1, y1 in pixels

  void validate() const {
    if (confidence && (*confidence < 0.0 || *confidence > 1.0)) {
      throw ValidationError("object confidence must lie in [0,1]");
    }
    if (box && ((*box)[0] > (*box)[2] || (*box)[1] > (*box)[3])) {
      throw ValidationError("object box must satisfy x0<=x1 and y0<=y1");
    }
  }

  bool operator==(const ObjectEntry&) const = default;
};

class ObjectSet {
 public:
  ObjectSet() = default;

  static ObjectSet from_labels(const std::vector<std::string>& labels) {
    ObjectSet set;
    for (const auto& l : labels) set.add(l);
    return set;
  }

  /// Adds one entry; the label is normalized and duplicates are dropped
  /// (first occurrence wins). Empty labels after normalization are ignored.
  void add(std::string_view label, std::optional<double> confidence = std::nullopt,
           std::optional<std::array<double, 4>> box = std::nullopt) {
    std::string norm = normalize_label(label);
    if (norm.empty()) return;
    if (contains(norm)) return;
    ObjectEntry entry{std::move(norm), confidence, box};
    entry.validate();
    entries_.push_back(std::move(entry));
  }

  bool contains(std::string_view normalized) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const ObjectEntry& e) { return e.label == normalized; });
  }

  const std::vector<ObjectEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.label);
    return out;
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& e : entries_) {
      json obj{{"label", e.label}};
      if (e.confidence) obj["confidence"] = *e.confidence;
      if (e.box) obj["box"] = json::array({(*e.box)[0], (*e.box)[1], (*e.box)[2], (*e.box)[3]});
      arr.push_back(std::move(obj));
    }
    return arr;
  }

  static ObjectSet from_json(const json& j) {
    if (!j.is_array()) throw SchemaError("object set");
    ObjectSet set;
    for (const auto& item : j) {
      if (item.is_string()) {
        set.add(item.get<std::string>());
        continue;
      }
      if (!item.is_object() || !item.contains("label")) throw SchemaError("object.label");
      std::optional<double> conf;
      if (item.contains("confidence")) conf = item["confidence"].get<double>();
      std::optional<std::array<double, 4>> box;
      if (item.contains("box")) {
        const auto& b = item["box"];
        if (!b.is_array() || b.size() != 4) throw SchemaError("object.box");
        box = std::array<double, 4>{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      }
      set.add(item["label"].get<std::string>(), conf, box);
    }
    return set;
  }

  bool operator==(const ObjectSet&) const = default;

 private:
  std::vector<ObjectEntry> entries_;
};

/// Optional user-supplied synonym map, applied after normalization when
/// comparing mentioned labels against detections.
using SynonymMap = std::map<std::string, std::string>;

inline std::string canonical_object_label(const std::string& normalized, const SynonymMap* synonyms) {
  if (synonyms) {
    auto it = synonyms->find(normalized);
    if (it != synonyms->end()) return it->second;
  }
  return normalized;
}

// ---------------------------------------------------------------------------
// RewardScore

struct RewardScore {
  double p_yes = 0.0;
  double p_no = 0.0;
  double r = 0.0;
  ScoreNormalization normalization = ScoreNormalization::renormalized;

  void validate() const {
    if (p_yes < 0.0 || p_yes > 1.0 || p_no < 0.0 || p_no > 1.0) {
      throw ValidationError("verdict probabilities must lie in [0,1]");
    }
    if (r < 0.0 || r > 1.0) throw ValidationError("reward score must lie in [0,1]");
    if (normalization == ScoreNormalization::raw) {
      if (r != p_yes) throw ValidationError("raw mode requires r == p_yes");
    } else {
      if (p_yes + p_no <= 0.0) throw ValidationError("renormalized mode requires p_yes + p_no > 0");
    }
  }

  json to_json() const {
    return json{{"p_yes", p_yes}, {"p_no", p_no}, {"r", r}, {"normalization", to_string(normalization)}};
  }

  static RewardScore from_json(const json& j) {
    RewardScore s;
    if (!j.is_object() || !j.contains("p_yes") || !j.contains("p_no") || !j.contains("r")) {
      throw SchemaError("score");
    }
    s.p_yes = j["p_yes"].get<double>();
    s.p_no = j["p_no"].get<double>();
    s.r = j["r"].get<double>();
    if (j.contains("normalization")) s.normalization = normalization_from_string(j["normalization"].get<std::string>());
    return s;
  }

  bool operator==(const RewardScore&) const = default;
};

// ---------------------------------------------------------------------------
// MarginRange

struct MarginRange {
  double lower = 0.3;  // shipped default: first-iteration threshold range
  double upper = 1.0;

  void validate() const {
    if (lower > upper) throw ValidationError("margin range requires lower <= upper");
    if (lower < -1.0 || upper > 1.0) throw ValidationError("margin thresholds must lie in [-1,1]");
  }

  bool contains(double m) const { return m >= lower && m <= upper; }
};

// ---------------------------------------------------------------------------
// Records

namespace detail {

inline const json& require_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(key, line);
  return *it;
}

inline std::string require_string(const json& j, const char* key, std::size_t line) {
  const json& v = require_field(j, key, line);
  if (!v.is_string()) throw SchemaError(key, line);
  return v.get<std::string>();
}

/// Collects top-level keys that are not part of the schema so they survive a
/// parse/serialize round trip.
inline json collect_extra(const json& j, std::initializer_list<const char*> known) {
  json extra = json::object();
  for (const auto& item : j.items()) {
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return item.key() == k; }) == known.end()) {
      extra[item.key()] = item.value();
    }
  }
  return extra;
}

inline void append_extra(json& j, const json& extra) {
  for (const auto& item : extra.items()) j[item.key()] = item.value();
}

}  // namespace detail

struct RawSample {
  std::string id;
  ImageRef image;
  std::string query;
  std::string chosen;
  json extra = json::object();

  void validate() const {
    if (id.empty()) throw ValidationError("sample id must be non-empty");
    image.validate();
    if (query.empty()) throw ValidationError("query must be non-empty");
    if (chosen.empty()) throw ValidationError("chosen response must be non-empty");
  }

  json to_json() const {
    json j{{"id", id}, {"image", image.to_json()}, {"query", query}, {"chosen", chosen}};
    detail::append_extra(j, extra);
    return j;
  }

  static RawSample from_json(const json& j, std::size_t line = 0) {
    RawSample s;
    s.id = detail::require_string(j, "id", line);
    s.image = ImageRef::from_json(detail::require_field(j, "image", line));
    s.query = detail::require_string(j, "query", line);
    s.chosen = detail::require_string(j, "chosen", line);
    s.extra = detail::collect_extra(j, {"id", "image", "query", "chosen"});
    return s;
  }

  bool operator==(const RawSample&) const = default;
};

struct PairSample {
  std::string id;
  ImageRef image;
  std::string query;
  std::string chosen;    // Y+
  std::string rejected;  // refined negative
  Verdict label = Verdict::no;
  Provenance provenance = Provenance::hallucination_retained;
  ObjectSet mentioned_objects;  // extracted from the collected negative
  ObjectSet detected_objects;   // detector output for the image
  json extra = json::object();

  void validate() const {
    if (id.empty()) throw ValidationError("sample id must be non-empty");
    image.validate();
    if (query.empty()) throw ValidationError("query must be non-empty");
    if (chosen.empty()) throw ValidationError("chosen response must be non-empty");
    if (rejected.empty()) throw ValidationError("rejected response must be non-empty");
    if (chosen == rejected) throw ValidationError("chosen and rejected responses must differ");
  }

  json to_json_known() const {
    return json{{"id", id},
                {"image", image.to_json()},
                {"query", query},
                {"chosen", chosen},
                {"rejected", rejected},
                {"label", to_string(label)},
                {"provenance", to_string(provenance)},
                {"mentioned_objects", mentioned_objects.to_json()},
                {"detected_objects", detected_objects.to_json()}};
  }

  json to_json() const {
    json j = to_json_known();
    detail::append_extra(j, extra);
    return j;
  }

  static PairSample from_json(const json& j, std::size_t line = 0) {
    PairSample s;
    s.id = detail::require_string(j, "id", line);
    s.image = ImageRef::from_json(detail::require_field(j, "image", line));
    s.query = detail::require_string(j, "query", line);
    s.chosen = detail::require_string(j, "chosen", line);
    s.rejected = detail::require_string(j, "rejected", line);
    s.label = verdict_from_string(detail::require_string(j, "label", line));
    s.provenance = provenance_from_string(detail::require_string(j, "provenance", line));
    if (j.contains("mentioned_objects")) s.mentioned_objects = ObjectSet::from_json(j["mentioned_objects"]);
    if (j.contains("detected_objects")) s.detected_objects = ObjectSet::from_json(j["detected_objects"]);
    s.extra = detail::collect_extra(j, {"id", "image", "query", "chosen", "rejected", "label", "provenance",
                                        "mentioned_objects", "detected_objects"});
    return s;
  }

  bool operator==(const PairSample&) const = default;
};

struct Rationale {
  std::string text;
  RationaleMode mode = RationaleMode::critique;
  RationaleSource source = RationaleSource::teacher;
  std::optional<RewardScore> score;

  void validate() const {
    if (text.empty()) throw ValidationError("rationale text must be non-empty");
    if (score) score->validate();
  }

  json to_json() const {
    json j{{"text", text}, {"mode", to_string(mode)}, {"source", to_string(source)}};
    if (score) j["score"] = score->to_json();
    return j;
  }

  static Rationale from_json(const json& j, std::size_t line = 0) {
    Rationale r;
    r.text = detail::require_string(j, "text", line);
    r.mode = rationale_mode_from_string(detail::require_string(j, "mode", line));
    r.source = rationale_source_from_string(detail::require_string(j, "source", line));
    if (j.contains("score")) r.score = RewardScore::from_json(j["score"]);
    return r;
  }

  bool operator==(const Rationale&) const = default;
};

struct TrainSample {
  PairSample pair;
  Rationale rationale_chosen;    // c+
  Rationale rationale_rejected;  // c-

  void validate() const {
    pair.validate();
    rationale_chosen.validate();
    rationale_rejected.validate();
  }

  json to_json() const {
    json j = pair.to_json_known();
    j["rationale_chosen"] = rationale_chosen.to_json();
    j["rationale_rejected"] = rationale_rejected.to_json();
    detail::append_extra(j, pair.extra);
    return j;
  }

  static TrainSample from_json(const json& j, std::size_t line = 0) {
    TrainSample s;
    s.pair = PairSample::from_json(j, line);
    s.pair.extra.erase("rationale_chosen");
    s.pair.extra.erase("rationale_rejected");
    s.rationale_chosen = Rationale::from_json(detail::require_field(j, "rationale_chosen", line), line);
    s.rationale_rejected = Rationale::from_json(detail::require_field(j, "rationale_rejected", line), line);
    return s;
  }

  bool operator==(const TrainSample&) const = default;
};

/// One record of the iteration output: a train sample whose rationales are
/// self-generated and scored, plus the selected pair's margin.
struct IterSample {
  TrainSample train;
  double margin = 0.0;

  void validate() const {
    train.validate();
    if (!train.rationale_chosen.score || !train.rationale_rejected.score) {
      throw ValidationError("iteration records require scored rationales");
    }
    double expect = train.rationale_chosen.score->r - train.rationale_rejected.score->r;
    if (std::abs(margin - expect) > 1e-12) {
      throw ValidationError("margin must equal score(c+) - score(c-)");
    }
  }

  json to_json() const {
    json j = train.to_json();
    j["margin"] = margin;
    return j;
  }

  static IterSample from_json(const json& j, std::size_t line = 0) {
    IterSample s;
    s.train = TrainSample::from_json(j, line);
    s.train.pair.extra.erase("margin");
    const json& m = detail::require_field(j, "margin", line);
    if (!m.is_number()) throw SchemaError("margin", line);
    s.margin = m.get<double>();
    return s;
  }

  bool operator==(const IterSample&) const = default;
};

struct EvalRecord {
  std::string id;
  EvalCategory category = EvalCategory::general;
  ImageRef image;
  std::string query;
  std::string chosen;
  std::string rejected;
  json extra = json::object();

  void validate() const {
    if (id.empty()) throw ValidationError("eval record id must be non-empty");
    image.validate();
    if (query.empty()) throw ValidationError("query must be non-empty");
    if (chosen.empty() || rejected.empty()) throw ValidationError("both responses must be non-empty");
    if (chosen == rejected) throw ValidationError("chosen and rejected responses must differ");
  }

  json to_json() const {
    json j{{"id", id},       {"category", to_string(category)}, {"image", image.to_json()},
           {"query", query}, {"chosen", chosen},                {"rejected", rejected}};
    detail::append_extra(j, extra);
    return j;
  }

  static EvalRecord from_json(const json& j, std::size_t line = 0) {
    EvalRecord r;
    r.id = detail::require_string(j, "id", line);
    r.category = eval_category_from_string(detail::require_string(j, "category", line));
    r.image = ImageRef::from_json(detail::require_field(j, "image", line));
    r.query = detail::require_string(j, "query", line);
    r.chosen = detail::require_string(j, "chosen", line);
    r.rejected = detail::require_string(j, "rejected", line);
    r.extra = detail::collect_extra(j, {"id", "category", "image", "query", "chosen", "rejected"});
    return r;
  }

  bool operator==(const EvalRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Training-file dialogue schema

struct DialogueMessage {
  std::string role;  // "user" | "assistant"
  std::string text;
  std::optional<std::string> image_uri;
};

struct DialogueRecord {
  std::vector<DialogueMessage> messages;
  std::string sample_id;
  std::string format;       // "ift" | "genrm" | "judge"
  std::string mixture_tag;  // "verify" | "correct-solution"
  double weight = 1.0;

  void validate() const {
    if (messages.empty()) throw ValidationError("dialogue has no messages");
    for (const auto& m : messages) {
      if (m.role != "user" && m.role != "assistant") {
        throw ValidationError("dialogue roles must alternate user/assistant, got \"" + m.role + "\"");
      }
    }
    const std::string& final_text = messages.back().text;
    if (format == "ift") {
      if (messages.size() != 4) throw ValidationError("ift dialogues have exactly 4 messages");
      if (final_text != "Yes" && final_text != "No") {
        throw ValidationError("ift dialogues end with the verdict token");
      }
    } else if (format == "genrm") {
      if (messages.size() != 2) throw ValidationError("genrm dialogues have exactly 2 messages");
      if (final_text != "Yes" && final_text != "No") {
        throw ValidationError("genrm dialogues end with the verdict token");
      }
    } else if (format != "judge") {
      throw ValidationError("unknown dialogue format \"" + format + "\"");
    }
    if (mixture_tag != "verify" && mixture_tag != "correct-solution") {
      throw ValidationError("unknown mixture tag \"" + mixture_tag + "\"");
    }
    if (!(weight >= 0.0)) throw ValidationError("dialogue weight must be >= 0");
  }

  json to_json() const {
    json msgs = json::array();
    for (const auto& m : messages) {
      json msg{{"role", m.role}, {"text", m.text}};
      if (m.image_uri) msg["image"] = *m.image_uri;
      msgs.push_back(std::move(msg));
    }
    return json{{"messages", std::move(msgs)},
                {"metadata", json{{"sample_id", sample_id}, {"format", format}, {"mixture_tag", mixture_tag}}},
                {"weight", weight}};
  }

  static DialogueRecord from_json(const json& j, std::size_t line = 0) {
    DialogueRecord r;
    const json& msgs = detail::require_field(j, "messages", line);
    if (!msgs.is_array()) throw SchemaError("messages", line);
    for (const auto& m : msgs) {
      DialogueMessage msg;
      msg.role = detail::require_string(m, "role", line);
      msg.text = detail::require_string(m, "text", line);
      if (m.contains("image")) msg.image_uri = m["image"].get<std::string>();
      r.messages.push_back(std::move(msg));
    }
    const json& meta = detail::require_field(j, "metadata", line);
    r.sample_id = detail::require_string(meta, "sample_id", line);
    r.format = detail::require_string(meta, "format", line);
    r.mixture_tag = detail::require_string(meta, "mixture_tag", line);
    if (j.contains("weight")) r.weight = j["weight"].get<double>();
    return r;
  }

  bool operator==(const DialogueRecord& other) const {
    if (sample_id != other.sample_id || format != other.format || mixture_tag != other.mixture_tag ||
        weight != other.weight || messages.size() != other.messages.size()) {
      return false;
    }
    for (std::size_t i = 0; i < messages.size(); ++i) {
      if (messages[i].role != other.messages[i].role || messages[i].text != other.messages[i].text ||
          messages[i].image_uri != other.messages[i].image_uri) {
        return false;
      }
    }
    return true;
  }
};

// ---------------------------------------------------------------------------
// Schema-dispatched parse / serialize

enum class RecordKind { raw, pair, train, iter, eval, dialogue };

inline RecordKind record_kind_from_string(const std::string& s) {
  if (s == "raw") return RecordKind::raw;
  if (s == "pair") return RecordKind::pair;
  if (s == "train") return RecordKind::train;
  if (s == "iter") return RecordKind::iter;
  if (s == "eval") return RecordKind::eval;
  if (s == "dialogue") return RecordKind::dialogue;
  throw ConfigError("unknown record schema \"" + s + "\" (expected raw|pair|train|iter|eval|dialogue)");
}

using AnyRecord = std::variant<RawSample, PairSample, TrainSample, IterSample, EvalRecord, DialogueRecord>;

inline json parse_json_line(const std::string& line, std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw ParseError("malformed JSON", line_no);
  if (!j.is_object()) throw ParseError("record must be a JSON object", line_no);
  return j;
}

/// Parses one JSONL line into a validated record of the requested kind.
/// Unknown fields are preserved so serialize(parse(x)) keeps them.
inline AnyRecord parse_record(const std::string& line, RecordKind kind, std::size_t line_no = 0) {
  json j = parse_json_line(line, line_no);
  AnyRecord record = [&]() -> AnyRecord {
    switch (kind) {
      case RecordKind::raw: return RawSample::from_json(j, line_no);
      case RecordKind::pair: return PairSample::from_json(j, line_no);
      case RecordKind::train: return TrainSample::from_json(j, line_no);
      case RecordKind::iter: return IterSample::from_json(j, line_no);
      case RecordKind::eval: return EvalRecord::from_json(j, line_no);
      case RecordKind::dialogue: return DialogueRecord::from_json(j, line_no);
    }
    throw ConfigError("unreachable record kind");
  }();
  std::visit([](const auto& r) { r.validate(); }, record);
  return record;
}

/// Serializes to the canonical single-line form: declared key order, UTF-8,
/// no trailing whitespace. Identical records produce identical bytes.
template <typename Record>
std::string serialize_record(const Record& record) {
  record.validate();
  return record.to_json().dump();
}

inline std::string serialize_record(const AnyRecord& record) {
  return std::visit([](const auto& r) { return serialize_record(r); }, record);
}

inline std::string record_id(const AnyRecord& record) {
  return std::visit(
      [](const auto& r) -> std::string {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, TrainSample>) {
          return r.pair.id;
        } else if constexpr (std::is_same_v<T, IterSample>) {
          return r.train.pair.id;
        } else if constexpr (std::is_same_v<T, DialogueRecord>) {
          return std::string();  // several dialogues legitimately share a sample id
        } else {
          return r.id;
        }
      },
      record);
}

// ---------------------------------------------------------------------------
// Dataset validation

struct DatasetIssue {
  std::size_t line = 0;
  std::string message;
};

struct DatasetReport {
  std::size_t count = 0;  // valid records only
  std::vector<DatasetIssue> errors;
  std::vector<std::string> duplicate_ids;

  bool ok() const { return errors.empty() && duplicate_ids.empty(); }

  json to_json() const {
    json errs = json::array();
    for (const auto& e : errors) errs.push_back(json{{"line", e.line}, {"message", e.message}});
    return json{{"count", count}, {"errors", errs}, {"duplicate_ids", duplicate_ids}};
  }
};

/// Scans a JSONL stream and reports every violation; never throws on data.
/// Blank lines are skipped. `count` counts only valid records.
inline DatasetReport validate_dataset(std::istream& in, RecordKind kind) {
  DatasetReport report;
  std::map<std::string, std::size_t> seen_ids;
  std::vector<std::string> dup_order;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      AnyRecord record = parse_record(line, kind, line_no);
      std::string id = record_id(record);
      if (!id.empty()) {
        auto [it, inserted] = seen_ids.emplace(id, line_no);
        if (!inserted &&
            std::find(report.duplicate_ids.begin(), report.duplicate_ids.end(), id) ==
                report.duplicate_ids.end()) {
          report.duplicate_ids.push_back(id);
        }
      }
      ++report.count;
    } catch (const Error& err) {
      report.errors.push_back({line_no, err.what()});
    }
  }
  return report;
}

}  // namespace vlrm
