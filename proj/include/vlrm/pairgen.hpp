#pragma once

// Stage 1 of data construction: collect weak-model negatives, check them
// against the vision expert's detections, rescue false rejections, and
// synthesize altered negatives from the chosen response.

#include <optional>
#include <string>
#include <vector>

#include "vlrm/errors.hpp"
#include "vlrm/gateway.hpp"
#include "vlrm/manifest.hpp"
#include "vlrm/parallel.hpp"
#include "vlrm/prompts.hpp"
#include "vlrm/records.hpp"
#include "vlrm/rng.hpp"
#include "vlrm/scoring.hpp"

namespace vlrm {

enum class FilterOutcome { hallucinated_retain, pass_to_refinement };

struct FilterVerdict {
  FilterOutcome outcome = FilterOutcome::pass_to_refinement;
  std::vector<std::string> missing_labels;
};

inline std::string to_string(FilterOutcome o) {
  return o == FilterOutcome::hallucinated_retain ? "hallucinated-retain" : "pass-to-refinement";
}

/// A mentioned label matches a detection by normalized equality, by synonym
/// mapping, or (with a synonym map present) by its head noun's mapping.
/// Substring matching is deliberately not used.
inline bool label_matches_detections(const std::string& mentioned, const ObjectSet& detected,
                                     const SynonymMap* synonyms) {
  std::vector<std::string> detected_canon;
  detected_canon.reserve(detected.size());
  for (const auto& e : detected.entries()) detected_canon.push_back(canonical_object_label(e.label, synonyms));

  auto canon_in_detected = [&](const std::string& canon) {
    return std::find(detected_canon.begin(), detected_canon.end(), canon) != detected_canon.end();
  };

  if (canon_in_detected(canonical_object_label(mentioned, synonyms))) return true;
  if (synonyms) {
    auto space = mentioned.rfind(' ');
    if (space != std::string::npos) {
      std::string head = mentioned.substr(space + 1);
      if (canon_in_detected(canonical_object_label(head, synonyms))) return true;
    }
  }
  return false;
}

/// A response hallucinates iff at least one mentioned label has no match
/// among the detections. Mentioning nothing cannot be a hallucination.
inline FilterVerdict filter_hallucination(const ObjectSet& mentioned, const ObjectSet& detected,
                                          const SynonymMap* synonyms = nullptr) {
  FilterVerdict verdict;
  for (const auto& entry : mentioned.entries()) {
    if (!label_matches_detections(entry.label, detected, synonyms)) {
      verdict.missing_labels.push_back(entry.label);
    }
  }
  verdict.outcome = verdict.missing_labels.empty() ? FilterOutcome::pass_to_refinement
                                                   : FilterOutcome::hallucinated_retain;
  return verdict;
}

// ---------------------------------------------------------------------------

struct PairgenConfig {
  int k_objects = 2;  // labels altered per chosen response
  std::uint64_t seed = 0;
  bool strict = false;
  int workers = 4;
  SamplingParams generation_sampling{};  // weak-model negative collection
  std::optional<SynonymMap> synonyms;
  std::vector<std::string> detector_vocabulary;
};

class PairGenerator {
 public:
  PairGenerator(ModelGateway& gateway, const PromptSet& prompts, PairgenConfig config = {})
      : gateway_(gateway), prompts_(prompts), config_(std::move(config)) {}

  /// The weak model's answer to the query, verbatim.
  std::string collect_negative(const RawSample& sample, const std::string& tag = std::string()) const {
    ChatRequest req;
    req.messages.push_back(ChatMessage{"user", sample.query, sample.image});
    req.sampling = config_.generation_sampling;
    req.sampling.seed = derive_seed(config_.seed, sample.id + ":collect");
    std::string text = gateway_.chat_complete(roles::kWeakVlm, req, tag).text;
    if (text.empty()) throw EmptyResponseError("weak model returned an empty response for sample " + sample.id);
    return text;
  }

  /// Asks the extractor for the objects a response describes with certainty.
  ObjectSet extract_mentioned_objects(const std::string& response, const std::string& tag = std::string()) const {
    ChatRequest req;
    req.messages.push_back(ChatMessage{"system", prompts_.extraction_system_resolved(), std::nullopt});
    req.messages.push_back(
        ChatMessage{"user", prompts_.render("extraction_user", {{"description", response}}), std::nullopt});
    req.sampling = greedy_sampling();
    std::string reply = gateway_.chat_complete(roles::kStrongVlm, req, tag).text;
    if (auto set = try_parse_object_list(reply)) return *set;
    reply = gateway_.chat_complete(roles::kStrongVlm, req, tag).text;
    if (auto set = try_parse_object_list(reply)) return *set;
    throw ExtractionParseError("extractor reply is not an object list: \"" + reply + "\"");
  }

  enum class RejectionJudgement { correct, incorrect };

  /// One-word verdict on whether a supposedly wrong response is in fact
  /// valid for the image. Correct means replace-not-reject downstream.
  RejectionJudgement judge_false_rejection(const ImageRef& image, const std::string& query,
                                           const std::string& rejected, const ObjectSet& detected,
                                           const std::string& tag = std::string()) const {
    ChatRequest req;
    req.messages.push_back(ChatMessage{"system", prompts_.get("false_rejection_system"), std::nullopt});
    req.messages.push_back(ChatMessage{
        "user",
        prompts_.render("false_rejection_user",
                        {{"objects", join_labels(detected)}, {"prompt", query}, {"response", rejected}}),
        image});
    req.sampling = greedy_sampling();
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::string reply = gateway_.chat_complete(roles::kStrongVlm, req, tag).text;
      std::string word = first_word_lower(reply);
      if (word == "correct") return RejectionJudgement::correct;
      if (word == "incorrect") return RejectionJudgement::incorrect;
      req.messages.back().text += "\nRespond with only one word: Correct or Incorrect.";
    }
    throw JudgeParseError("false-rejection judge did not answer Correct or Incorrect");
  }

  struct Alteration {
    std::string text;
    std::vector<std::string> sampled_labels;
  };

  /// Samples min(k, |mentioned|) labels with the seeded RNG and asks the
  /// model to rewrite the description with those objects replaced. Verifies
  /// the labels are gone, retrying once.
  Alteration alter_objects(const std::string& chosen, const ObjectSet& mentioned, int k, std::uint64_t seed,
                           const std::string& tag = std::string()) const {
    if (mentioned.empty()) throw ValidationError("alter_objects requires a non-empty mentioned set");
    if (k < 1) throw ValidationError("alter_objects requires k >= 1");
    Rng rng(seed);
    auto labels = mentioned.labels();
    std::vector<std::string> sampled;
    for (std::size_t idx : rng.sample_indices(labels.size(), static_cast<std::size_t>(k))) {
      sampled.push_back(labels[idx]);
    }
    std::string objects;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      if (i) objects += ", ";
      objects += sampled[i];
    }
    ChatRequest req;
    req.messages.push_back(ChatMessage{
        "user", prompts_.render("alter_user", {{"description", chosen}, {"objects", objects}}), std::nullopt});
    req.sampling = greedy_sampling();
    req.sampling.seed = seed;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::string text = gateway_.chat_complete(roles::kStrongVlm, req, tag).text;
      if (!text.empty() && !any_label_present(text, sampled)) return {text, sampled};
      req.sampling.seed = seed + 1;  // nudge the resample
    }
    throw AlterationFailedError("sampled labels persisted through the rewrite");
  }

  struct Result {
    std::vector<PairSample> pairs;
    StageManifest manifest{"pairgen"};
  };

  /// Full stage 1: negatives -> expert filtering -> refinement. Output
  /// order matches input order; per-record failures are skipped and noted
  /// in the manifest unless strict mode is on.
  Result build_pair_dataset(const std::vector<RawSample>& d0) const {
    struct PerRecord {
      PairSample pair;
      std::string note;
    };
    auto outcomes = parallel_map_ordered(d0, config_.workers, [&](std::size_t index, const RawSample& sample) {
      sample.validate();
      std::string tag = make_call_tag(index);
      PerRecord out;
      std::string negative = collect_negative(sample, tag);
      ObjectSet mentioned = extract_mentioned_objects(negative, tag);
      ObjectSet detected = gateway_.detect_objects(sample.image, config_.detector_vocabulary, tag);
      const SynonymMap* synonyms = config_.synonyms ? &*config_.synonyms : nullptr;
      FilterVerdict verdict = filter_hallucination(mentioned, detected, synonyms);

      PairSample pair;
      pair.id = sample.id;
      pair.image = sample.image;
      pair.query = sample.query;
      pair.chosen = sample.chosen;
      pair.label = Verdict::no;
      pair.mentioned_objects = mentioned;
      pair.detected_objects = detected;

      if (verdict.outcome == FilterOutcome::hallucinated_retain) {
        pair.rejected = negative;
        pair.provenance = Provenance::hallucination_retained;
        out.note = "hallucinated-retain; missing: " + join_list(verdict.missing_labels);
      } else {
        RejectionJudgement judgement =
            judge_false_rejection(sample.image, sample.query, negative, detected, tag);
        if (judgement == RejectionJudgement::incorrect) {
          // Consistent with the detections yet judged wrong: keep it as an
          // ordinary negative.
          pair.rejected = negative;
          pair.provenance = Provenance::hallucination_retained;
          out.note = "pass-to-refinement judged Incorrect; negative retained";
        } else {
          ObjectSet chosen_objects = extract_mentioned_objects(sample.chosen, tag);
          Alteration altered = alter_objects(sample.chosen, chosen_objects, config_.k_objects,
                                             derive_seed(config_.seed, sample.id + ":alter"), tag);
          pair.rejected = altered.text;
          pair.provenance = Provenance::object_altered;
          out.note = "false rejection replaced; altered: " + join_list(altered.sampled_labels);
        }
      }
      pair.validate();
      out.pair = std::move(pair);
      return out;
    });

    Result result;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      RecordNote note;
      note.index = i;
      note.id = d0[i].id;
      if (outcomes[i].ok()) {
        note.status = "ok";
        note.note = outcomes[i].result->note;
        result.pairs.push_back(std::move(outcomes[i].result->pair));
      } else {
        if (config_.strict) {
          throw Error("pairgen failed on record " + std::to_string(i) + " (id " + d0[i].id +
                      "): " + outcomes[i].error);
        }
        note.status = "failed";
        note.error = outcomes[i].error;
      }
      result.manifest.add_record(std::move(note));
    }
    result.manifest.add_calls(gateway_.drain_call_log());
    result.manifest.set_summary(json{{"input_count", d0.size()},
                                     {"output_count", result.pairs.size()},
                                     {"failure_count", d0.size() - result.pairs.size()},
                                     {"seed", config_.seed},
                                     {"k_objects", config_.k_objects}});
    return result;
  }

  /// Parses an extractor reply. Accepts an empty reply (no objects), an
  /// "Objects:" line with comma/newline-separated labels, or a JSON array
  /// of strings. Anything else is unparseable.
  static std::optional<ObjectSet> try_parse_object_list(const std::string& reply) {
    std::string trimmed = trim(reply);
    if (trimmed.empty()) return ObjectSet{};
    if (!trimmed.empty() && trimmed.front() == '[') {
      json j = json::parse(trimmed, nullptr, false);
      if (j.is_array()) {
        ObjectSet set;
        for (const auto& item : j) {
          if (!item.is_string()) return std::nullopt;
          set.add(item.get<std::string>());
        }
        return set;
      }
      return std::nullopt;
    }
    static constexpr std::string_view kPrefix = "objects:";
    std::string lowered = trimmed;
    for (auto& ch : lowered) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lowered.rfind(kPrefix, 0) != 0) return std::nullopt;
    std::string body = trimmed.substr(kPrefix.size());
    ObjectSet set;
    std::string current;
    auto flush = [&] {
      std::string label = normalize_label(current);
      current.clear();
      if (label.empty() || label == "none" || label == "n/a") return;
      if (label.rfind("- ", 0) == 0) label = label.substr(2);
      set.add(label);
    };
    for (char ch : body) {
      if (ch == ',' || ch == '\n' || ch == ';') {
        flush();
      } else {
        current.push_back(ch);
      }
    }
    flush();
    return set;
  }

 private:
  static SamplingParams greedy_sampling() {
    SamplingParams params;
    params.temperature = 0.0;
    return params;
  }

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  static std::string first_word_lower(const std::string& s) {
    std::string word;
    for (char ch : trim(s)) {
      unsigned char c = static_cast<unsigned char>(ch);
      if (std::isalpha(c)) {
        word.push_back(static_cast<char>(std::tolower(c)));
      } else {
        break;
      }
    }
    return word;
  }

  static std::string join_labels(const ObjectSet& set) {
    std::string out;
    for (const auto& e : set.entries()) {
      if (!out.empty()) out += ", ";
      out += e.label;
    }
    return out;
  }

  static std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
      if (!out.empty()) out += ", ";
      out += s;
    }
    return out;
  }

  static bool any_label_present(const std::string& text, const std::vector<std::string>& labels) {
    std::string haystack = normalize_label(text);
    for (const auto& label : labels) {
      if (haystack.find(label) != std::string::npos) return true;
    }
    return false;
  }

  ModelGateway& gateway_;
  const PromptSet& prompts_;
  PairgenConfig config_;
};

}  // namespace vlrm
