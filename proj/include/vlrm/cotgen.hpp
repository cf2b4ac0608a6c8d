#pragma once

// Stage 2: teacher-generated critique or descriptive rationales for both
// sides of every pair, optional external augmentation (extra generator
// responses labeled by the false-rejection judge), and random-incorrect
// injection to keep every query group balanced.

#include <optional>
#include <string>
#include <vector>

#include "vlrm/errors.hpp"
#include "vlrm/gateway.hpp"
#include "vlrm/manifest.hpp"
#include "vlrm/pairgen.hpp"
#include "vlrm/parallel.hpp"
#include "vlrm/prompts.hpp"
#include "vlrm/records.hpp"
#include "vlrm/rng.hpp"

namespace vlrm {

struct CotgenConfig {
  RationaleMode mode = RationaleMode::critique;
  bool strict = false;
  int workers = 4;
  std::uint64_t seed = 0;
  int augment_responses = 4;             // generator samples per query
  SamplingParams generation_sampling{};  // for augmentation sampling
};

struct GroupResponse {
  std::string text;
  bool correct = false;
  Provenance provenance = Provenance::external_augmented;
};

struct QueryGroup {
  std::string id;  // source sample id
  ImageRef image;
  std::string query;
  std::string chosen;  // reference correct response from the source record
  std::vector<GroupResponse> responses;

  bool has_incorrect() const {
    for (const auto& r : responses) {
      if (!r.correct) return true;
    }
    return false;
  }

  bool is_correct_text(const std::string& text) const {
    if (text == chosen) return true;
    for (const auto& r : responses) {
      if (r.correct && r.text == text) return true;
    }
    return false;
  }
};

/// Gives every group lacking an incorrect response one foreign answer from
/// the pool, labeled No with random-injected provenance. Groups that
/// already hold an incorrect response are left untouched.
inline void inject_random_incorrect(std::vector<QueryGroup>& groups, const std::vector<std::string>& pool,
                                    std::uint64_t seed) {
  if (pool.empty()) throw InjectionError("injection pool is empty");
  for (auto& group : groups) {
    if (group.has_incorrect()) continue;
    Rng rng(derive_seed(seed, "inject:" + group.id + ":" + group.query));
    std::size_t start = static_cast<std::size_t>(rng.bounded(pool.size()));
    bool injected = false;
    for (std::size_t probe = 0; probe < pool.size(); ++probe) {
      const std::string& candidate = pool[(start + probe) % pool.size()];
      if (candidate.empty() || group.is_correct_text(candidate)) continue;
      group.responses.push_back(GroupResponse{candidate, false, Provenance::random_injected});
      injected = true;
      break;
    }
    if (!injected) {
      throw InjectionError("no pool response usable for query group \"" + group.query + "\"");
    }
  }
}

class CotGenerator {
 public:
  CotGenerator(ModelGateway& gateway, const PromptSet& prompts, CotgenConfig config = {})
      : gateway_(gateway), prompts_(prompts), config_(std::move(config)) {}

  /// One teacher call. Critique mode passes the object list and asks for
  /// errors only; descriptive mode explains a given verdict step by step
  /// and therefore requires one.
  Rationale generate_rationale(const ImageRef& image, const std::string& query, const std::string& response,
                               const ObjectSet& detected, RationaleMode mode,
                               std::optional<Verdict> verdict = std::nullopt,
                               const std::string& tag = std::string()) const {
    ChatRequest req;
    std::string objects = join_labels(detected);
    if (mode == RationaleMode::critique) {
      req.messages.push_back(ChatMessage{"system", prompts_.get("critique_system"), std::nullopt});
      req.messages.push_back(ChatMessage{
          "user",
          prompts_.render("critique_user", {{"objects", objects}, {"prompt", query}, {"response", response}}),
          image});
    } else {
      if (!verdict) throw ValidationError("descriptive rationales require a verdict");
      req.messages.push_back(ChatMessage{"system", prompts_.get("descriptive_system"), std::nullopt});
      req.messages.push_back(ChatMessage{"user",
                                         prompts_.render("descriptive_user", {{"objects", objects},
                                                                              {"prompt", query},
                                                                              {"response", response},
                                                                              {"judgment", to_string(*verdict)}}),
                                         image});
    }
    req.sampling.temperature = 0.0;
    std::string text = gateway_.chat_complete(roles::kTeacherVlm, req, tag).text;
    if (text.empty()) {
      text = gateway_.chat_complete(roles::kTeacherVlm, req, tag).text;
      if (text.empty()) throw EmptyRationaleError("teacher produced an empty rationale twice");
    }
    return Rationale{text, mode, RationaleSource::teacher, std::nullopt};
  }

  struct Result {
    std::vector<TrainSample> samples;
    StageManifest manifest{"cotgen"};
  };

  /// One TrainSample per PairSample: c+ for the chosen side (verdict Yes)
  /// and c- for the rejected side (verdict No), order preserved.
  Result assemble_train_dataset(const std::vector<PairSample>& pairs) const {
    auto outcomes = parallel_map_ordered(pairs, config_.workers, [&](std::size_t index, const PairSample& pair) {
      pair.validate();
      std::string tag = make_call_tag(index);
      TrainSample sample;
      sample.pair = pair;
      sample.rationale_chosen = generate_rationale(pair.image, pair.query, pair.chosen, pair.detected_objects,
                                                   config_.mode, Verdict::yes, tag);
      sample.rationale_rejected = generate_rationale(pair.image, pair.query, pair.rejected,
                                                     pair.detected_objects, config_.mode, Verdict::no, tag);
      sample.validate();
      return sample;
    });

    Result result;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      RecordNote note;
      note.index = i;
      note.id = pairs[i].id;
      if (outcomes[i].ok()) {
        note.status = "ok";
        result.samples.push_back(std::move(*outcomes[i].result));
      } else {
        if (config_.strict) {
          throw Error("cotgen failed on record " + std::to_string(i) + " (id " + pairs[i].id +
                      "): " + outcomes[i].error);
        }
        note.status = "failed";
        note.error = outcomes[i].error;
      }
      result.manifest.add_record(std::move(note));
    }
    result.manifest.add_calls(gateway_.drain_call_log());
    result.manifest.set_summary(json{{"input_count", pairs.size()},
                                     {"output_count", result.samples.size()},
                                     {"failure_count", pairs.size() - result.samples.size()},
                                     {"mode", to_string(config_.mode)}});
    return result;
  }

  struct AugmentResult {
    std::vector<PairSample> pairs;
    StageManifest manifest{"cotgen-augment"};
  };

  /// Optional pre-step: sample extra responses per query from the generator
  /// role, label them with the false-rejection judge, inject a random
  /// incorrect answer where a group has none, and emit the incorrect ones
  /// as additional pairs against the record's chosen response.
  AugmentResult augment_pairs(const std::vector<RawSample>& records) const {
    PairGenerator judge_helper(gateway_, prompts_);
    auto outcomes = parallel_map_ordered(records, config_.workers, [&](std::size_t index, const RawSample& rec) {
      rec.validate();
      std::string tag = make_call_tag(index);
      QueryGroup group;
      group.id = rec.id;
      group.image = rec.image;
      group.query = rec.query;
      group.chosen = rec.chosen;
      ObjectSet detected = gateway_.detect_objects(rec.image, {}, tag);
      for (int i = 0; i < config_.augment_responses; ++i) {
        ChatRequest req;
        req.messages.push_back(ChatMessage{"user", rec.query, rec.image});
        req.sampling = config_.generation_sampling;
        req.sampling.seed = derive_seed(config_.seed, rec.id + ":aug:" + std::to_string(i));
        std::string text = gateway_.chat_complete(roles::kGenerator, req, tag).text;
        if (text.empty()) continue;
        bool correct = judge_helper.judge_false_rejection(rec.image, rec.query, text, detected, tag) ==
                       PairGenerator::RejectionJudgement::correct;
        group.responses.push_back(GroupResponse{text, correct, Provenance::external_augmented});
      }
      return group;
    });

    AugmentResult result;
    std::vector<QueryGroup> groups;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      RecordNote note;
      note.index = i;
      note.id = records[i].id;
      if (outcomes[i].ok()) {
        note.status = "ok";
        groups.push_back(std::move(*outcomes[i].result));
      } else {
        if (config_.strict) {
          throw Error("augmentation failed on record " + std::to_string(i) + " (id " + records[i].id +
                      "): " + outcomes[i].error);
        }
        note.status = "failed";
        note.error = outcomes[i].error;
      }
      result.manifest.add_record(std::move(note));
    }

    // Pool: every response seen in the other groups of this shard.
    std::size_t injected_before = 0;
    if (!groups.empty()) {
      std::vector<std::string> pool;
      for (const auto& g : groups) {
        for (const auto& r : g.responses) pool.push_back(r.text);
        pool.push_back(g.chosen);
      }
      for (const auto& g : groups) injected_before += g.has_incorrect() ? 0 : 1;
      inject_random_incorrect(groups, pool, config_.seed);
    }

    for (const auto& g : groups) {
      int counter = 0;
      for (const auto& r : g.responses) {
        if (r.correct) continue;
        if (r.text == g.chosen) continue;
        PairSample pair;
        pair.id = g.id + "-aug" + std::to_string(counter++);
        pair.image = g.image;
        pair.query = g.query;
        pair.chosen = g.chosen;
        pair.rejected = r.text;
        pair.label = Verdict::no;
        pair.provenance = r.provenance;
        pair.validate();
        result.pairs.push_back(std::move(pair));
      }
    }
    result.manifest.add_calls(gateway_.drain_call_log());
    result.manifest.set_summary(json{{"input_count", records.size()},
                                     {"group_count", groups.size()},
                                     {"injected_groups", injected_before},
                                     {"pair_count", result.pairs.size()},
                                     {"responses_per_query", config_.augment_responses}});
    return result;
  }

 private:
  static std::string join_labels(const ObjectSet& set) {
    std::string out;
    for (const auto& e : set.entries()) {
      if (!out.empty()) out += ", ";
      out += e.label;
    }
    return out;
  }

  ModelGateway& gateway_;
  const PromptSet& prompts_;
  CotgenConfig config_;
};

}  // namespace vlrm
