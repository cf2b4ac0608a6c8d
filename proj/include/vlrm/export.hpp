#pragma once

// Renders train samples into the exact training-file formats consumed by
// external trainers: two-round verification dialogues with the
// correct-solution mixture, single-round verifier dialogues, judge
// dialogues, and a DPO preference file. No optimization happens here.

#include <cmath>
#include <string>
#include <vector>

#include "vlrm/errors.hpp"
#include "vlrm/manifest.hpp"
#include "vlrm/prompts.hpp"
#include "vlrm/records.hpp"
#include "vlrm/rng.hpp"

namespace vlrm {

enum class DialogueSide { chosen, rejected };

enum class DialogueFormat { ift, genrm, judge };

inline std::string to_string(DialogueFormat f) {
  switch (f) {
    case DialogueFormat::ift: return "ift";
    case DialogueFormat::genrm: return "genrm";
    case DialogueFormat::judge: return "judge";
  }
  return "";
}

/// Instantiates the training template for one side of a pair. Text outside
/// the substitution sites is emitted byte-for-byte from the template set.
inline DialogueRecord render_dialogue(const TrainSample& sample, DialogueSide side, DialogueFormat format,
                                      const PromptSet& prompts) {
  sample.pair.validate();
  const bool chosen = side == DialogueSide::chosen;
  const std::string& response = chosen ? sample.pair.chosen : sample.pair.rejected;
  const Rationale& rationale = chosen ? sample.rationale_chosen : sample.rationale_rejected;
  const std::string verdict = chosen ? "Yes" : "No";
  const std::string& image_uri = sample.pair.image.uri;

  DialogueRecord record;
  record.sample_id = sample.pair.id;
  record.format = to_string(format);
  record.mixture_tag = "verify";

  switch (format) {
    case DialogueFormat::ift: {
      if (rationale.text.empty()) throw ValidationError("ift rendering requires the side's rationale");
      const std::string& instruction = rationale.mode == RationaleMode::critique
                                           ? prompts.get("ift_critique_instruction")
                                           : prompts.get("ift_descriptive_instruction");
      std::string round1 = prompts.render("ift_round1_user", {{"prompt", sample.pair.query},
                                                              {"response", response},
                                                              {"instruction", instruction}});
      record.messages.push_back({"user", round1, image_uri});
      record.messages.push_back({"assistant", rationale.text, std::nullopt});
      record.messages.push_back({"user", prompts.get("ift_followup_user"), std::nullopt});
      record.messages.push_back({"assistant", verdict, std::nullopt});
      break;
    }
    case DialogueFormat::genrm: {
      std::string user =
          prompts.render("genrm_user", {{"prompt", sample.pair.query}, {"response", response}});
      record.messages.push_back({"user", user, image_uri});
      record.messages.push_back({"assistant", verdict, std::nullopt});
      break;
    }
    case DialogueFormat::judge: {
      std::string user = prompts.render("judge_user", {{"prompt", sample.pair.query},
                                                       {"response_a", sample.pair.chosen},
                                                       {"response_b", sample.pair.rejected}});
      record.messages.push_back({"user", user, image_uri});
      record.messages.push_back({"assistant", chosen ? "Response A" : "Response B", std::nullopt});
      break;
    }
  }
  record.validate();
  return record;
}

struct IftExportConfig {
  double lambda = 0.5;  // correct-solution mixture ratio
  std::uint64_t seed = 0;
  bool shuffle = true;
  DialogueFormat format = DialogueFormat::ift;
};

struct IftExport {
  std::vector<DialogueRecord> records;
  StageManifest manifest{"export-ift"};
};

/// Emits both sides of every train sample as verification dialogues plus
/// round(lambda * N) chosen-side dialogues tagged correct-solution, sampled
/// without replacement (with replacement once lambda exceeds 1). Weights
/// make the correct-solution mass equal lambda * N exactly for trainers
/// that consume the weight column instead of duplicate records.
inline IftExport export_ift(const std::vector<TrainSample>& train, const IftExportConfig& config,
                            const PromptSet& prompts) {
  if (!std::isfinite(config.lambda) || config.lambda < 0) {
    throw ValidationError("lambda must be finite and >= 0");
  }
  IftExport out;
  std::vector<DialogueRecord> correct_pool;
  for (const auto& sample : train) {
    DialogueRecord chosen = render_dialogue(sample, DialogueSide::chosen, config.format, prompts);
    DialogueRecord rejected = render_dialogue(sample, DialogueSide::rejected, config.format, prompts);
    out.records.push_back(chosen);
    out.records.push_back(std::move(rejected));
    correct_pool.push_back(std::move(chosen));
  }
  const std::size_t n = correct_pool.size();
  const std::size_t verify_count = out.records.size();
  const auto correct_count = static_cast<std::size_t>(std::llround(config.lambda * static_cast<double>(n)));

  Rng rng(derive_seed(config.seed, "ift-mixture"));
  std::vector<std::size_t> picks;
  if (correct_count > 0 && n > 0) {
    if (correct_count <= n) {
      picks = rng.sample_indices(n, correct_count);
    } else {
      picks.reserve(correct_count);
      for (std::size_t i = 0; i < correct_count; ++i) {
        picks.push_back(static_cast<std::size_t>(rng.bounded(n)));
      }
    }
  }
  const double correct_weight =
      picks.empty() ? 0.0 : config.lambda * static_cast<double>(n) / static_cast<double>(picks.size());
  for (std::size_t idx : picks) {
    DialogueRecord dup = correct_pool[idx];
    dup.mixture_tag = "correct-solution";
    dup.weight = correct_weight;
    out.records.push_back(std::move(dup));
  }
  if (config.shuffle) rng.shuffle(out.records);

  out.manifest.set_summary(json{{"train_count", n},
                                {"verify_count", verify_count},
                                {"correct_solution_count", picks.size()},
                                {"total_count", out.records.size()},
                                {"lambda", config.lambda},
                                {"seed", config.seed},
                                {"shuffled", config.shuffle}});
  return out;
}

/// One preference record per pair: {image, prompt, chosen, rejected}.
inline std::vector<std::string> export_dpo(const std::vector<PairSample>& pairs) {
  std::vector<std::string> lines;
  lines.reserve(pairs.size());
  for (const auto& pair : pairs) {
    pair.validate();
    json j{{"image", pair.image.to_json()},
           {"prompt", pair.query},
           {"chosen", pair.chosen},
           {"rejected", pair.rejected}};
    lines.push_back(j.dump());
  }
  return lines;
}

/// Reference hyperparameters for the external trainer, emitted as a sidecar
/// next to the training file. Metadata only; nothing here is acted upon.
inline json trainer_metadata() {
  return json{{"warmup_ratio", 0.1},
              {"global_batch_size", 32},
              {"learning_rate", 2.0e-5},
              {"epochs", 1},
              {"cutoff_length", json{{"qwen", 2048}, {"internvl", 4096}}},
              {"lora", json{{"rank", 16}, {"learning_rate", 2.0e-4}}}};
}

}  // namespace vlrm
