#pragma once

// Reward-score computations: the generative-verifier Yes-probability, the
// pairwise judge, the Bradley-Terry diagnostic loss, and rationale margins.

#include <cmath>
#include <map>
#include <optional>
#include <string>

#include "vlrm/errors.hpp"
#include "vlrm/gateway.hpp"
#include "vlrm/prompts.hpp"
#include "vlrm/records.hpp"

namespace vlrm {

inline RewardScore make_reward_score(const VerdictProbs& probs, ScoreNormalization mode) {
  RewardScore score;
  score.p_yes = probs.p_yes;
  score.p_no = probs.p_no;
  score.normalization = mode;
  if (mode == ScoreNormalization::raw) {
    score.r = probs.p_yes;
  } else {
    double sum = probs.p_yes + probs.p_no;
    if (sum <= 0.0) throw MissingVerdictError("cannot renormalize: p(Yes) + p(No) == 0");
    score.r = probs.p_yes / sum;
  }
  score.validate();
  return score;
}

/// Pairwise logistic loss -ln sigma(r_chosen - r_rejected). Computed via
/// log1p for stability at large |margin|.
inline double bt_loss(double r_chosen, double r_rejected) {
  if (!std::isfinite(r_chosen) || !std::isfinite(r_rejected)) {
    throw NumericError("bt_loss requires finite inputs");
  }
  double d = r_chosen - r_rejected;
  if (d >= 0) return std::log1p(std::exp(-d));
  return -d + std::log1p(std::exp(d));
}

/// m = score(c+) - score(c-), both scores in [0,1], so m lies in [-1,1].
inline double margin(double score_chosen, double score_rejected) {
  if (!(score_chosen >= 0.0 && score_chosen <= 1.0) || !(score_rejected >= 0.0 && score_rejected <= 1.0)) {
    throw ValidationError("margin inputs must lie in [0,1]");
  }
  return score_chosen - score_rejected;
}

// ---------------------------------------------------------------------------
// Endpoint-backed scoring

struct ScoringOptions {
  ScoreNormalization normalization = ScoreNormalization::renormalized;
  RationaleMode rationale_mode = RationaleMode::critique;
  int logprob_top_k = 20;
  // Verdict queries read token probabilities, so they are issued greedily
  // with a tiny budget; rationale self-generation uses the caller's
  // generation sampling.
  SamplingParams verdict_sampling{0.0, 0.9, 50, 4, 0};
  SamplingParams generation_sampling{};
};

enum class Preference { a, b, inconsistent };

inline std::string to_string(Preference p) {
  switch (p) {
    case Preference::a: return "A";
    case Preference::b: return "B";
    case Preference::inconsistent: return "inconsistent";
  }
  return "";
}

class GenrmScorer {
 public:
  GenrmScorer(ModelGateway& gateway, const PromptSet& prompts, ScoringOptions options = {},
              std::string role = roles::kRewardModel)
      : gateway_(gateway), prompts_(prompts), options_(options), role_(std::move(role)) {}

  const ScoringOptions& options() const { return options_; }

  /// Verdict-token score for one response. Without a rationale this is the
  /// single-round dialogue; with one, the two-round dialogue whose assistant
  /// turn is the rationale text.
  RewardScore genrm_score(const ImageRef& image, const std::string& query, const std::string& response,
                          const std::optional<Rationale>& rationale = std::nullopt,
                          const std::string& tag = std::string()) const {
    ChatRequest req = verdict_request(image, query, response, rationale);
    ChatResponse resp = gateway_.chat_complete(role_, req, tag);
    return make_reward_score(extract_verdict_probs(resp), options_.normalization);
  }

  /// Two-phase scoring: the model first writes its own rationale for the
  /// response, then the verdict probability is read with that rationale in
  /// context. Returns both so callers can keep the rationale.
  std::pair<Rationale, RewardScore> generate_and_score(const ImageRef& image, const std::string& query,
                                                       const std::string& response, std::uint64_t seed,
                                                       const std::string& tag = std::string()) const {
    ChatRequest gen;
    gen.messages.push_back(round1_message(image, query, response, options_.rationale_mode));
    gen.sampling = options_.generation_sampling;
    gen.sampling.seed = seed;
    std::string text = gateway_.chat_complete(role_, gen, tag).text;
    if (text.empty()) {
      text = gateway_.chat_complete(role_, gen, tag).text;
      if (text.empty()) throw EmptyRationaleError("model produced an empty rationale twice");
    }
    Rationale rationale{text, options_.rationale_mode, RationaleSource::self, std::nullopt};
    RewardScore score = genrm_score(image, query, response, rationale, tag);
    rationale.score = score;
    return {rationale, score};
  }

  /// Prompts the judge to compare two responses. With debias the query is
  /// issued in both orders and disagreement comes back as inconsistent.
  Preference judge_pairwise(const ImageRef& image, const std::string& query, const std::string& response_a,
                            const std::string& response_b, bool debias,
                            const std::string& tag = std::string()) const {
    Preference first = judge_once(image, query, response_a, response_b, tag);
    if (!debias) return first;
    Preference swapped = judge_once(image, query, response_b, response_a, tag);
    // Map the swapped call back into the caller's labeling.
    Preference second = swapped == Preference::a ? Preference::b : Preference::a;
    if (first == second) return first;
    return Preference::inconsistent;
  }

 private:
  ChatMessage round1_message(const ImageRef& image, const std::string& query, const std::string& response,
                             RationaleMode mode) const {
    const std::string& instruction = mode == RationaleMode::critique
                                         ? prompts_.get("ift_critique_instruction")
                                         : prompts_.get("ift_descriptive_instruction");
    std::string text = prompts_.render(
        "ift_round1_user", {{"prompt", query}, {"response", response}, {"instruction", instruction}});
    return ChatMessage{"user", text, image};
  }

  ChatRequest verdict_request(const ImageRef& image, const std::string& query, const std::string& response,
                              const std::optional<Rationale>& rationale) const {
    ChatRequest req;
    if (rationale) {
      rationale->validate();
      req.messages.push_back(round1_message(image, query, response, rationale->mode));
      req.messages.push_back(ChatMessage{"assistant", rationale->text, std::nullopt});
      req.messages.push_back(ChatMessage{"user", prompts_.get("ift_followup_user"), std::nullopt});
    } else {
      std::string text = prompts_.render("genrm_user", {{"prompt", query}, {"response", response}});
      req.messages.push_back(ChatMessage{"user", text, image});
    }
    req.sampling = options_.verdict_sampling;
    req.want_logprobs = true;
    req.logprob_top_k = options_.logprob_top_k;
    return req;
  }

  Preference judge_once(const ImageRef& image, const std::string& query, const std::string& response_a,
                        const std::string& response_b, const std::string& tag) const {
    std::string text = prompts_.render(
        "judge_user", {{"prompt", query}, {"response_a", response_a}, {"response_b", response_b}});
    ChatRequest req;
    req.messages.push_back(ChatMessage{"user", text, image});
    req.sampling = options_.verdict_sampling;
    req.sampling.max_tokens = 512;  // the judge explains its choice
    auto verdict = parse_judge_reply(gateway_.chat_complete(role_, req, tag).text);
    if (verdict) return *verdict;
    req.messages[0].text += std::string(prompts::kJudgeRetrySuffix);
    verdict = parse_judge_reply(gateway_.chat_complete(role_, req, tag).text);
    if (verdict) return *verdict;
    throw JudgeParseError("judge reply names neither response, even after retry");
  }

  /// First occurrence of "Response A" / "Response B" (case-insensitive) in
  /// the reply's final paragraph decides the verdict.
  static std::optional<Preference> parse_judge_reply(const std::string& reply) {
    std::size_t start = 0;
    auto split = reply.rfind("\n\n");
    if (split != std::string::npos) start = split + 2;
    std::string paragraph = reply.substr(start);
    for (auto& ch : paragraph) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::size_t pos_a = paragraph.find("response a");
    std::size_t pos_b = paragraph.find("response b");
    if (pos_a == std::string::npos && pos_b == std::string::npos) return std::nullopt;
    if (pos_a == std::string::npos) return Preference::b;
    if (pos_b == std::string::npos) return Preference::a;
    return pos_a < pos_b ? Preference::a : Preference::b;
  }

  ModelGateway& gateway_;
  const PromptSet& prompts_;
  ScoringOptions options_;
  std::string role_;
};

}  // namespace vlrm
