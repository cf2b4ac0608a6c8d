#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vlrm/mockserver.hpp"
#include "vlrm/scoring.hpp"

using namespace vlrm;

namespace {

constexpr double kLn2 = 0.6931471805599453;

EndpointConfig rm_endpoint(const std::string& base_url) {
  EndpointConfig cfg;
  cfg.role = roles::kRewardModel;
  cfg.base_url = base_url;
  cfg.model = "rm-1";
  cfg.backoff_base_s = 0.005;
  return cfg;
}

ScriptEntry verdict_entry(const std::string& key, double p_yes, double p_no) {
  ScriptEntry e;
  e.key = key;
  e.text = p_yes >= p_no ? "Yes" : "No";
  e.top_logprobs = {{"Yes", std::log(p_yes)}, {"No", std::log(p_no)}};
  return e;
}

ScriptEntry reply_entry(const std::string& key, const std::string& text) {
  ScriptEntry e;
  e.key = key;
  e.text = text;
  return e;
}

const ImageRef kImage{"img/scene.png", "image/png"};

}  // namespace

TEST_CASE("bt_loss anchors and shape") {
  CHECK(bt_loss(0.5, 0.5) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(bt_loss(1.0, 0.0) == doctest::Approx(0.313262).epsilon(1e-5));

  SUBCASE("strictly decreasing in the margin") {
    double prev = bt_loss(0.0, 1.0);
    for (double d = -0.9; d <= 1.0; d += 0.1) {
      double cur = bt_loss(d > 0 ? d : 0.0, d > 0 ? 0.0 : -d);
      CHECK(cur < prev);
      prev = cur;
    }
  }

  SUBCASE("convexity: loss(a,b) + loss(b,a) >= 2 ln 2, equality iff a == b") {
    for (double a = 0.0; a <= 1.0; a += 0.05) {
      for (double b = 0.0; b <= 1.0; b += 0.05) {
        double sum = bt_loss(a, b) + bt_loss(b, a);
        CHECK(sum >= 2 * kLn2 - 1e-12);
        if (std::abs(a - b) > 1e-9) CHECK(sum > 2 * kLn2 + 1e-12);
      }
    }
  }

  SUBCASE("non-finite inputs raise") {
    CHECK_THROWS_AS(bt_loss(std::nan(""), 0.0), NumericError);
    CHECK_THROWS_AS(bt_loss(0.0, std::numeric_limits<double>::infinity()), NumericError);
  }
}

TEST_CASE("margin arithmetic and bounds") {
  CHECK(margin(0.9, 0.4) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(margin(0.4, 0.9) == doctest::Approx(-0.5).epsilon(1e-12));
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    double x = (rng() % 1000) / 999.0;
    double y = (rng() % 1000) / 999.0;
    CHECK(margin(x, x) == 0.0);
    CHECK(margin(x, y) == doctest::Approx(-margin(y, x)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(margin(1.2, 0.0), ValidationError);
  CHECK_THROWS_AS(margin(0.0, -0.1), ValidationError);
}

TEST_CASE("reward-score normalization modes") {
  RewardScore raw = make_reward_score({0.3, 0.1}, ScoreNormalization::raw);
  CHECK(raw.r == doctest::Approx(0.3).epsilon(1e-12));
  RewardScore renorm = make_reward_score({0.3, 0.1}, ScoreNormalization::renormalized);
  CHECK(renorm.r == doctest::Approx(0.75).epsilon(1e-12));

  SUBCASE("renormalized complement identity over a grid") {
    for (double p = 0.01; p <= 0.99; p += 0.07) {
      for (double q = 0.01; q <= 0.99; q += 0.07) {
        double fwd = make_reward_score({p, q}, ScoreNormalization::renormalized).r;
        double rev = make_reward_score({q, p}, ScoreNormalization::renormalized).r;
        CHECK(fwd + rev == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("genrm_score single-round via mock logprobs") {
  Script script{{verdict_entry("Response: The zebra stands in the field.", 0.8, 0.2)}};
  MockServer server(script);
  server.start();
  ModelGateway gateway({{roles::kRewardModel, rm_endpoint(server.base_url())}});
  PromptSet prompts;

  ScoringOptions raw_opts;
  raw_opts.normalization = ScoreNormalization::raw;
  GenrmScorer raw_scorer(gateway, prompts, raw_opts);
  RewardScore raw = raw_scorer.genrm_score(kImage, "Describe.", "The zebra stands in the field.");
  CHECK(raw.r == doctest::Approx(0.8).epsilon(1e-12));

  GenrmScorer renorm_scorer(gateway, prompts, ScoringOptions{});
  RewardScore renorm = renorm_scorer.genrm_score(kImage, "Describe.", "The zebra stands in the field.");
  CHECK(renorm.r == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(renorm.p_yes == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(renorm.p_no == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("genrm_score two-round dialogue carries the rationale") {
  ScriptEntry entry = verdict_entry("msg1:assistant", 0.3, 0.1);
  entry.keys = {"msg1=assistant:the animal is wrong", "Overall, is this response of high quality?"};
  entry.key.clear();
  Script script{{entry}};
  MockServer server(script);
  server.start();
  ModelGateway gateway({{roles::kRewardModel, rm_endpoint(server.base_url())}});
  PromptSet prompts;

  Rationale rationale{"the animal is wrong", RationaleMode::critique, RationaleSource::self, std::nullopt};
  GenrmScorer scorer(gateway, prompts, ScoringOptions{});
  RewardScore score = scorer.genrm_score(kImage, "Describe.", "A deer.", rationale);
  CHECK(score.r == doctest::Approx(0.75).epsilon(1e-12));

  ScoringOptions raw_opts;
  raw_opts.normalization = ScoreNormalization::raw;
  GenrmScorer raw_scorer(gateway, prompts, raw_opts);
  CHECK(raw_scorer.genrm_score(kImage, "Describe.", "A deer.", rationale).r ==
        doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("generate_and_score produces a scored self rationale") {
  ScriptEntry gen = reply_entry("Generate a critique of the response first.", "The response is accurate.");
  ScriptEntry verdict = verdict_entry("", 0.9, 0.1);
  verdict.keys = {"msg1=assistant:The response is accurate.",
                  "msg2=user:Overall, is this response of high quality?"};
  MockServer server(Script{{gen, verdict}});
  server.start();
  ModelGateway gateway({{roles::kRewardModel, rm_endpoint(server.base_url())}});
  PromptSet prompts;

  GenrmScorer scorer(gateway, prompts, ScoringOptions{});
  auto [rationale, score] = scorer.generate_and_score(kImage, "Describe.", "A zebra.", 42);
  CHECK(rationale.text == "The response is accurate.");
  CHECK(rationale.source == RationaleSource::self);
  REQUIRE(rationale.score.has_value());
  CHECK(score.r == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("judge_pairwise verdicts") {
  // The mock judge always prefers the text "alpha" wherever it is listed.
  ScriptEntry order1 = reply_entry("Response A: alpha", "After comparing both, Response A is better.");
  ScriptEntry order2 = reply_entry("Response A: beta", "After comparing both, Response B is better.");
  MockServer server(Script{{order1, order2}});
  server.start();
  ModelGateway gateway({{roles::kRewardModel, rm_endpoint(server.base_url())}});
  PromptSet prompts;
  GenrmScorer scorer(gateway, prompts, ScoringOptions{});

  SUBCASE("consistent winner under debias") {
    CHECK(scorer.judge_pairwise(kImage, "Q", "alpha", "beta", true) == Preference::a);
    CHECK(scorer.judge_pairwise(kImage, "Q", "beta", "alpha", true) == Preference::b);
  }

  SUBCASE("position bias surfaces as inconsistent") {
    ScriptEntry biased1 = reply_entry("Response A: left", "Response A is better.");
    ScriptEntry biased2 = reply_entry("Response A: right", "Response A is better.");
    MockServer biased(Script{{biased1, biased2}});
    biased.start();
    ModelGateway gw({{roles::kRewardModel, rm_endpoint(biased.base_url())}});
    GenrmScorer s(gw, prompts, ScoringOptions{});
    CHECK(s.judge_pairwise(kImage, "Q", "left", "right", true) == Preference::inconsistent);
  }

  SUBCASE("debias=false issues one call") {
    MockStats before = server.stats();
    CHECK(scorer.judge_pairwise(kImage, "Q", "beta", "alpha", false) == Preference::b);
    CHECK(server.stats().requests == before.requests + 1);
  }

  SUBCASE("verdict parsing reads the final paragraph") {
    ScriptEntry wordy = reply_entry(
        "Response A: verbose",
        "Response B looks nice at first glance.\n\nOn balance, Response A is the stronger answer.");
    MockServer srv(Script{{wordy}});
    srv.start();
    ModelGateway gw({{roles::kRewardModel, rm_endpoint(srv.base_url())}});
    GenrmScorer s(gw, prompts, ScoringOptions{});
    CHECK(s.judge_pairwise(kImage, "Q", "verbose", "other", false) == Preference::a);
  }

  SUBCASE("unparseable verdicts raise after one retry") {
    ScriptEntry mumble = reply_entry("Response A: mumble", "maybe");
    MockServer srv(Script{{mumble}});
    srv.start();
    ModelGateway gw({{roles::kRewardModel, rm_endpoint(srv.base_url())}});
    GenrmScorer s(gw, prompts, ScoringOptions{});
    CHECK_THROWS_AS(s.judge_pairwise(kImage, "Q", "mumble", "other", false), JudgeParseError);
    CHECK(srv.stats().requests == 2);
  }
}
