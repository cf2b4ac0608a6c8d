#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>

#include "vlrm/gateway.hpp"
#include "vlrm/mockserver.hpp"

using namespace vlrm;

namespace {

EndpointConfig fast_endpoint(const std::string& role, const std::string& base_url, const std::string& model) {
  EndpointConfig cfg;
  cfg.role = role;
  cfg.base_url = base_url;
  cfg.model = model;
  cfg.timeout_s = 5.0;
  cfg.max_attempts = 3;
  cfg.max_inflight = 4;
  cfg.backoff_base_s = 0.005;
  return cfg;
}

ChatRequest text_request(const std::string& text, std::uint64_t seed = 0) {
  ChatRequest req;
  req.messages.push_back(ChatMessage{"user", text, std::nullopt});
  req.sampling.seed = seed;
  return req;
}

ScriptEntry text_entry(const std::string& key, const std::string& reply) {
  ScriptEntry e;
  e.key = key;
  e.text = reply;
  return e;
}

}  // namespace

TEST_CASE("scripted request returns the scripted text byte-exact") {
  MockServer server(Script{{text_entry("msg0=user:ping", "pong \xE2\x9C\x93 bytes")}});
  server.start();
  ModelGateway gateway({{"weak-vlm", fast_endpoint("weak-vlm", server.base_url(), "weak-1")}});
  ChatResponse resp = gateway.chat_complete("weak-vlm", text_request("ping"));
  CHECK(resp.text == "pong \xE2\x9C\x93 bytes");
  CHECK(resp.attempts == 1);
  CHECK(resp.usage.total_tokens > 0);
}

TEST_CASE("retry contract: two failures then success under max_attempts=3") {
  ScriptEntry entry = text_entry("msg0=user:flaky", "recovered");
  entry.fail_times = 2;
  entry.fail_status = 500;
  MockServer server(Script{{entry}});
  server.start();
  ModelGateway gateway({{"weak-vlm", fast_endpoint("weak-vlm", server.base_url(), "weak-1")}});

  ChatResponse resp = gateway.chat_complete("weak-vlm", text_request("flaky"));
  CHECK(resp.text == "recovered");
  CHECK(resp.attempts == 3);
  CHECK(server.stats().requests == 3);

  auto log = gateway.drain_call_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].attempts == 3);
}

TEST_CASE("retries exhausted raises EndpointError with the last status") {
  ScriptEntry entry = text_entry("msg0=user:dead", "never");
  entry.fail_times = 99;
  entry.fail_status = 503;
  MockServer server(Script{{entry}});
  server.start();
  ModelGateway gateway({{"weak-vlm", fast_endpoint("weak-vlm", server.base_url(), "weak-1")}});
  try {
    gateway.chat_complete("weak-vlm", text_request("dead"));
    FAIL("expected EndpointError");
  } catch (const EndpointError& err) {
    CHECK(err.last_status() == 503);
    CHECK(err.role() == "weak-vlm");
  }
  CHECK(server.stats().requests == 3);
}

TEST_CASE("unknown role fails before any network call") {
  ModelGateway gateway({});
  CHECK_THROWS_AS(gateway.chat_complete("weak-vlm", text_request("x")), ConfigError);
  CHECK_THROWS_AS(gateway.detect_objects(ImageRef{"img.png", "image/png"}), ConfigError);
}

TEST_CASE("unmatched request is a non-retryable protocol error") {
  MockServer server(Script{{text_entry("msg0=user:known", "ok")}});
  server.start();
  ModelGateway gateway({{"weak-vlm", fast_endpoint("weak-vlm", server.base_url(), "weak-1")}});
  try {
    gateway.chat_complete("weak-vlm", text_request("unknown"));
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& err) {
    CHECK(err.status() == 404);
    // The canonical hash is echoed so fixtures can be authored from it.
    CHECK(std::string(err.what()).find("canonical_sha256") != std::string::npos);
  }
  CHECK(server.stats().unmatched == 1);
  CHECK(server.stats().requests == 1);
}

TEST_CASE("exact canonical-hash key beats substring matches") {
  ChatRequest req = text_request("shared prefix");
  std::string canonical = canonical_chat_request("weak-1", req);
  ScriptEntry specific = text_entry(sha256_hex(canonical), "exact");
  ScriptEntry generic = text_entry("shared prefix", "generic");
  MockServer server(Script{{generic, specific}});
  server.start();
  ModelGateway gateway({{"weak-vlm", fast_endpoint("weak-vlm", server.base_url(), "weak-1")}});
  CHECK(gateway.chat_complete("weak-vlm", req).text == "exact");
}

TEST_CASE("detector normalizes labels and applies the confidence floor") {
  ScriptEntry entry;
  entry.key = "image=img/zebra.png";
  entry.objects = json::array({json{{"label", "Zebra "}, {"confidence", 0.97}},
                               json{{"label", "zebra"}, {"confidence", 0.9}},
                               json{{"label", "rock"}, {"confidence", 0.81}},
                               json{{"label", "grass"}, {"confidence", 0.66}},
                               json{{"label", "bicycle"}, {"confidence", 0.10}}});
  MockServer server(Script{{entry}});
  server.start();
  ModelGateway gateway({{"detector", fast_endpoint("detector", server.base_url(), "det-1")}});

  ObjectSet set = gateway.detect_objects(ImageRef{"img/zebra.png", "image/png"});
  CHECK(set.labels() == std::vector<std::string>{"zebra", "rock", "grass"});

  SUBCASE("all detections below the floor yield an empty set") {
    ScriptEntry low;
    low.key = "image=img/empty.png";
    low.objects = json::array({json{{"label", "ghost"}, {"confidence", 0.2}}});
    MockServer server2(Script{{low}});
    server2.start();
    ModelGateway gw2({{"detector", fast_endpoint("detector", server2.base_url(), "det-1")}});
    CHECK(gw2.detect_objects(ImageRef{"img/empty.png", "image/png"}).empty());
  }
}

TEST_CASE("verdict probabilities come off the first generated position") {
  ChatResponse resp;
  resp.top_logprobs = {{{"Yes", std::log(0.8)}, {"No", std::log(0.2)}}};
  VerdictProbs probs = extract_verdict_probs(resp);
  CHECK(probs.p_yes == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(probs.p_no == doctest::Approx(0.2).epsilon(1e-12));

  SUBCASE("leading-space and case variants are accepted") {
    ChatResponse variant;
    variant.top_logprobs = {{{" yes", std::log(0.6)}, {"No", std::log(0.3)}}};
    VerdictProbs p = extract_verdict_probs(variant);
    CHECK(p.p_yes == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p.p_no == doctest::Approx(0.3).epsilon(1e-12));
  }

  SUBCASE("missing verdict tokens raise") {
    ChatResponse none;
    none.top_logprobs = {{{"Maybe", std::log(0.9)}}};
    CHECK_THROWS_AS(extract_verdict_probs(none), MissingVerdictError);
    ChatResponse empty;
    CHECK_THROWS_AS(extract_verdict_probs(empty), MissingVerdictError);
  }

  SUBCASE("one-sided verdicts contribute zero for the other side") {
    ChatResponse only_yes;
    only_yes.top_logprobs = {{{"Yes", std::log(0.7)}, {"Sure", std::log(0.1)}}};
    VerdictProbs p = extract_verdict_probs(only_yes);
    CHECK(p.p_yes == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(p.p_no == 0.0);
  }
}

TEST_CASE("in-flight requests per role never exceed max_inflight") {
  ScriptEntry entry = text_entry("msg0=user:slow", "done");
  entry.delay_ms = 25;
  MockServer server(Script{{entry}});
  server.start();

  EndpointConfig cfg = fast_endpoint("weak-vlm", server.base_url(), "weak-1");
  cfg.max_inflight = 2;
  ModelGateway gateway({{"weak-vlm", cfg}});

  std::vector<std::thread> workers;
  for (int i = 0; i < 8; ++i) {
    workers.emplace_back([&] { gateway.chat_complete("weak-vlm", text_request("slow")); });
  }
  for (auto& w : workers) w.join();

  MockStats stats = server.stats();
  CHECK(stats.requests == 8);
  CHECK(stats.max_concurrency <= 2);
}

TEST_CASE("fixed script makes call sequences fully deterministic") {
  Script script{{text_entry("msg0=user:a", "alpha"), text_entry("msg0=user:b", "beta")}};
  auto run_once = [&script] {
    MockServer server(script);
    server.start();
    ModelGateway gateway({{"weak-vlm", fast_endpoint("weak-vlm", server.base_url(), "weak-1")}});
    gateway.chat_complete("weak-vlm", text_request("a"), make_call_tag(0));
    gateway.chat_complete("weak-vlm", text_request("b"), make_call_tag(1));
    json out = json::array();
    for (const auto& e : gateway.drain_call_log()) out.push_back(e.to_json());
    return out.dump();
  };
  std::string first = run_once();
  std::string second = run_once();
  CHECK(first == second);
  CHECK(first.find("request_hash") != std::string::npos);
}

TEST_CASE("recording proxy captures replayable entries") {
  MockServer upstream(Script{{text_entry("msg0=user:origin", "origin-reply")}});
  upstream.start();

  auto script_path = std::filesystem::temp_directory_path() / "vlrm_recorded_script.jsonl";
  std::filesystem::remove(script_path);
  RecordingProxy proxy(upstream.base_url(), script_path);
  proxy.start();

  ModelGateway through_proxy({{"weak-vlm", fast_endpoint("weak-vlm", proxy.base_url(), "weak-1")}});
  ChatResponse live = through_proxy.chat_complete("weak-vlm", text_request("origin"));
  CHECK(live.text == "origin-reply");
  // Duplicate request dedups to a single entry.
  through_proxy.chat_complete("weak-vlm", text_request("origin"));
  CHECK(proxy.entry_count() == 1);
  proxy.stop();

  MockServer replay(Script::load(script_path));
  replay.start();
  ModelGateway replayed({{"weak-vlm", fast_endpoint("weak-vlm", replay.base_url(), "weak-1")}});
  CHECK(replayed.chat_complete("weak-vlm", text_request("origin")).text == "origin-reply");
  std::filesystem::remove(script_path);
}

TEST_CASE("script rejects duplicate match keys") {
  CHECK_THROWS_AS(Script({text_entry("k", "a"), text_entry("k", "b")}), ValidationError);
}

TEST_CASE("endpoint config invariants") {
  EndpointConfig cfg = fast_endpoint("weak-vlm", "ftp://nope", "m");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.base_url = "http://127.0.0.1:1";
  cfg.max_attempts = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.max_attempts = 1;
  cfg.max_inflight = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
