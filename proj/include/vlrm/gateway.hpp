#pragma once

// Uniform client over the pipeline's model endpoints. Chat completions and
// object detection ride the same role table; every call gets bounded retry
// with exponential backoff, a per-role in-flight cap, and a deterministic
// entry in the call log keyed by the caller's tag.

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vlrm/errors.hpp"
#include "vlrm/records.hpp"
#include "vlrm/sha256.hpp"

namespace vlrm {

// Role names are fixed across the pipeline.
namespace roles {
inline constexpr const char* kWeakVlm = "weak-vlm";
inline constexpr const char* kStrongVlm = "strong-vlm";
inline constexpr const char* kTeacherVlm = "teacher-vlm";
inline constexpr const char* kDetector = "detector";
inline constexpr const char* kRewardModel = "reward-model";
inline constexpr const char* kGenerator = "generator";
}  // namespace roles

struct EndpointConfig {
  std::string role;
  std::string base_url;
  std::string model;
  std::string auth_env;  // name of the env var holding the bearer token
  double timeout_s = 30.0;
  int max_attempts = 3;
  int max_inflight = 4;
  double backoff_base_s = 0.5;
  double backoff_cap_s = 30.0;
  double confidence_floor = 0.35;  // detector only

  void validate() const {
    if (role.empty()) throw ConfigError("endpoint role name must be non-empty");
    if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
      throw ConfigError("endpoint \"" + role + "\": base_url must be an http(s) URL, got \"" + base_url + "\"");
    }
    if (base_url.size() <= base_url.find("//") + 2) {
      throw ConfigError("endpoint \"" + role + "\": base_url has no host");
    }
    if (max_attempts < 1) throw ConfigError("endpoint \"" + role + "\": max_attempts must be >= 1");
    if (max_inflight < 1) throw ConfigError("endpoint \"" + role + "\": max_inflight must be >= 1");
    if (timeout_s <= 0) throw ConfigError("endpoint \"" + role + "\": timeout must be positive");
  }
};

struct SamplingParams {
  double temperature = 0.7;  // shipped generation defaults
  double top_p = 0.9;
  int top_k = 50;
  int max_tokens = 1024;
  std::uint64_t seed = 0;

  void validate() const {
    if (temperature < 0) throw ValidationError("temperature must be >= 0");
    if (top_p <= 0 || top_p > 1) throw ValidationError("top_p must lie in (0,1]");
    if (top_k < 0) throw ValidationError("top_k must be >= 0");
    if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
  }
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
  std::optional<ImageRef> image;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  SamplingParams sampling;
  bool want_logprobs = false;
  int logprob_top_k = 20;

  void validate() const {
    if (messages.empty()) throw ValidationError("chat request needs at least one message");
    sampling.validate();
    if (want_logprobs && logprob_top_k < 1) throw ValidationError("logprob_top_k must be >= 1");
  }
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;
};

struct ChatResponse {
  std::string text;
  // top_logprobs[i] holds the top-k alternatives for generated position i;
  // populated only when the request asked for log-probabilities.
  std::vector<std::vector<TokenLogprob>> top_logprobs;
  Usage usage;
  int attempts = 1;
};

// ---------------------------------------------------------------------------
// Canonical request forms. The gateway hashes these for the call log and the
// mock server matches script entries against them, so the format must not
// carry timestamps or correlation ids.

inline std::string canonical_number(double v) { return json(v).dump(); }

inline std::string canonical_chat_request(const std::string& model, const ChatRequest& req) {
  std::string out = "chat|model=" + model;
  out += "|temp=" + canonical_number(req.sampling.temperature);
  out += "|top_p=" + canonical_number(req.sampling.top_p);
  out += "|top_k=" + std::to_string(req.sampling.top_k);
  out += "|max_tokens=" + std::to_string(req.sampling.max_tokens);
  out += "|seed=" + std::to_string(req.sampling.seed);
  out += "|logprobs=" + std::string(req.want_logprobs ? "1" : "0");
  if (req.want_logprobs) out += ":" + std::to_string(req.logprob_top_k);
  for (std::size_t i = 0; i < req.messages.size(); ++i) {
    const auto& m = req.messages[i];
    out += "|msg" + std::to_string(i) + "=" + m.role + ":" + m.text;
    if (m.image) out += "|img=" + m.image->uri;
  }
  return out;
}

inline std::string canonical_detect_request(const std::string& model, const ImageRef& image,
                                            const std::vector<std::string>& vocabulary) {
  std::string out = "detect|model=" + model + "|image=" + image.uri + "|vocab=";
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (i) out += ",";
    out += vocabulary[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wire encoding (OpenAI-style chat completions; minimal detect endpoint).

inline json chat_request_to_wire(const std::string& model, const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    json msg{{"role", m.role}};
    if (m.image) {
      json parts = json::array();
      parts.push_back(json{{"type", "text"}, {"text", m.text}});
      parts.push_back(json{{"type", "image_url"}, {"image_url", json{{"url", m.image->uri}}}});
      msg["content"] = std::move(parts);
    } else {
      msg["content"] = m.text;
    }
    messages.push_back(std::move(msg));
  }
  json body{{"model", model},
            {"messages", std::move(messages)},
            {"temperature", req.sampling.temperature},
            {"top_p", req.sampling.top_p},
            {"top_k", req.sampling.top_k},
            {"max_tokens", req.sampling.max_tokens},
            {"seed", req.sampling.seed}};
  if (req.want_logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = req.logprob_top_k;
  }
  return body;
}

inline ChatResponse chat_response_from_wire(const json& body) {
  ChatResponse resp;
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw ProtocolError("chat response has no choices", 200);
  }
  const json& choice = body["choices"][0];
  if (choice.contains("message") && choice["message"].contains("content") &&
      choice["message"]["content"].is_string()) {
    resp.text = choice["message"]["content"].get<std::string>();
  }
  if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
      choice["logprobs"].contains("content")) {
    for (const auto& position : choice["logprobs"]["content"]) {
      std::vector<TokenLogprob> alternatives;
      if (position.contains("top_logprobs")) {
        for (const auto& alt : position["top_logprobs"]) {
          TokenLogprob tl{alt.value("token", std::string()), alt.value("logprob", 0.0)};
          if (tl.logprob > 0.0) throw ProtocolError("log-probability must be <= 0", 200);
          alternatives.push_back(std::move(tl));
        }
      }
      resp.top_logprobs.push_back(std::move(alternatives));
    }
  }
  if (body.contains("usage") && body["usage"].is_object()) {
    const json& u = body["usage"];
    resp.usage.prompt_tokens = u.value("prompt_tokens", 0L);
    resp.usage.completion_tokens = u.value("completion_tokens", 0L);
    resp.usage.total_tokens = u.value("total_tokens", 0L);
  }
  return resp;
}

// ---------------------------------------------------------------------------
// Call log

struct CallLogEntry {
  std::string tag;   // caller-supplied grouping key, e.g. zero-padded record index
  int seq = 0;       // order of calls within the tag
  std::string role;
  std::string kind;  // "chat" | "detect"
  std::string request_hash;
  std::string response_hash;
  int attempts = 1;
  int status = 200;

  json to_json() const {
    return json{{"tag", tag},     {"seq", seq},
                {"role", role},   {"kind", kind},
                {"request_hash", request_hash}, {"response_hash", response_hash},
                {"attempts", attempts},         {"status", status}};
  }
};

/// Zero-padded record tag so lexicographic call-log order matches input order.
inline std::string make_call_tag(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08zu", index);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Gateway

class ModelGateway {
 public:
  explicit ModelGateway(std::map<std::string, EndpointConfig> roles) : roles_(std::move(roles)) {
    for (auto& [name, cfg] : roles_) {
      if (cfg.role.empty()) cfg.role = name;
      cfg.validate();
      limiters_.emplace(name, std::make_unique<Limiter>());
    }
  }

  bool has_role(const std::string& role) const { return roles_.count(role) > 0; }

  const EndpointConfig& role_config(const std::string& role) const {
    auto it = roles_.find(role);
    if (it == roles_.end()) throw ConfigError("unknown endpoint role \"" + role + "\"");
    return it->second;
  }

  ChatResponse chat_complete(const std::string& role, const ChatRequest& request,
                             const std::string& tag = std::string()) {
    const EndpointConfig& cfg = role_config(role);
    request.validate();
    json body = chat_request_to_wire(cfg.model, request);
    std::string canonical = canonical_chat_request(cfg.model, request);
    auto [response_body, attempts, status] = perform(cfg, "/v1/chat/completions", body.dump(), role);
    ChatResponse resp = chat_response_from_wire(response_body);
    resp.attempts = attempts;
    log_call(tag, role, "chat", canonical, response_body.dump(), attempts, status);
    return resp;
  }

  /// Runs the detector role over one image. Detections below the configured
  /// confidence floor are dropped; an empty result is not an error.
  ObjectSet detect_objects(const ImageRef& image, const std::vector<std::string>& vocabulary = {},
                           const std::string& tag = std::string()) {
    const EndpointConfig& cfg = role_config(roles::kDetector);
    image.validate();
    json body{{"image", image.to_json()}};
    if (!vocabulary.empty()) body["vocabulary"] = vocabulary;
    std::string canonical = canonical_detect_request(cfg.model, image, vocabulary);
    auto [response_body, attempts, status] = perform(cfg, "/v1/detect", body.dump(), roles::kDetector);
    ObjectSet detections;
    if (response_body.contains("objects")) {
      for (const auto& obj : response_body["objects"]) {
        double confidence = obj.value("confidence", 1.0);
        if (confidence < cfg.confidence_floor) continue;
        std::optional<std::array<double, 4>> box;
        if (obj.contains("box") && obj["box"].is_array() && obj["box"].size() == 4) {
          box = std::array<double, 4>{obj["box"][0].get<double>(), obj["box"][1].get<double>(),
                                      obj["box"][2].get<double>(), obj["box"][3].get<double>()};
        }
        detections.add(obj.value("label", std::string()), confidence, box);
      }
    }
    log_call(tag, roles::kDetector, "detect", canonical, response_body.dump(), attempts, status);
    return detections;
  }

  /// Removes and returns all accumulated call-log entries, sorted by
  /// (tag, seq) so concurrent schedules produce identical logs.
  std::vector<CallLogEntry> drain_call_log() {
    std::lock_guard<std::mutex> lock(log_mutex_);
    std::vector<CallLogEntry> out = std::move(call_log_);
    call_log_.clear();
    tag_seq_.clear();
    std::stable_sort(out.begin(), out.end(), [](const CallLogEntry& a, const CallLogEntry& b) {
      return a.tag != b.tag ? a.tag < b.tag : a.seq < b.seq;
    });
    return out;
  }

 private:
  struct Limiter {
    std::mutex mutex;
    std::condition_variable cv;
    int in_flight = 0;
  };

  struct InflightGuard {
    Limiter& limiter;
    InflightGuard(Limiter& l, int cap) : limiter(l) {
      std::unique_lock<std::mutex> lock(limiter.mutex);
      limiter.cv.wait(lock, [&] { return limiter.in_flight < cap; });
      ++limiter.in_flight;
    }
    ~InflightGuard() {
      {
        std::lock_guard<std::mutex> lock(limiter.mutex);
        --limiter.in_flight;
      }
      limiter.cv.notify_one();
    }
  };

  static bool retryable_status(int status) {
    return status == 408 || status == 429 || (status >= 500 && status <= 599);
  }

  std::chrono::milliseconds backoff_delay(const EndpointConfig& cfg, int failed_attempts) {
    double base = cfg.backoff_base_s * std::pow(2.0, failed_attempts - 1);
    if (base > cfg.backoff_cap_s) base = cfg.backoff_cap_s;
    double jitter;
    {
      std::lock_guard<std::mutex> lock(jitter_mutex_);
      jitter = 0.5 + 0.5 * jitter_dist_(jitter_rng_);
    }
    return std::chrono::milliseconds(static_cast<long>(base * jitter * 1000.0));
  }

  std::tuple<json, int, int> perform(const EndpointConfig& cfg, const std::string& path,
                                     const std::string& body, const std::string& role) {
    InflightGuard guard(*limiters_.at(role), cfg.max_inflight);
    int last_status = 0;
    std::string last_detail = "connection failed";
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
      httplib::Client client(cfg.base_url);
      client.set_connection_timeout(std::chrono::milliseconds(static_cast<long>(cfg.timeout_s * 1000)));
      client.set_read_timeout(std::chrono::milliseconds(static_cast<long>(cfg.timeout_s * 1000)));
      client.set_write_timeout(std::chrono::milliseconds(static_cast<long>(cfg.timeout_s * 1000)));
      httplib::Headers headers;
      if (!cfg.auth_env.empty()) {
        if (const char* token = std::getenv(cfg.auth_env.c_str()); token && *token) {
          headers.emplace("Authorization", std::string("Bearer ") + token);
        }
      }
      auto result = client.Post(path, headers, body, "application/json");
      if (!result) {
        last_status = 0;
        last_detail = httplib::to_string(result.error());
      } else if (result->status >= 200 && result->status < 300) {
        json parsed = json::parse(result->body, nullptr, false);
        if (parsed.is_discarded()) throw ProtocolError("endpoint returned unparseable JSON", result->status);
        return {parsed, attempt, result->status};
      } else if (retryable_status(result->status)) {
        last_status = result->status;
        last_detail = "HTTP " + std::to_string(result->status);
      } else {
        throw ProtocolError("endpoint role \"" + role + "\" returned HTTP " + std::to_string(result->status) +
                                ": " + result->body,
                            result->status);
      }
      if (attempt < cfg.max_attempts) std::this_thread::sleep_for(backoff_delay(cfg, attempt));
    }
    throw EndpointError(role, last_status, last_detail);
  }

  void log_call(const std::string& tag, const std::string& role, const std::string& kind,
                const std::string& canonical_request, const std::string& response_body, int attempts,
                int status) {
    std::lock_guard<std::mutex> lock(log_mutex_);
    CallLogEntry entry;
    entry.tag = tag;
    entry.seq = ++tag_seq_[tag];
    entry.role = role;
    entry.kind = kind;
    entry.request_hash = sha256_hex(canonical_request);
    entry.response_hash = sha256_hex(response_body);
    entry.attempts = attempts;
    entry.status = status;
    call_log_.push_back(std::move(entry));
  }

  std::map<std::string, EndpointConfig> roles_;
  std::map<std::string, std::unique_ptr<Limiter>> limiters_;

  std::mutex log_mutex_;
  std::vector<CallLogEntry> call_log_;
  std::map<std::string, int> tag_seq_;

  std::mutex jitter_mutex_;
  std::mt19937_64 jitter_rng_{std::random_device{}()};
  std::uniform_real_distribution<double> jitter_dist_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Verdict-token probabilities

struct VerdictProbs {
  double p_yes = 0.0;
  double p_no = 0.0;
};

inline bool token_matches_verdict(std::string_view token, std::string_view verdict_lower) {
  std::size_t start = 0;
  while (start < token.size() && std::isspace(static_cast<unsigned char>(token[start]))) ++start;
  std::string_view core = token.substr(start);
  if (core.size() != verdict_lower.size()) return false;
  for (std::size_t i = 0; i < core.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(core[i])) != verdict_lower[i]) return false;
  }
  return true;
}

/// Reads p("Yes") and p("No") off the first generated position's top-k
/// alternatives. Token match is case-insensitive and tolerates leading
/// whitespace; a verdict token absent from the top-k contributes zero.
inline VerdictProbs extract_verdict_probs(const ChatResponse& response) {
  if (response.top_logprobs.empty()) {
    throw MissingVerdictError("response carries no top-k log-probabilities");
  }
  std::optional<double> yes_lp;
  std::optional<double> no_lp;
  for (const auto& alt : response.top_logprobs.front()) {
    if (token_matches_verdict(alt.token, "yes")) {
      if (!yes_lp || alt.logprob > *yes_lp) yes_lp = alt.logprob;
    } else if (token_matches_verdict(alt.token, "no")) {
      if (!no_lp || alt.logprob > *no_lp) no_lp = alt.logprob;
    }
  }
  if (!yes_lp && !no_lp) {
    throw MissingVerdictError("neither verdict token found in top-k log-probabilities");
  }
  VerdictProbs probs;
  probs.p_yes = yes_lp ? std::exp(*yes_lp) : 0.0;
  probs.p_no = no_lp ? std::exp(*no_lp) : 0.0;
  return probs;
}

}  // namespace vlrm
