#pragma once

// Deterministic stand-in for every endpoint role. Responses are scripted:
// each entry matches requests either by the SHA-256 of the canonical request
// form or by substring keys over that form, so fixtures can be authored
// incrementally (unmatched requests echo the canonical form back). A
// /admin/stats endpoint exposes request counts and the maximum observed
// concurrency, which the gateway tests use to validate their in-flight caps.

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vlrm/errors.hpp"
#include "vlrm/gateway.hpp"
#include "vlrm/jsonl.hpp"
#include "vlrm/sha256.hpp"

namespace vlrm {

struct ScriptEntry {
  // Either `key` (canonical hash or one substring) or `keys` (all substrings
  // must be present). A 64-hex key equal to the request hash matches exactly
  // and beats every substring match.
  std::string key;
  std::vector<std::string> keys;

  std::string text;                        // chat completion text
  std::vector<TokenLogprob> top_logprobs;  // first-position alternatives
  std::optional<json> objects;             // detect response payload
  std::optional<std::string> raw_body;     // verbatim response body (record mode)

  int fail_times = 0;   // fail this many attempts before succeeding
  int fail_status = 500;
  int delay_ms = 0;

  std::string identity() const {
    if (!key.empty()) return key;
    std::string joined;
    for (const auto& k : keys) joined += k + "\x1f";
    return joined;
  }

  json to_json() const {
    json j = json::object();
    if (!key.empty()) j["key"] = key;
    if (!keys.empty()) j["keys"] = keys;
    json response = json::object();
    if (raw_body) {
      response["raw_body"] = *raw_body;
    } else {
      response["text"] = text;
      if (!top_logprobs.empty()) {
        json lps = json::array();
        for (const auto& tl : top_logprobs) lps.push_back(json{{"token", tl.token}, {"logprob", tl.logprob}});
        response["top_logprobs"] = std::move(lps);
      }
      if (objects) response["objects"] = *objects;
    }
    j["response"] = std::move(response);
    if (fail_times > 0) j["fail"] = json{{"times", fail_times}, {"status", fail_status}};
    if (delay_ms > 0) j["delay_ms"] = delay_ms;
    return j;
  }

  static ScriptEntry from_json(const json& j, std::size_t line = 0) {
    ScriptEntry e;
    if (j.contains("key")) e.key = j["key"].get<std::string>();
    if (j.contains("keys")) {
      for (const auto& k : j["keys"]) e.keys.push_back(k.get<std::string>());
    }
    if (e.key.empty() && e.keys.empty()) throw SchemaError("key", line);
    if (!j.contains("response") || !j["response"].is_object()) throw SchemaError("response", line);
    const json& r = j["response"];
    if (r.contains("raw_body")) e.raw_body = r["raw_body"].get<std::string>();
    if (r.contains("text")) e.text = r["text"].get<std::string>();
    if (r.contains("top_logprobs")) {
      for (const auto& tl : r["top_logprobs"]) {
        e.top_logprobs.push_back(TokenLogprob{tl.at("token").get<std::string>(), tl.at("logprob").get<double>()});
      }
    }
    if (r.contains("objects")) e.objects = r["objects"];
    if (j.contains("fail")) {
      e.fail_times = j["fail"].value("times", 0);
      e.fail_status = j["fail"].value("status", 500);
    }
    if (j.contains("delay_ms")) e.delay_ms = j["delay_ms"].get<int>();
    return e;
  }
};

class Script {
 public:
  Script() = default;

  explicit Script(std::vector<ScriptEntry> entries) : entries_(std::move(entries)) { check_unique(); }

  static Script load(const std::filesystem::path& path) {
    std::vector<ScriptEntry> entries;
    std::size_t line_no = 0;
    for (const auto& line : read_lines(path)) {
      ++line_no;
      json j = parse_json_line(line, line_no);
      entries.push_back(ScriptEntry::from_json(j, line_no));
    }
    return Script(std::move(entries));
  }

  const std::vector<ScriptEntry>& entries() const { return entries_; }

  /// Match priority: exact canonical-hash key, then the substring entry with
  /// the greatest total matched length, earliest script entry on ties.
  const ScriptEntry* match(const std::string& canonical, const std::string& hash) const {
    const ScriptEntry* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& entry : entries_) {
      if (!entry.key.empty() && entry.key == hash) return &entry;
      std::size_t total = 0;
      bool all = true;
      if (!entry.key.empty()) {
        if (canonical.find(entry.key) == std::string::npos) {
          all = false;
        } else {
          total += entry.key.size();
        }
      }
      for (const auto& k : entry.keys) {
        if (canonical.find(k) == std::string::npos) {
          all = false;
          break;
        }
        total += k.size();
      }
      if (all && total > 0 && total > best_len) {
        best = &entry;
        best_len = total;
      }
    }
    return best;
  }

 private:
  void check_unique() const {
    std::map<std::string, int> seen;
    for (const auto& e : entries_) {
      if (++seen[e.identity()] > 1) {
        throw ValidationError("duplicate script match key: " + e.identity());
      }
    }
  }

  std::vector<ScriptEntry> entries_;
};

struct MockStats {
  long requests = 0;
  long unmatched = 0;
  int max_concurrency = 0;
};

/// Reconstructs the gateway's canonical form from a wire chat request.
inline std::string canonical_from_wire_chat(const json& body) {
  ChatRequest req;
  for (const auto& m : body.value("messages", json::array())) {
    ChatMessage msg;
    msg.role = m.value("role", std::string());
    const json& content = m.contains("content") ? m["content"] : json();
    if (content.is_string()) {
      msg.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        std::string type = part.value("type", std::string());
        if (type == "text") {
          msg.text = part.value("text", std::string());
        } else if (type == "image_url" && part.contains("image_url")) {
          ImageRef img;
          img.uri = part["image_url"].value("url", std::string());
          msg.image = img;
        }
      }
    }
    req.messages.push_back(std::move(msg));
  }
  req.sampling.temperature = body.value("temperature", 0.7);
  req.sampling.top_p = body.value("top_p", 0.9);
  req.sampling.top_k = body.value("top_k", 50);
  req.sampling.max_tokens = body.value("max_tokens", 1024);
  req.sampling.seed = body.value("seed", std::uint64_t{0});
  req.want_logprobs = body.value("logprobs", false);
  req.logprob_top_k = body.value("top_logprobs", 20);
  return canonical_chat_request(body.value("model", std::string()), req);
}

inline std::string canonical_from_wire_detect(const json& body) {
  ImageRef image;
  if (body.contains("image")) image.uri = body["image"].value("uri", std::string());
  std::vector<std::string> vocab;
  if (body.contains("vocabulary")) {
    for (const auto& v : body["vocabulary"]) vocab.push_back(v.get<std::string>());
  }
  return canonical_detect_request(body.value("model", std::string()), image, vocab);
}

class MockServer {
 public:
  explicit MockServer(Script script) : script_(std::move(script)) { install_routes(); }

  ~MockServer() { stop(); }

  /// Binds and serves on a background thread. port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      if (!server_.bind_to_port(host, port)) throw ConfigError("mock server: cannot bind " + host + ":" + std::to_string(port));
      port_ = port;
    }
    if (port_ <= 0) throw ConfigError("mock server: bind failed on " + host);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  MockStats stats() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return stats_;
  }

  void reset_counters() {
    std::lock_guard<std::mutex> lock(mutex_);
    stats_ = MockStats{};
    attempt_counts_.clear();
  }

 private:
  struct ConcurrencyScope {
    MockServer& self;
    explicit ConcurrencyScope(MockServer& s) : self(s) {
      std::lock_guard<std::mutex> lock(self.mutex_);
      ++self.stats_.requests;
      ++self.current_;
      if (self.current_ > self.stats_.max_concurrency) self.stats_.max_concurrency = self.current_;
    }
    ~ConcurrencyScope() {
      std::lock_guard<std::mutex> lock(self.mutex_);
      --self.current_;
    }
  };

  void install_routes() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, /*detect=*/false);
    });
    server_.Post("/v1/detect", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, /*detect=*/true);
    });
    server_.Get("/admin/stats", [this](const httplib::Request&, httplib::Response& res) {
      MockStats s = stats();
      json body{{"requests", s.requests}, {"unmatched", s.unmatched}, {"max_concurrency", s.max_concurrency}};
      res.set_content(body.dump(), "application/json");
    });
    server_.Post("/admin/reset", [this](const httplib::Request&, httplib::Response& res) {
      reset_counters();
      res.set_content("{}", "application/json");
    });
  }

  void handle(const httplib::Request& req, httplib::Response& res, bool detect) {
    ConcurrencyScope scope(*this);
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      res.status = 400;
      res.set_content(R"({"error":"bad json"})", "application/json");
      return;
    }
    std::string canonical = detect ? canonical_from_wire_detect(body) : canonical_from_wire_chat(body);
    std::string hash = sha256_hex(canonical);
    const ScriptEntry* entry = script_.match(canonical, hash);
    if (!entry) {
      {
        std::lock_guard<std::mutex> lock(mutex_);
        ++stats_.unmatched;
      }
      json err{{"error", "no script entry matched"}, {"canonical_sha256", hash}, {"canonical", canonical}};
      res.status = 404;
      res.set_content(err.dump(), "application/json");
      return;
    }
    if (entry->delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(entry->delay_ms));
    if (entry->fail_times > 0) {
      int seen;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        seen = ++attempt_counts_[entry->identity()];
      }
      if (seen <= entry->fail_times) {
        res.status = entry->fail_status;
        res.set_content(R"({"error":"scripted failure"})", "application/json");
        return;
      }
    }
    if (entry->raw_body) {
      res.set_content(*entry->raw_body, "application/json");
      return;
    }
    if (detect) {
      json out{{"objects", entry->objects ? *entry->objects : json::array()}};
      res.set_content(out.dump(), "application/json");
      return;
    }
    res.set_content(render_chat_body(canonical, *entry).dump(), "application/json");
  }

  static json render_chat_body(const std::string& canonical, const ScriptEntry& entry) {
    json message{{"role", "assistant"}, {"content", entry.text}};
    json choice{{"index", 0}, {"message", std::move(message)}, {"finish_reason", "stop"}};
    if (!entry.top_logprobs.empty()) {
      json alts = json::array();
      for (const auto& tl : entry.top_logprobs) {
        alts.push_back(json{{"token", tl.token}, {"logprob", tl.logprob}});
      }
      std::string first_token = entry.top_logprobs.front().token;
      double first_lp = entry.top_logprobs.front().logprob;
      json position{{"token", first_token}, {"logprob", first_lp}, {"top_logprobs", std::move(alts)}};
      choice["logprobs"] = json{{"content", json::array({std::move(position)})}};
    }
    // Deterministic placeholder usage counters derived from sizes.
    long prompt_tokens = static_cast<long>((canonical.size() + 3) / 4);
    long completion_tokens = static_cast<long>((entry.text.size() + 3) / 4);
    json usage{{"prompt_tokens", prompt_tokens},
               {"completion_tokens", completion_tokens},
               {"total_tokens", prompt_tokens + completion_tokens}};
    return json{{"id", "mock"},
                {"object", "chat.completion"},
                {"choices", json::array({std::move(choice)})},
                {"usage", std::move(usage)}};
  }

  Script script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;

  mutable std::mutex mutex_;
  MockStats stats_;
  int current_ = 0;
  std::map<std::string, int> attempt_counts_;
};

/// Record mode: a proxy that forwards model traffic to a real upstream and
/// captures each request/response pair as a replayable script entry keyed by
/// the canonical request hash. Duplicate requests collapse to one entry.
class RecordingProxy {
 public:
  RecordingProxy(std::string upstream_base_url, std::filesystem::path output_script)
      : upstream_(std::move(upstream_base_url)), output_(std::move(output_script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, false);
    });
    server_.Post("/v1/detect", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, true);
    });
  }

  ~RecordingProxy() { stop(); }

  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = (port == 0) ? server_.bind_to_any_port(host)
                        : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) throw ConfigError("recording proxy: bind failed");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::size_t entry_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return recorded_.size();
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res, bool detect) {
    json body = json::parse(req.body, nullptr, false);
    std::string canonical =
        body.is_discarded() ? req.body : (detect ? canonical_from_wire_detect(body) : canonical_from_wire_chat(body));
    std::string hash = sha256_hex(canonical);

    httplib::Client client(upstream_);
    auto upstream_res = client.Post(req.path, req.body, "application/json");
    if (!upstream_res) {
      res.status = 502;
      res.set_content(R"({"error":"upstream unreachable"})", "application/json");
      record(hash, res.status, res.body);
      return;
    }
    res.status = upstream_res->status;
    res.set_content(upstream_res->body, "application/json");
    record(hash, upstream_res->status, upstream_res->body);
  }

  void record(const std::string& hash, int status, const std::string& body) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (recorded_.count(hash)) return;
    ScriptEntry entry;
    entry.key = hash;
    entry.raw_body = body;
    if (status < 200 || status >= 300) {
      entry.fail_times = 0;  // failures are recorded verbatim as the body
    }
    recorded_.emplace(hash, entry);
    std::ofstream out(output_, std::ios::binary | std::ios::app);
    out << entry.to_json().dump() << '\n';
  }

  std::string upstream_;
  std::filesystem::path output_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;

  mutable std::mutex mutex_;
  std::map<std::string, ScriptEntry> recorded_;
};

}  // namespace vlrm
