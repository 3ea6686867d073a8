#pragma once

#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "amod/prompt.hpp"

namespace amod {

struct GatewayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GatewayConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LmmParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class GatewayMode {
  Live,        // HTTP chat endpoint
  MockScript,  // canned responses consumed per (variant, call index)
  MockBrain,   // deterministic heuristic responder, no script needed
};

struct MockReply {
  std::string response;
  int transport_failures = 0;  // injected failures before this reply succeeds
};

struct MockScript {
  std::vector<MockReply> scheduling;
  std::vector<MockReply> graph_evolution;
};

struct GatewayConfig {
  GatewayMode mode = GatewayMode::MockBrain;
  std::string base_url = "http://localhost:8000";
  std::string model = "gpt-4o";
  std::string api_key_env = "LMM_API_KEY";
  double timeout_s = 30.0;
  int max_retries = 2;
  std::string script_path;  // MockScript mode
};

// One gateway call, recorded verbatim before any parsing happens.
struct LmmExchange {
  std::string system_text;
  std::string user_text;
  uint64_t prompt_hash = 0;
  int exemplar_count = 0;
  BevVariant variant = BevVariant::Scheduling;
  std::string response;
  double latency_s = 0.0;
  int attempts = 1;
};

namespace detail {

inline std::string base64_encode(const std::vector<uint8_t>& data) {
  static const char* table =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.push_back(table[(v >> 6) & 63]);
    out.push_back(table[v & 63]);
  }
  if (i + 1 == data.size()) {
    uint32_t v = data[i] << 16;
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == data.size()) {
    uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.push_back(table[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

// Candidate JSON blocks in a free-text response: fenced blocks first, then
// any balanced top-level {...} (string-aware).
inline std::vector<std::string> json_candidates(const std::string& text) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t open = text.find("```", pos);
    if (open == std::string::npos) break;
    size_t body = text.find('\n', open);
    if (body == std::string::npos) break;
    size_t close = text.find("```", body);
    if (close == std::string::npos) break;
    out.push_back(text.substr(body + 1, close - body - 1));
    pos = close + 3;
  }
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    int depth = 0;
    bool in_string = false;
    for (size_t j = i; j < text.size(); ++j) {
      char c = text[j];
      if (in_string) {
        if (c == '\\')
          ++j;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) {
          out.push_back(text.substr(i, j - i + 1));
          i = j;
          break;
        }
      }
    }
  }
  return out;
}

inline std::optional<int> coerce_id(const nlohmann::json& j) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_number_unsigned()) return static_cast<int>(j.get<unsigned>());
  if (j.is_string()) {
    const std::string& s = j.get_ref<const std::string&>();
    if (s.empty()) return std::nullopt;
    for (char c : s)
      if (!std::isdigit(static_cast<unsigned char>(c)) && c != '-') return std::nullopt;
    try {
      return std::stoi(s);
    } catch (...) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace detail

// {"assign": [[request_id, vehicle_id], ...]} extracted from free text.
inline std::vector<std::pair<int, int>> parse_structured_assignment(
    const std::string& response) {
  for (const std::string& cand : detail::json_candidates(response)) {
    nlohmann::json j = nlohmann::json::parse(cand, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("assign")) continue;
    const auto& arr = j["assign"];
    if (!arr.is_array()) continue;
    std::vector<std::pair<int, int>> pairs;
    bool ok = true;
    for (const auto& item : arr) {
      if (!item.is_array() || item.size() != 2) {
        ok = false;
        break;
      }
      auto r = detail::coerce_id(item[0]);
      auto v = detail::coerce_id(item[1]);
      if (!r || !v) {
        ok = false;
        break;
      }
      pairs.emplace_back(*r, *v);
    }
    if (ok) return pairs;
  }
  throw LmmParseError("no well-formed {\"assign\": [[request, vehicle], ...]} block in response");
}

// {"groups": [[id, ...], ...]} extracted from free text.
inline std::vector<std::vector<int>> parse_structured_groups(const std::string& response) {
  for (const std::string& cand : detail::json_candidates(response)) {
    nlohmann::json j = nlohmann::json::parse(cand, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("groups")) continue;
    const auto& arr = j["groups"];
    if (!arr.is_array()) continue;
    std::vector<std::vector<int>> groups;
    bool ok = true;
    for (const auto& item : arr) {
      if (!item.is_array()) {
        ok = false;
        break;
      }
      std::vector<int> g;
      for (const auto& id : item) {
        auto v = detail::coerce_id(id);
        if (!v) {
          ok = false;
          break;
        }
        g.push_back(*v);
      }
      if (!ok) break;
      groups.push_back(std::move(g));
    }
    if (ok) return groups;
  }
  throw LmmParseError("no well-formed {\"groups\": [[id, ...], ...]} block in response");
}

// Deterministic stand-in for the multimodal model. It reads the entity lists
// back out of the task text (whose format this codebase owns).
//  - scheduling: bottleneck-greedy assignment on estimated completion time
//    (waiting time plus pickup leg plus trip leg), worst-off request first;
//  - graph evolution: proximity/approach grouping;
//  - reflection prompts: canned analysis text.
class HeuristicBrain {
 public:
  std::string respond(const PromptBundle& bundle) const {
    if (bundle.task_message.find("collision") != std::string::npos &&
        bundle.task_message.find("went wrong") != std::string::npos)
      return "Vehicles entered the same intersection with crossing priorities. "
             "Keep conflicting vehicles in one planning group and reduce approach "
             "speed when separation drops below twice the safety distance.";
    if (bundle.variant == BevVariant::Scheduling) return respond_scheduling(bundle);
    return respond_groups(bundle);
  }

 private:
  struct Req {
    int id;
    Vec2 pickup, dropoff;
    double wait;
  };
  struct Veh {
    int id;
    Vec2 pos;
  };

  std::string respond_scheduling(const PromptBundle& bundle) const {
    std::vector<Req> reqs;
    std::vector<Veh> vehs;
    std::istringstream is(bundle.task_message);
    std::string line;
    while (std::getline(is, line)) {
      Req r;
      Veh v;
      double t = 0;
      if (std::sscanf(line.c_str(),
                      "  request %d: pickup (%lf, %lf), dropoff (%lf, %lf), waiting since t=%lf",
                      &r.id, &r.pickup.x, &r.pickup.y, &r.dropoff.x, &r.dropoff.y,
                      &t) == 6) {
        r.wait = t;
        reqs.push_back(r);
      } else if (std::sscanf(line.c_str(), "  vehicle %d: at (%lf, %lf)", &v.id,
                             &v.pos.x, &v.pos.y) == 3) {
        vehs.push_back(v);
      }
    }
    std::vector<std::pair<int, int>> chosen;
    std::vector<bool> veh_used(vehs.size(), false);
    std::vector<bool> req_done(reqs.size(), false);
    const double v_ref = 5.0;
    size_t todo = std::min(reqs.size(), vehs.size());
    for (size_t round = 0; round < todo; ++round) {
      double worst = -1;
      int worst_r = -1, worst_v = -1;
      for (size_t ri = 0; ri < reqs.size(); ++ri) {
        if (req_done[ri]) continue;
        double best = -1;
        int best_v = -1;
        for (size_t vi = 0; vi < vehs.size(); ++vi) {
          if (veh_used[vi]) continue;
          double c = distance(vehs[vi].pos, reqs[ri].pickup);
          if (best_v < 0 || c < best) {
            best = c;
            best_v = static_cast<int>(vi);
          }
        }
        if (best_v < 0) continue;
        double est = -reqs[ri].wait * v_ref + best + distance(reqs[ri].pickup, reqs[ri].dropoff);
        if (worst_r < 0 || est > worst) {
          worst = est;
          worst_r = static_cast<int>(ri);
          worst_v = best_v;
        }
      }
      if (worst_r < 0) break;
      req_done[worst_r] = true;
      veh_used[worst_v] = true;
      chosen.emplace_back(reqs[worst_r].id, vehs[worst_v].id);
    }
    nlohmann::json out;
    out["assign"] = nlohmann::json::array();
    for (auto [r, v] : chosen) out["assign"].push_back({r, v});
    return "Considering trip length and waiting time of every request, assigning the "
           "most loaded pairs first.\n" + out.dump();
  }

  std::string respond_groups(const PromptBundle& bundle) const {
    struct Entry {
      int id;
      Vec2 pos;
      double heading, speed;
    };
    std::vector<Entry> vs;
    std::istringstream is(bundle.task_message);
    std::string line;
    while (std::getline(is, line)) {
      Entry e;
      if (std::sscanf(line.c_str(),
                      "  vehicle %d: at (%lf, %lf), heading %lf rad, speed %lf",
                      &e.id, &e.pos.x, &e.pos.y, &e.heading, &e.speed) == 5)
        vs.push_back(e);
    }
    // Pair vehicles that are close, or moderately close and approaching.
    const double near = 8.0, watch = 16.0;
    std::vector<int> parent(vs.size());
    for (size_t i = 0; i < vs.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int a) {
      return parent[a] == a ? a : parent[a] = find(parent[a]);
    };
    for (size_t i = 0; i < vs.size(); ++i)
      for (size_t j = i + 1; j < vs.size(); ++j) {
        double d = distance(vs[i].pos, vs[j].pos);
        bool risky = d < near;
        if (!risky && d < watch) {
          Vec2 rel = vs[j].pos - vs[i].pos;
          Vec2 vel_i{vs[i].speed * std::cos(vs[i].heading), vs[i].speed * std::sin(vs[i].heading)};
          Vec2 vel_j{vs[j].speed * std::cos(vs[j].heading), vs[j].speed * std::sin(vs[j].heading)};
          risky = dot(rel, vel_i - vel_j) > 1e-9;  // closing
        }
        if (risky) parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
      }
    std::map<int, std::vector<int>> comps;
    for (size_t i = 0; i < vs.size(); ++i) comps[find(static_cast<int>(i))].push_back(vs[i].id);
    nlohmann::json out;
    out["groups"] = nlohmann::json::array();
    for (auto& [root, ids] : comps)
      if (ids.size() > 1) out["groups"].push_back(ids);
    return "Grouping vehicles on converging courses only.\n" + out.dump();
  }
};

// Client for the multimodal model. Mock modes never touch the network; live
// mode speaks a chat-completions-style HTTP JSON protocol with the BEV image
// embedded base64. At most one query is ever in flight.
class LmmGateway {
 public:
  explicit LmmGateway(GatewayConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.mode == GatewayMode::MockScript && !cfg_.script_path.empty())
      load_script_file(cfg_.script_path);
  }

  LmmGateway(GatewayConfig cfg, MockScript script)
      : cfg_(std::move(cfg)), script_(std::move(script)) {
    cfg_.mode = GatewayMode::MockScript;
  }

  const GatewayConfig& config() const { return cfg_; }

  // Exchange sink, e.g. the episode log.
  std::function<void(const LmmExchange&)> on_exchange;

  LmmExchange query(const PromptBundle& bundle) {
    LmmExchange ex;
    ex.system_text = bundle.system_message;
    ex.user_text = bundle.task_message;
    ex.prompt_hash = bundle.hash();
    ex.exemplar_count = static_cast<int>(bundle.exemplars.size());
    ex.variant = bundle.variant;
    auto t0 = std::chrono::steady_clock::now();
    switch (cfg_.mode) {
      case GatewayMode::MockScript: ex = mock_query(bundle, std::move(ex)); break;
      case GatewayMode::MockBrain:
        ex.response = brain_.respond(bundle);
        ex.attempts = 1;
        break;
      case GatewayMode::Live: ex = live_query(bundle, std::move(ex)); break;
    }
    ex.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_exchange) on_exchange(ex);
    return ex;
  }

 private:
  void load_script_file(const std::string& path);
  LmmExchange mock_query(const PromptBundle& bundle, LmmExchange ex);
  LmmExchange live_query(const PromptBundle& bundle, LmmExchange ex);

  GatewayConfig cfg_;
  MockScript script_;
  size_t scheduling_calls_ = 0;
  size_t evolution_calls_ = 0;
  HeuristicBrain brain_;
};

inline LmmExchange LmmGateway::mock_query(const PromptBundle& bundle, LmmExchange ex) {
  auto& list = bundle.variant == BevVariant::Scheduling ? script_.scheduling
                                                        : script_.graph_evolution;
  size_t& calls = bundle.variant == BevVariant::Scheduling ? scheduling_calls_
                                                           : evolution_calls_;
  if (calls >= list.size())
    throw GatewayError("mock script exhausted for variant " +
                       std::string(to_string(bundle.variant)) + " at call " +
                       std::to_string(calls + 1));
  const MockReply& reply = list[calls++];
  if (reply.transport_failures > cfg_.max_retries)
    throw GatewayError("gateway unavailable after " +
                       std::to_string(cfg_.max_retries + 1) + " attempts");
  ex.attempts = reply.transport_failures + 1;
  ex.response = reply.response;
  return ex;
}

inline void LmmGateway::load_script_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw GatewayConfigError("cannot open mock script " + path);
  nlohmann::json j;
  f >> j;
  auto load = [](const nlohmann::json& arr, std::vector<MockReply>& out) {
    if (!arr.is_array()) return;
    for (const auto& item : arr) {
      MockReply r;
      if (item.is_string()) {
        r.response = item.get<std::string>();
      } else if (item.is_object()) {
        r.response = item.value("response", "");
        r.transport_failures = item.value("transport_failures", 0);
      }
      out.push_back(std::move(r));
    }
  };
  if (j.contains("scheduling")) load(j["scheduling"], script_.scheduling);
  if (j.contains("graph_evolution")) load(j["graph_evolution"], script_.graph_evolution);
}

}  // namespace amod

// The live-mode HTTP client sits behind the same header; kept out of line so
// translation units that never configure live mode still pay the include.
#include <httplib.h>

namespace amod {

inline LmmExchange LmmGateway::live_query(const PromptBundle& bundle, LmmExchange ex) {
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (!key || !*key)
    throw GatewayConfigError("live gateway requires API key in $" + cfg_.api_key_env);

  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "system"}, {"content", bundle.system_message}});
  for (const auto& e : bundle.exemplars) {
    messages.push_back({{"role", "user"}, {"content", e.prompt_text}});
    messages.push_back({{"role", "assistant"}, {"content", e.response_text}});
  }
  auto png = encode_png(bundle.image.width, bundle.image.height, bundle.image.rgb);
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", bundle.task_message}});
  content.push_back(
      {{"type", "image_url"},
       {"image_url", {{"url", "data:image/png;base64," + detail::base64_encode(png)}}}});
  messages.push_back({{"role", "user"}, {"content", content}});
  nlohmann::json body = {{"model", cfg_.model}, {"messages", messages}};
  const std::string payload = body.dump();

  std::string host = cfg_.base_url;
  std::string prefix;
  auto scheme = host.find("://");
  if (scheme != std::string::npos) host = host.substr(scheme + 3);
  auto slash = host.find('/');
  if (slash != std::string::npos) {
    prefix = host.substr(slash);
    host = host.substr(0, slash);
  }
  httplib::Client client(host);
  client.set_connection_timeout(std::chrono::milliseconds(
      static_cast<int>(cfg_.timeout_s * 1000)));
  client.set_read_timeout(std::chrono::milliseconds(static_cast<int>(cfg_.timeout_s * 1000)));
  httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

  std::string last_error;
  for (int attempt = 1; attempt <= cfg_.max_retries + 1; ++attempt) {
    ex.attempts = attempt;
    auto res = client.Post((prefix + "/chat/completions").c_str(), headers, payload,
                           "application/json");
    if (!res) {
      last_error = "transport error";
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
      last_error = "malformed completion payload";
      continue;
    }
    ex.response = j["choices"][0]["message"]["content"].get<std::string>();
    return ex;
  }
  throw GatewayError("gateway unavailable after " + std::to_string(cfg_.max_retries + 1) +
                     " attempts: " + last_error);
}

}  // namespace amod
