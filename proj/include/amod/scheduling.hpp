#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "amod/gateway.hpp"
#include "amod/memory.hpp"
#include "amod/prompt.hpp"
#include "amod/world.hpp"

namespace amod {

// Request -> vehicle assignment produced by one scheduling decision.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (request id, vehicle id)
  std::string policy;
  double decision_time = 0.0;
  bool fallback = false;
  int attempts = 0;
  uint64_t prompt_hash = 0;
  std::string raw_response;
};

struct AssignmentViolation {
  std::string what;
};

// Checks injectivity and freshness against the snapshot; reports every
// violation rather than stopping at the first.
inline std::vector<AssignmentViolation> validate_assignment(const Assignment& a,
                                                            const WorldState& snapshot) {
  std::vector<AssignmentViolation> out;
  std::set<int> used_vehicles, used_requests;
  for (const auto& [rid, vid] : a.pairs) {
    if (!used_requests.insert(rid).second)
      out.push_back({"request " + std::to_string(rid) + " assigned more than once"});
    if (!used_vehicles.insert(vid).second)
      out.push_back({"vehicle " + std::to_string(vid) + " assigned more than once"});
    const Request* r = snapshot.request(rid);
    const VehicleState* v = snapshot.vehicle(vid);
    if (!r)
      out.push_back({"unknown request id " + std::to_string(rid)});
    else if (r->status != RequestStatus::Pending)
      out.push_back({"request " + std::to_string(rid) + " is not pending"});
    if (!v)
      out.push_back({"unknown vehicle id " + std::to_string(vid)});
    else if (!v->is_free())
      out.push_back({"vehicle " + std::to_string(vid) + " is not free"});
  }
  return out;
}

namespace detail {

inline std::vector<const Request*> pending_requests(const WorldState& w) {
  std::vector<const Request*> out;
  for (const auto& r : w.requests)
    if (r.status == RequestStatus::Pending) out.push_back(&r);
  return out;
}

inline std::vector<const VehicleState*> free_vehicles(const WorldState& w) {
  std::vector<const VehicleState*> out;
  for (const auto& v : w.vehicles)
    if (v.is_free()) out.push_back(&v);
  return out;
}

}  // namespace detail

// First come, first served: requests in spawn order each take the nearest
// currently free vehicle. Ties: earlier spawn -> smaller request id; equal
// distance -> smaller vehicle id.
inline Assignment schedule_fcfs(const WorldState& snapshot) {
  Assignment a;
  a.policy = "fcfs";
  a.decision_time = snapshot.time;
  auto pending = detail::pending_requests(snapshot);
  std::sort(pending.begin(), pending.end(), [](const Request* x, const Request* y) {
    if (x->spawn_time != y->spawn_time) return x->spawn_time < y->spawn_time;
    return x->id < y->id;
  });
  auto free = detail::free_vehicles(snapshot);
  std::vector<bool> used(free.size(), false);
  for (const Request* r : pending) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < free.size(); ++i) {
      if (used[i]) continue;
      double d = distance(free[i]->position(), r->pickup);
      if (d < best_d || (d == best_d && best >= 0 && free[i]->id < free[best]->id)) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) break;
    used[best] = true;
    a.pairs.emplace_back(r->id, free[best]->id);
  }
  return a;
}

// Distance first: commit the globally closest (pending request, free vehicle)
// pair until one side runs out. Distance ties resolve by (request id, vehicle
// id).
inline Assignment schedule_df(const WorldState& snapshot) {
  Assignment a;
  a.policy = "df";
  a.decision_time = snapshot.time;
  auto pending = detail::pending_requests(snapshot);
  auto free = detail::free_vehicles(snapshot);
  std::vector<bool> r_used(pending.size(), false), v_used(free.size(), false);
  size_t rounds = std::min(pending.size(), free.size());
  for (size_t n = 0; n < rounds; ++n) {
    double best_d = std::numeric_limits<double>::infinity();
    int best_r = -1, best_v = -1;
    for (size_t ri = 0; ri < pending.size(); ++ri) {
      if (r_used[ri]) continue;
      for (size_t vi = 0; vi < free.size(); ++vi) {
        if (v_used[vi]) continue;
        double d = distance(free[vi]->position(), pending[ri]->pickup);
        bool better = d < best_d;
        if (d == best_d && best_r >= 0) {
          auto lhs = std::make_pair(pending[ri]->id, free[vi]->id);
          auto rhs = std::make_pair(pending[best_r]->id, free[best_v]->id);
          better = lhs < rhs;
        }
        if (better) {
          best_d = d;
          best_r = static_cast<int>(ri);
          best_v = static_cast<int>(vi);
        }
      }
    }
    if (best_r < 0) break;
    r_used[best_r] = true;
    v_used[best_v] = true;
    a.pairs.emplace_back(pending[best_r]->id, free[best_v]->id);
  }
  return a;
}

struct LmmSchedulerConfig {
  size_t top_k = 3;
  int retry_limit = 2;  // gateway/parse/validation attempts before falling back
};

struct ScheduleResult {
  Assignment assignment;
  std::optional<DecisionContext> context;
};

// Model-backed scheduling: BEV + retrieved exemplars + structured query, with
// strict validation. Any failure after the configured attempts falls back to
// the distance-first heuristic and flags the assignment; the simulation never
// aborts on gateway trouble.
inline ScheduleResult schedule_lmm(const WorldState& snapshot, LmmGateway& gateway,
                                   const MemoryStore& memory,
                                   const LmmSchedulerConfig& cfg = {}) {
  ScheduleResult result;
  BevImage image = render_bev(snapshot, BevVariant::Scheduling);
  std::vector<MemoryEntry> exemplars = memory.retrieve_top_k(image, cfg.top_k);
  PromptBundle bundle = compose_prompt(snapshot, image, BevVariant::Scheduling,
                                       std::move(exemplars));
  int attempts = 0;
  for (; attempts < cfg.retry_limit; ++attempts) {
    LmmExchange ex;
    try {
      ex = gateway.query(bundle);
    } catch (const GatewayError&) {
      ++attempts;
      break;
    }
    Assignment a;
    a.policy = "lmm";
    a.decision_time = snapshot.time;
    a.prompt_hash = bundle.hash();
    a.raw_response = ex.response;
    try {
      a.pairs = parse_structured_assignment(ex.response);
    } catch (const LmmParseError&) {
      continue;
    }
    if (!validate_assignment(a, snapshot).empty()) continue;
    a.attempts = attempts + 1;
    result.assignment = std::move(a);
    result.context = DecisionContext{std::make_shared<BevImage>(std::move(image)),
                                     bundle.task_message, ex.response};
    return result;
  }
  Assignment fb = schedule_df(snapshot);
  fb.policy = "lmm";
  fb.fallback = true;
  fb.attempts = attempts;
  fb.prompt_hash = bundle.hash();
  result.assignment = std::move(fb);
  return result;
}

}  // namespace amod
