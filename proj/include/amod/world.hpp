#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "amod/geometry.hpp"
#include "amod/lane_graph.hpp"
#include "amod/rng.hpp"

namespace amod {

enum class Occupancy { Free, EnRouteToPickup, Occupied };
enum class RequestStatus { Pending, Assigned, InTransit, Completed };

struct VehicleState {
  int id = 0;
  double x = 0, y = 0;
  double heading = 0;  // rad, normalized to (-pi, pi]
  double speed = 0;    // m/s, in [0, v_max]
  Occupancy occupancy = Occupancy::Free;
  int request_id = -1;  // valid unless Free
  std::vector<int> route_nodes;

  Vec2 position() const { return {x, y}; }
  bool is_free() const { return occupancy == Occupancy::Free; }
};

struct Request {
  int id = 0;
  Vec2 pickup, dropoff;
  int pickup_node = -1, dropoff_node = -1;
  double spawn_time = 0;
  std::optional<double> pickup_time, dropoff_time;
  RequestStatus status = RequestStatus::Pending;
};

// Undirected proximity graph over the fleet; an edge exists exactly when the
// pair is closer than the communication range.
struct CommunicationGraph {
  std::vector<int> vehicle_ids;
  std::vector<std::tuple<int, int, double>> edges;  // (i, j, distance), i < j
  std::map<int, std::vector<int>> neighbors;

  int degree(int id) const {
    auto it = neighbors.find(id);
    return it == neighbors.end() ? 0 : static_cast<int>(it->second.size());
  }
};

inline CommunicationGraph build_communication_graph(
    const std::vector<VehicleState>& vehicles, double r_tele) {
  if (r_tele <= 0.0) throw std::invalid_argument("communication graph: r_tele must be > 0");
  CommunicationGraph g;
  std::set<int> seen;
  for (const auto& v : vehicles) {
    if (!seen.insert(v.id).second)
      throw std::invalid_argument("communication graph: duplicate vehicle id " +
                                  std::to_string(v.id));
    g.vehicle_ids.push_back(v.id);
    g.neighbors[v.id];
  }
  for (size_t a = 0; a < vehicles.size(); ++a)
    for (size_t b = a + 1; b < vehicles.size(); ++b) {
      double d = distance(vehicles[a].position(), vehicles[b].position());
      if (d < r_tele) {
        int i = vehicles[a].id, j = vehicles[b].id;
        g.edges.emplace_back(std::min(i, j), std::max(i, j), d);
        g.neighbors[i].push_back(j);
        g.neighbors[j].push_back(i);
      }
    }
  return g;
}

struct CompletionMetrics {
  double t_atc = 0;  // mean completion time
  double t_stc = 0;  // population standard deviation
  double t_mtc = 0;  // maximum
};

inline CompletionMetrics compute_metrics(const std::vector<Request>& completed) {
  if (completed.empty())
    throw std::invalid_argument("metrics: no completed requests");
  double sum = 0, max = 0;
  std::vector<double> times;
  times.reserve(completed.size());
  for (const auto& r : completed) {
    if (!r.dropoff_time)
      throw std::invalid_argument("metrics: request " + std::to_string(r.id) +
                                  " has no dropoff time");
    double t = *r.dropoff_time - r.spawn_time;
    times.push_back(t);
    sum += t;
    max = std::max(max, t);
  }
  double mean = sum / times.size();
  double var = 0;
  for (double t : times) var += (t - mean) * (t - mean);
  var /= times.size();
  return {mean, std::sqrt(var), max};
}

struct WorldState {
  std::shared_ptr<const LaneGraph> map;
  std::vector<VehicleState> vehicles;
  std::vector<Request> requests;
  double time = 0;
  long step = 0;

  // request spawning state
  Rng spawn_rng{0};
  double spawn_accumulator = 0;
  int next_request_id = 0;
  int spawn_budget = -1;  // -1: unbounded

  const VehicleState* vehicle(int id) const {
    for (const auto& v : vehicles)
      if (v.id == id) return &v;
    return nullptr;
  }
  VehicleState* vehicle(int id) {
    for (auto& v : vehicles)
      if (v.id == id) return &v;
    return nullptr;
  }
  const Request* request(int id) const {
    for (const auto& r : requests)
      if (r.id == id) return &r;
    return nullptr;
  }
  Request* request(int id) {
    for (auto& r : requests)
      if (r.id == id) return &r;
    return nullptr;
  }

  std::vector<Request> completed_requests() const {
    std::vector<Request> out;
    for (const auto& r : requests)
      if (r.status == RequestStatus::Completed) out.push_back(r);
    return out;
  }
  int pending_count() const {
    int n = 0;
    for (const auto& r : requests)
      if (r.status == RequestStatus::Pending) ++n;
    return n;
  }
};

// Advances the request-arrival process by one step. Arrival cadence follows a
// fractional accumulator (rate = requests per step); pickup and dropoff are
// distinct uniformly sampled lane-graph nodes. Deterministic given the rng
// state carried by the world.
inline std::vector<int> spawn_requests(WorldState& w, double rate) {
  if (rate < 0.0) throw std::invalid_argument("spawn: rate must be >= 0");
  std::vector<int> spawned;
  if (rate == 0.0 || !w.map || w.map->node_count() < 2) return spawned;
  w.spawn_accumulator += rate;
  while (w.spawn_accumulator >= 1.0) {
    w.spawn_accumulator -= 1.0;
    if (w.spawn_budget == 0) continue;
    const int n = w.map->node_count();
    int pickup = static_cast<int>(w.spawn_rng.next_below(n));
    int drop = static_cast<int>(w.spawn_rng.next_below(n - 1));
    if (drop >= pickup) ++drop;
    Request r;
    r.id = w.next_request_id++;
    r.pickup_node = pickup;
    r.dropoff_node = drop;
    r.pickup = w.map->nodes[pickup];
    r.dropoff = w.map->nodes[drop];
    r.spawn_time = w.time;
    r.status = RequestStatus::Pending;
    spawned.push_back(r.id);
    w.requests.push_back(std::move(r));
    if (w.spawn_budget > 0) --w.spawn_budget;
  }
  return spawned;
}

}  // namespace amod
