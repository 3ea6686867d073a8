#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "amod/geometry.hpp"
#include "amod/kdtree.hpp"
#include "amod/lane_graph.hpp"
#include "amod/savgol.hpp"
#include "amod/world.hpp"

namespace amod {

struct NoRouteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Polyline route with cumulative arclength. arclength[i] is the distance
// along the polyline from points[0] to points[i], strictly increasing.
struct Route {
  std::vector<int> nodes;  // lane-graph node sequence (pre-smoothing identity)
  std::vector<Vec2> points;
  std::vector<double> arclength;
  double cost = 0.0;  // graph cost of the node path

  bool empty() const { return points.empty(); }
  double length() const { return arclength.empty() ? 0.0 : arclength.back(); }
};

inline void recompute_arclength(Route& r) {
  r.arclength.assign(r.points.size(), 0.0);
  for (size_t i = 1; i < r.points.size(); ++i)
    r.arclength[i] = r.arclength[i - 1] + distance(r.points[i - 1], r.points[i]);
}

// A* over the directed lane graph with the (admissible, consistent) Euclidean
// heuristic; edge cost is edge length.
inline Route astar_route(const LaneGraph& g, int start, int goal) {
  const int n = g.node_count();
  if (start < 0 || start >= n || goal < 0 || goal >= n)
    throw std::invalid_argument("astar: node id out of range");
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> via_edge(n, -1);
  using Item = std::pair<double, int>;  // (f, node)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[start] = 0.0;
  open.emplace(distance(g.nodes[start], g.nodes[goal]), start);
  while (!open.empty()) {
    auto [f, u] = open.top();
    open.pop();
    if (u == goal) break;
    double g_u = dist[u];
    if (f - distance(g.nodes[u], g.nodes[goal]) > g_u + 1e-12) continue;  // stale
    for (int ei : g.out_edges[u]) {
      const LaneEdge& e = g.edges[ei];
      double nd = g_u + e.length;
      if (nd < dist[e.to]) {
        dist[e.to] = nd;
        via_edge[e.to] = ei;
        open.emplace(nd + distance(g.nodes[e.to], g.nodes[goal]), e.to);
      }
    }
  }
  if (!std::isfinite(dist[goal]))
    throw NoRouteError("astar: no route from node " + std::to_string(start) +
                       " to node " + std::to_string(goal));

  Route r;
  r.cost = dist[goal];
  std::vector<int> edge_seq;
  for (int v = goal; v != start;) {
    int ei = via_edge[v];
    edge_seq.push_back(ei);
    v = g.edges[ei].from;
  }
  std::reverse(edge_seq.begin(), edge_seq.end());
  r.nodes.push_back(start);
  for (int ei : edge_seq) r.nodes.push_back(g.edges[ei].to);
  if (edge_seq.empty()) {
    r.points.push_back(g.nodes[start]);
  } else {
    for (int ei : edge_seq)
      for (const Vec2& p : g.edges[ei].centerline)
        if (r.points.empty() || !(r.points.back() == p)) r.points.push_back(p);
  }
  recompute_arclength(r);
  return r;
}

// Savitzky-Golay smoothing of the route geometry, channel-wise over x and y.
// Routes shorter than the window are returned unchanged (applied = false).
inline Route smooth_savgol(const Route& route, int window, int poly_order,
                           bool* applied = nullptr) {
  SavgolFilter filter(window, poly_order);  // validates the parameters
  if (static_cast<int>(route.points.size()) < window) {
    if (applied) *applied = false;
    return route;
  }
  std::vector<double> xs(route.points.size()), ys(route.points.size());
  for (size_t i = 0; i < route.points.size(); ++i) {
    xs[i] = route.points[i].x;
    ys[i] = route.points[i].y;
  }
  xs = filter.apply(xs);
  ys = filter.apply(ys);
  Route out = route;
  for (size_t i = 0; i < out.points.size(); ++i) out.points[i] = {xs[i], ys[i]};
  recompute_arclength(out);
  if (applied) *applied = true;
  return out;
}

// Nearest-waypoint lookup. The KD-tree is built once per route and reused for
// every query; ties resolve to the smallest waypoint index.
class RouteIndex {
 public:
  explicit RouteIndex(const Route& route) : route_(&route), tree_(route.points) {}

  struct Hit {
    size_t index;
    Vec2 point;
    double dist;
  };

  Hit nearest(const Vec2& query) const {
    auto r = tree_.nearest(query);
    return {r.index, r.point, r.dist};
  }

  const Route& route() const { return *route_; }

 private:
  const Route* route_;
  KdTree2d tree_;
};

inline RouteIndex::Hit nearest_waypoint(const Route& route, const Vec2& query) {
  if (route.empty()) throw std::invalid_argument("nearest_waypoint: empty route");
  return RouteIndex(route).nearest(query);
}

// Reference states (x, y, heading, speed) over the planning horizon.
struct ReferenceTrajectory {
  std::vector<Eigen::Vector4d> states;  // horizon + 1 entries
};

namespace detail {

inline Vec2 point_at_arclength(const Route& r, double s, size_t seg_hint,
                               size_t* seg_out) {
  size_t i = seg_hint;
  while (i + 1 < r.arclength.size() && r.arclength[i + 1] < s) ++i;
  if (seg_out) *seg_out = i;
  if (i + 1 >= r.points.size()) return r.points.back();
  double seg_len = r.arclength[i + 1] - r.arclength[i];
  double t = seg_len > 0 ? (s - r.arclength[i]) / seg_len : 0.0;
  return r.points[i] + (r.points[i + 1] - r.points[i]) * t;
}

inline double tangent_heading(const Route& r, size_t seg, double fallback) {
  for (size_t i = std::min(seg, r.points.size() - 1); i + 1 < r.points.size(); ++i) {
    Vec2 d = r.points[i + 1] - r.points[i];
    if (norm(d) > 1e-12) return std::atan2(d.y, d.x);
  }
  for (size_t i = std::min(seg, r.points.size() - 1); i > 0; --i) {
    Vec2 d = r.points[i] - r.points[i - 1];
    if (norm(d) > 1e-12) return std::atan2(d.y, d.x);
  }
  return fallback;
}

}  // namespace detail

// Samples horizon+1 reference states starting at the waypoint nearest to the
// vehicle, advancing v_ref * dt of arclength per step and clamping at the
// route end. Reference speed is the realized arclength advance per step.
inline ReferenceTrajectory build_reference(const Route& route,
                                           const VehicleState& vehicle,
                                           int horizon, double v_ref, double dt) {
  if (horizon < 1) throw std::invalid_argument("build_reference: horizon must be >= 1");
  ReferenceTrajectory ref;
  ref.states.reserve(horizon + 1);
  if (route.empty()) {
    for (int i = 0; i <= horizon; ++i)
      ref.states.push_back({vehicle.x, vehicle.y, vehicle.heading, 0.0});
    return ref;
  }
  auto hit = nearest_waypoint(route, vehicle.position());
  double s0 = route.arclength[hit.index];
  double s_end = route.length();
  std::vector<Vec2> pts(horizon + 1);
  std::vector<double> s(horizon + 1);
  size_t seg = hit.index == route.points.size() - 1 && hit.index > 0 ? hit.index - 1
                                                                     : hit.index;
  for (int i = 0; i <= horizon; ++i) {
    s[i] = std::min(s0 + v_ref * dt * i, s_end);
    size_t seg_here = seg;
    pts[i] = detail::point_at_arclength(route, s[i], seg, &seg_here);
    seg = seg_here;
  }
  // headings are the forward-difference tangents of the sampled points; at
  // the clamped tail the last moving direction (or the vehicle heading) holds
  double last_heading = detail::tangent_heading(route, hit.index, vehicle.heading);
  std::vector<double> heading(horizon + 1, last_heading);
  for (int i = 0; i <= horizon; ++i) {
    if (i < horizon) {
      Vec2 d = pts[i + 1] - pts[i];
      if (norm(d) > 1e-12) last_heading = std::atan2(d.y, d.x);
    }
    heading[i] = last_heading;
  }
  for (int i = 0; i <= horizon; ++i) {
    double speed = i < horizon ? (s[i + 1] - s[i]) / dt : (i > 0 ? (s[i] - s[i - 1]) / dt : 0.0);
    ref.states.push_back({pts[i].x, pts[i].y, heading[i], speed});
  }
  return ref;
}

}  // namespace amod
