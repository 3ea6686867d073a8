#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "amod/geometry.hpp"

namespace amod {

enum class DriveSide { LeftHand, RightHand };

struct LaneEdge {
  int from = 0;
  int to = 0;
  double length = 0.0;  // equals the node-to-node Euclidean distance
  int lane_id = 0;
  std::vector<Vec2> centerline;  // laterally offset lane geometry, sampled
};

// Directed lane graph of a synthetic city. Nodes are intersection centers;
// each street segment carries one lane per direction, offset to the driving
// side so opposing traffic does not share geometry.
struct LaneGraph {
  std::vector<Vec2> nodes;
  std::vector<LaneEdge> edges;
  std::vector<std::vector<int>> out_edges;  // node -> edge indices
  std::vector<std::vector<Vec2>> boundaries;
  DriveSide drive_side = DriveSide::RightHand;
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

  int node_count() const { return static_cast<int>(nodes.size()); }

  int nearest_node(const Vec2& p) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < node_count(); ++i) {
      double d = distance(nodes[i], p);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }
};

namespace detail {

inline bool reachable_all(const LaneGraph& g, bool reverse) {
  if (g.nodes.empty()) return true;
  std::vector<char> seen(g.nodes.size(), 0);
  std::deque<int> frontier{0};
  seen[0] = 1;
  size_t count = 1;
  while (!frontier.empty()) {
    int n = frontier.front();
    frontier.pop_front();
    for (const auto& e : g.edges) {
      int a = reverse ? e.to : e.from;
      int b = reverse ? e.from : e.to;
      if (a == n && !seen[b]) {
        seen[b] = 1;
        ++count;
        frontier.push_back(b);
      }
    }
  }
  return count == g.nodes.size();
}

}  // namespace detail

inline bool strongly_connected(const LaneGraph& g) {
  return detail::reachable_all(g, false) && detail::reachable_all(g, true);
}

inline void validate_lane_graph(const LaneGraph& g) {
  for (const auto& e : g.edges) {
    double d = distance(g.nodes[e.from], g.nodes[e.to]);
    if (e.length <= 0.0) throw std::invalid_argument("lane graph: non-positive edge length");
    if (std::abs(e.length - d) > 1e-9)
      throw std::invalid_argument("lane graph: edge length differs from node distance");
  }
  if (!strongly_connected(g))
    throw std::invalid_argument("lane graph: not strongly connected");
}

struct GridCityConfig {
  int blocks_x = 4;
  int blocks_y = 4;
  double block_length = 100.0;  // m
  double lane_offset = 1.75;    // lateral lane offset from the segment axis, m
  double sample_spacing = 2.0;  // centerline sampling step, m
  DriveSide drive_side = DriveSide::RightHand;
  double boundary_margin = 6.0;  // m around the outermost intersections
};

// Manhattan-style grid: (blocks_x+1) x (blocks_y+1) intersections connected
// by a pair of directed lanes per segment.
inline LaneGraph make_grid_city(const GridCityConfig& cfg = {}) {
  if (cfg.blocks_x < 1 || cfg.blocks_y < 1 || cfg.block_length <= 0.0)
    throw std::invalid_argument("grid city: need >= 1x1 blocks and positive block length");
  LaneGraph g;
  g.drive_side = cfg.drive_side;
  const int nx = cfg.blocks_x + 1, ny = cfg.blocks_y + 1;
  auto node_id = [&](int ix, int iy) { return iy * nx + ix; };
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix)
      g.nodes.push_back({ix * cfg.block_length, iy * cfg.block_length});
  g.out_edges.resize(g.nodes.size());

  const double side = cfg.drive_side == DriveSide::RightHand ? 1.0 : -1.0;
  int lane_id = 0;
  auto add_edge = [&](int a, int b) {
    LaneEdge e;
    e.from = a;
    e.to = b;
    e.length = distance(g.nodes[a], g.nodes[b]);
    e.lane_id = lane_id++;
    Vec2 dir = (g.nodes[b] - g.nodes[a]) * (1.0 / e.length);
    Vec2 right{dir.y * side, -dir.x * side};
    Vec2 off = right * cfg.lane_offset;
    int steps = std::max(1, static_cast<int>(std::ceil(e.length / cfg.sample_spacing)));
    for (int s = 0; s <= steps; ++s) {
      double t = static_cast<double>(s) / steps;
      Vec2 p = g.nodes[a] + (g.nodes[b] - g.nodes[a]) * t;
      e.centerline.push_back(p + off);
    }
    g.out_edges[a].push_back(static_cast<int>(g.edges.size()));
    g.edges.push_back(std::move(e));
  };
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      if (ix + 1 < nx) {
        add_edge(node_id(ix, iy), node_id(ix + 1, iy));
        add_edge(node_id(ix + 1, iy), node_id(ix, iy));
      }
      if (iy + 1 < ny) {
        add_edge(node_id(ix, iy), node_id(ix, iy + 1));
        add_edge(node_id(ix, iy + 1), node_id(ix, iy));
      }
    }

  const double m = cfg.boundary_margin;
  const double w = cfg.blocks_x * cfg.block_length, h = cfg.blocks_y * cfg.block_length;
  g.min_x = -m;
  g.min_y = -m;
  g.max_x = w + m;
  g.max_y = h + m;
  g.boundaries.push_back({{-m, -m}, {w + m, -m}, {w + m, h + m}, {-m, h + m}, {-m, -m}});
  // Per-street curb lines, offset beyond the lane pair.
  const double curb = cfg.lane_offset * 2.0 + 1.25;
  for (int iy = 0; iy < ny; ++iy) {
    double y = iy * cfg.block_length;
    g.boundaries.push_back({{0.0, y - curb}, {w, y - curb}});
    g.boundaries.push_back({{0.0, y + curb}, {w, y + curb}});
  }
  for (int ix = 0; ix < nx; ++ix) {
    double x = ix * cfg.block_length;
    g.boundaries.push_back({{x - curb, 0.0}, {x - curb, h}});
    g.boundaries.push_back({{x + curb, 0.0}, {x + curb, h}});
  }
  validate_lane_graph(g);
  return g;
}

}  // namespace amod
