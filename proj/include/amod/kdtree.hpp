#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "amod/geometry.hpp"

namespace amod {

// Static 2-d KD-tree over a fixed point set. Ties on distance resolve to the
// smallest point index regardless of traversal order.
class KdTree2d {
 public:
  KdTree2d() = default;

  explicit KdTree2d(std::vector<Vec2> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("KdTree2d: empty point set");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), size_t{0});
    nodes_.reserve(points_.size());
    root_ = build(0, points_.size(), 0);
  }

  struct Result {
    size_t index = 0;
    Vec2 point;
    double dist = 0.0;
  };

  Result nearest(const Vec2& query) const {
    Result best;
    best.dist = std::numeric_limits<double>::infinity();
    best.index = std::numeric_limits<size_t>::max();
    search(root_, query, best);
    best.point = points_[best.index];
    return best;
  }

  size_t size() const { return points_.size(); }

 private:
  struct Node {
    size_t point = 0;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(size_t lo, size_t hi, int axis) {
    if (lo >= hi) return -1;
    size_t mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](size_t a, size_t b) {
                       double va = axis == 0 ? points_[a].x : points_[a].y;
                       double vb = axis == 0 ? points_[b].x : points_[b].y;
                       if (va != vb) return va < vb;
                       return a < b;
                     });
    Node n;
    n.point = order_[mid];
    n.axis = axis;
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    int left = build(lo, mid, 1 - axis);
    int right = build(mid + 1, hi, 1 - axis);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(int node, const Vec2& q, Result& best) const {
    if (node < 0) return;
    const Node& n = nodes_[node];
    const Vec2& p = points_[n.point];
    double d = distance(p, q);
    if (d < best.dist || (d == best.dist && n.point < best.index)) {
      best.dist = d;
      best.index = n.point;
    }
    double delta = n.axis == 0 ? q.x - p.x : q.y - p.y;
    int near = delta < 0 ? n.left : n.right;
    int far = delta < 0 ? n.right : n.left;
    search(near, q, best);
    if (std::abs(delta) <= best.dist) search(far, q, best);
  }

  std::vector<Vec2> points_;
  std::vector<size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace amod
