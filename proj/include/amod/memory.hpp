#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "amod/bev.hpp"

namespace amod {

inline double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine: dimension mismatch");
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine: similarity undefined for zero vector");
  return a.dot(b) / (na * nb);
}

// Pluggable image embedding. Implementations must be deterministic per image.
class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual int dimension() const = 0;
  virtual Eigen::VectorXd embed(const BevImage& image) const = 0;
};

// Built-in embedder: grayscale block-mean pooling over a fixed grid, then L2
// normalization. Cell (gy, gx) averages the pixel block it maps to; images
// smaller than the grid repeat pixels. An all-zero pooled vector falls back
// to the first basis vector so the unit-norm contract always holds.
class BlockMeanEmbedder : public ImageEmbedder {
 public:
  explicit BlockMeanEmbedder(int grid = 16) : grid_(grid) {
    if (grid <= 0) throw std::invalid_argument("embedder: grid must be > 0");
  }

  int dimension() const override { return grid_ * grid_; }

  Eigen::VectorXd embed(const BevImage& image) const override {
    if (image.width <= 0 || image.height <= 0 ||
        image.rgb.size() != static_cast<size_t>(image.width) * image.height * 3)
      throw std::invalid_argument(
          "embedder: expected a " + std::to_string(image.width) + "x" +
          std::to_string(image.height) + " rgb image with matching buffer");
    Eigen::VectorXd v(dimension());
    for (int gy = 0; gy < grid_; ++gy) {
      int y0 = gy * image.height / grid_;
      int y1 = std::max(y0 + 1, (gy + 1) * image.height / grid_);
      for (int gx = 0; gx < grid_; ++gx) {
        int x0 = gx * image.width / grid_;
        int x1 = std::max(x0 + 1, (gx + 1) * image.width / grid_);
        double acc = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            size_t i = (static_cast<size_t>(y) * image.width + x) * 3;
            acc += (image.rgb[i] + image.rgb[i + 1] + image.rgb[i + 2]) / 3.0;
          }
        v[gy * grid_ + gx] = acc / ((y1 - y0) * (x1 - x0)) / 255.0;
      }
    }
    double n = v.norm();
    if (n < 1e-12) {
      v.setZero();
      v[0] = 1.0;
      return v;
    }
    return v / n;
  }

 private:
  int grid_;
};

enum class MemoryKind { Plain, Reflection };

struct MemoryEntry {
  int64_t insert_index = -1;  // assigned by the store, strictly increasing
  MemoryKind kind = MemoryKind::Plain;
  BevVariant variant = BevVariant::Scheduling;
  std::shared_ptr<const BevImage> image;
  std::string prompt_text;
  std::string response_text;
  Eigen::VectorXd embedding;  // unit norm
};

// Bounded FIFO stack of multimodal exemplars with cosine Top-K retrieval.
class MemoryStore {
 public:
  MemoryStore(size_t capacity, std::shared_ptr<const ImageEmbedder> embedder)
      : capacity_(capacity), embedder_(std::move(embedder)) {
    if (!embedder_) throw std::invalid_argument("memory: embedder required");
  }

  const ImageEmbedder& embedder() const { return *embedder_; }
  size_t capacity() const { return capacity_; }
  size_t size() const { return entries_.size(); }
  const std::deque<MemoryEntry>& entries() const { return entries_; }

  // Appends the entry (embedding it if needed); evicts the oldest entry when
  // the stack is full.
  const MemoryEntry& store(MemoryEntry entry) {
    if (entry.embedding.size() == 0) {
      if (!entry.image) throw std::invalid_argument("memory: entry needs image or embedding");
      entry.embedding = embedder_->embed(*entry.image);
    }
    entry.insert_index = next_index_++;
    entries_.push_back(std::move(entry));
    while (entries_.size() > capacity_) entries_.pop_front();
    return entries_.back();
  }

  // K entries most similar to the query image, similarity-descending; ties
  // prefer the more recent entry. K >= size returns everything.
  std::vector<MemoryEntry> retrieve_top_k(const BevImage& query, size_t k) const {
    if (k == 0 || entries_.empty()) return {};
    Eigen::VectorXd q = embedder_->embed(query);
    std::vector<std::pair<double, int64_t>> scored;  // (similarity, insert_index)
    scored.reserve(entries_.size());
    std::vector<const MemoryEntry*> by_index;
    for (const auto& e : entries_) {
      scored.emplace_back(cosine_similarity(q, e.embedding), e.insert_index);
      by_index.push_back(&e);
    }
    std::vector<size_t> order(scored.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (scored[a].first != scored[b].first) return scored[a].first > scored[b].first;
      return scored[a].second > scored[b].second;
    });
    std::vector<MemoryEntry> out;
    for (size_t i = 0; i < order.size() && out.size() < k; ++i)
      out.push_back(*by_index[order[i]]);
    return out;
  }

 private:
  size_t capacity_;
  std::shared_ptr<const ImageEmbedder> embedder_;
  std::deque<MemoryEntry> entries_;
  int64_t next_index_ = 0;
};

inline const MemoryEntry& store_memory(MemoryStore& store, MemoryEntry entry) {
  return store.store(std::move(entry));
}

inline std::vector<MemoryEntry> retrieve_top_k(const MemoryStore& store,
                                               const BevImage& query, size_t k) {
  return store.retrieve_top_k(query, k);
}

}  // namespace amod
