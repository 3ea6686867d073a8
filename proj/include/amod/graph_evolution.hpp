#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "amod/gateway.hpp"
#include "amod/memory.hpp"
#include "amod/prompt.hpp"
#include "amod/world.hpp"

namespace amod {

enum class PartitionSource { Lmm, Heuristic };

// Disjoint cover of the fleet by planning groups. Groups and their members
// are kept sorted so partitions compare deterministically.
struct Partition {
  std::vector<std::vector<int>> groups;
  PartitionSource source = PartitionSource::Heuristic;
  bool fallback = false;

  void normalize() {
    for (auto& g : groups) std::sort(g.begin(), g.end());
    std::sort(groups.begin(), groups.end());
  }
};

struct AdjacencyMatrix {
  std::vector<int> ids;  // sorted vehicle ids indexing rows/columns
  std::vector<uint8_t> cells;

  bool at(size_t i, size_t j) const { return cells[i * ids.size() + j] != 0; }
  void set(size_t i, size_t j, bool v) { cells[i * ids.size() + j] = v ? 1 : 0; }
  size_t size() const { return ids.size(); }
};

class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  size_t find(size_t a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  void unite(size_t a, size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<size_t> parent_;
};

// Clique adjacency of a partition: vehicles share an edge exactly when they
// share a group.
inline AdjacencyMatrix partition_to_adjacency(const Partition& p) {
  AdjacencyMatrix m;
  for (const auto& g : p.groups) m.ids.insert(m.ids.end(), g.begin(), g.end());
  std::sort(m.ids.begin(), m.ids.end());
  m.cells.assign(m.ids.size() * m.ids.size(), 0);
  auto index_of = [&](int id) {
    return std::lower_bound(m.ids.begin(), m.ids.end(), id) - m.ids.begin();
  };
  for (const auto& g : p.groups)
    for (size_t a = 0; a < g.size(); ++a)
      for (size_t b = a + 1; b < g.size(); ++b) {
        size_t i = index_of(g[a]), j = index_of(g[b]);
        m.set(i, j, true);
        m.set(j, i, true);
      }
  return m;
}

inline std::vector<std::vector<int>> components_from_adjacency(const AdjacencyMatrix& m) {
  UnionFind uf(m.size());
  for (size_t i = 0; i < m.size(); ++i)
    for (size_t j = i + 1; j < m.size(); ++j)
      if (m.at(i, j)) uf.unite(i, j);
  std::map<size_t, std::vector<int>> comps;
  for (size_t i = 0; i < m.size(); ++i) comps[uf.find(i)].push_back(m.ids[i]);
  std::vector<std::vector<int>> out;
  for (auto& [root, ids] : comps) out.push_back(std::move(ids));
  std::sort(out.begin(), out.end());
  return out;
}

inline void check_partition(const Partition& p, const std::vector<int>& all_ids) {
  std::set<int> seen;
  for (const auto& g : p.groups) {
    if (g.empty()) throw std::invalid_argument("partition: empty group");
    for (int id : g)
      if (!seen.insert(id).second)
        throw std::invalid_argument("partition: vehicle " + std::to_string(id) +
                                    " appears twice");
  }
  if (seen != std::set<int>(all_ids.begin(), all_ids.end()))
    throw std::invalid_argument("partition: groups do not cover the fleet");
}

// Heuristic evolution: edge when the Manhattan distance is under the
// threshold, groups are connected components, and any component larger than
// max_size sheds its longest edges until every piece complies.
inline Partition evolve_manhattan(const std::vector<VehicleState>& vehicles,
                                  double threshold, int max_size) {
  if (threshold <= 0.0) throw std::invalid_argument("evolve: threshold must be > 0");
  if (max_size < 1) throw std::invalid_argument("evolve: max_size must be >= 1");
  struct Edge {
    size_t a, b;
    double len;
  };
  std::vector<Edge> edges;
  for (size_t i = 0; i < vehicles.size(); ++i)
    for (size_t j = i + 1; j < vehicles.size(); ++j) {
      double d = manhattan(vehicles[i].position(), vehicles[j].position());
      if (d < threshold) edges.push_back({i, j, d});
    }

  // Splitting recursion over index sets; the longest edge (ties by the larger
  // id pair) is removed first.
  std::vector<std::vector<size_t>> final_groups;
  auto split = [&](auto&& self, std::vector<size_t> members, std::vector<Edge> es) -> void {
    if (static_cast<int>(members.size()) <= max_size) {
      final_groups.push_back(std::move(members));
      return;
    }
    auto longest = std::max_element(es.begin(), es.end(), [&](const Edge& x, const Edge& y) {
      if (x.len != y.len) return x.len < y.len;
      return std::make_pair(vehicles[x.a].id, vehicles[x.b].id) <
             std::make_pair(vehicles[y.a].id, vehicles[y.b].id);
    });
    es.erase(longest);
    // recompute components of this sub-problem
    std::map<size_t, size_t> local;  // global index -> local
    for (size_t k = 0; k < members.size(); ++k) local[members[k]] = k;
    UnionFind uf(members.size());
    for (const Edge& e : es) uf.unite(local[e.a], local[e.b]);
    std::map<size_t, std::vector<size_t>> comps;
    for (size_t k = 0; k < members.size(); ++k) comps[uf.find(k)].push_back(members[k]);
    for (auto& [root, comp] : comps) {
      std::set<size_t> in_comp(comp.begin(), comp.end());
      std::vector<Edge> comp_edges;
      for (const Edge& e : es)
        if (in_comp.count(e.a)) comp_edges.push_back(e);
      self(self, std::move(comp), std::move(comp_edges));
    }
  };

  UnionFind uf(vehicles.size());
  for (const Edge& e : edges) uf.unite(e.a, e.b);
  std::map<size_t, std::vector<size_t>> comps;
  for (size_t i = 0; i < vehicles.size(); ++i) comps[uf.find(i)].push_back(i);
  for (auto& [root, comp] : comps) {
    std::set<size_t> in_comp(comp.begin(), comp.end());
    std::vector<Edge> comp_edges;
    for (const Edge& e : edges)
      if (in_comp.count(e.a)) comp_edges.push_back(e);
    split(split, std::move(comp), std::move(comp_edges));
  }

  Partition p;
  p.source = PartitionSource::Heuristic;
  for (const auto& g : final_groups) {
    std::vector<int> ids;
    for (size_t i : g) ids.push_back(vehicles[i].id);
    p.groups.push_back(std::move(ids));
  }
  p.normalize();
  return p;
}

// Everything in one group; the ablation baseline.
inline Partition evolve_monolithic(const std::vector<VehicleState>& vehicles) {
  Partition p;
  p.source = PartitionSource::Heuristic;
  std::vector<int> all;
  for (const auto& v : vehicles) all.push_back(v.id);
  if (!all.empty()) p.groups.push_back(std::move(all));
  p.normalize();
  return p;
}

struct LmmEvolverConfig {
  size_t top_k = 3;
  int retry_limit = 2;
  double fallback_threshold = 20.0;  // m, Manhattan
  int fallback_max_size = 4;
};

struct EvolveResult {
  Partition partition;
  std::optional<DecisionContext> context;
};

namespace detail {

// Unknown ids are dropped, overlapping groups merged, uncovered vehicles
// appended as singletons; the result always satisfies the partition
// invariants.
inline Partition sanitize_groups(std::vector<std::vector<int>> raw,
                                 const std::vector<int>& all_ids) {
  std::vector<int> sorted_ids(all_ids);
  std::sort(sorted_ids.begin(), sorted_ids.end());
  std::map<int, size_t> index;
  for (size_t i = 0; i < sorted_ids.size(); ++i) index[sorted_ids[i]] = i;
  UnionFind uf(sorted_ids.size());
  for (const auto& g : raw) {
    int anchor = -1;
    for (int id : g) {
      auto it = index.find(id);
      if (it == index.end()) continue;  // drop unknown ids
      if (anchor < 0)
        anchor = static_cast<int>(it->second);
      else
        uf.unite(anchor, it->second);
    }
  }
  std::map<size_t, std::vector<int>> comps;
  for (size_t i = 0; i < sorted_ids.size(); ++i) comps[uf.find(i)].push_back(sorted_ids[i]);
  Partition p;
  p.source = PartitionSource::Lmm;
  for (auto& [root, ids] : comps) p.groups.push_back(std::move(ids));
  p.normalize();
  return p;
}

}  // namespace detail

// Model-guided evolution over the request-free BEV variant. Responses are
// sanitized into a valid partition; parse or gateway failure after the
// configured attempts falls back to the Manhattan heuristic.
inline EvolveResult evolve_lmm(const WorldState& snapshot, LmmGateway& gateway,
                               const MemoryStore& memory, const LmmEvolverConfig& cfg = {}) {
  EvolveResult result;
  std::vector<int> all_ids;
  for (const auto& v : snapshot.vehicles) all_ids.push_back(v.id);
  BevImage image = render_bev(snapshot, BevVariant::GraphEvolution);
  std::vector<MemoryEntry> exemplars = memory.retrieve_top_k(image, cfg.top_k);
  PromptBundle bundle = compose_prompt(snapshot, image, BevVariant::GraphEvolution,
                                       std::move(exemplars));
  for (int attempt = 0; attempt < cfg.retry_limit; ++attempt) {
    LmmExchange ex;
    try {
      ex = gateway.query(bundle);
    } catch (const GatewayError&) {
      break;
    }
    std::vector<std::vector<int>> raw;
    try {
      raw = parse_structured_groups(ex.response);
    } catch (const LmmParseError&) {
      continue;
    }
    result.partition = detail::sanitize_groups(std::move(raw), all_ids);
    result.context = DecisionContext{std::make_shared<BevImage>(std::move(image)),
                                     bundle.task_message, ex.response};
    return result;
  }
  result.partition = evolve_manhattan(snapshot.vehicles, cfg.fallback_threshold,
                                      cfg.fallback_max_size);
  result.partition.source = PartitionSource::Lmm;
  result.partition.fallback = true;
  return result;
}

}  // namespace amod
