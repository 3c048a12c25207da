#pragma once

// Minimum cycle basis (unit edge weights) via de Pina's algorithm, and
// rotation composition around cycles.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "loopvet/graph.hpp"
#include "loopvet/so3.hpp"

namespace loopvet {

enum class Direction { Forward, Reverse };

struct CycleStep {
  EdgeId edge = 0;
  Direction dir = Direction::Forward;

  friend bool operator==(const CycleStep&, const CycleStep&) = default;
};

/// Closed walk over distinct edges. A Reverse step traverses dst -> src.
struct Cycle {
  std::vector<CycleStep> steps;

  std::size_t length() const { return steps.size(); }

  std::vector<EdgeId> sorted_edge_ids() const {
    std::vector<EdgeId> ids;
    ids.reserve(steps.size());
    for (const auto& s : steps) ids.push_back(s.edge);
    std::sort(ids.begin(), ids.end());
    return ids;
  }
};

struct CycleBasis {
  std::vector<Cycle> cycles;
  std::set<EdgeId> covered_lc_edges;

  std::size_t total_weight() const {
    std::size_t w = 0;
    for (const auto& c : cycles) w += c.length();
    return w;
  }
};

/// GF(2) vector stored as 64-bit words.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t n) : n_(n), words_((n + 63) / 64, 0) {}

  std::size_t size() const { return n_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  void flip(std::size_t i) { words_[i / 64] ^= std::uint64_t{1} << (i % 64); }

  BitVector& operator^=(const BitVector& o) {
    for (std::size_t k = 0; k < words_.size(); ++k) words_[k] ^= o.words_[k];
    return *this;
  }

  bool any() const {
    return std::any_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w != 0; });
  }

  /// Parity of the inner product.
  bool dot(const BitVector& o) const {
    std::uint64_t acc = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) acc ^= words_[k] & o.words_[k];
    return std::popcount(acc) % 2 == 1;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Rank over GF(2) of a set of edge-incidence vectors.
inline std::size_t gf2_rank(std::vector<BitVector> rows) {
  std::size_t rank = 0;
  if (rows.empty()) return 0;
  const std::size_t n = rows.front().size();
  for (std::size_t col = 0; col < n && rank < rows.size(); ++col) {
    std::size_t pivot = rank;
    while (pivot < rows.size() && !rows[pivot].test(col)) ++pivot;
    if (pivot == rows.size()) continue;
    std::swap(rows[rank], rows[pivot]);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r != rank && rows[r].test(col)) rows[r] ^= rows[rank];
    }
    ++rank;
  }
  return rank;
}

namespace detail {

/// Undirected multigraph view of a PoseGraph, indexed by positions.
struct UGraph {
  struct Arc {
    std::size_t to;
    std::size_t edge;
  };
  std::size_t n = 0;
  std::vector<std::size_t> eu, ev;       // endpoints per edge position
  std::vector<std::vector<Arc>> adj;     // arcs in edge-position order

  explicit UGraph(const PoseGraph& g) : n(g.num_nodes()), adj(g.num_nodes()) {
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
      const Edge& e = g.edges()[k];
      const std::size_t a = g.node_index(e.src);
      const std::size_t b = g.node_index(e.dst);
      eu.push_back(a);
      ev.push_back(b);
      adj[a].push_back({b, k});
      adj[b].push_back({a, k});
    }
  }
  std::size_t m() const { return eu.size(); }
};

/// Splits an even-degree edge set into edge-disjoint simple cycles.
inline std::vector<std::vector<std::size_t>> split_into_circuits(const UGraph& ug,
                                                                 std::vector<std::size_t> edges) {
  std::vector<std::vector<std::size_t>> out;
  std::sort(edges.begin(), edges.end());
  std::vector<char> live(ug.m(), 0);
  for (auto e : edges) live[e] = 1;
  std::size_t remaining = edges.size();

  while (remaining > 0) {
    std::size_t start_edge = *std::find_if(edges.begin(), edges.end(), [&](auto e) { return live[e]; });
    // Walk until a vertex repeats, then peel off that circuit.
    std::vector<std::size_t> vert_stack{ug.eu[start_edge]};
    std::vector<std::size_t> edge_stack;
    std::vector<long> pos(ug.n, -1);
    pos[ug.eu[start_edge]] = 0;
    std::size_t cur = ug.eu[start_edge];
    std::size_t next_edge = start_edge;
    for (;;) {
      live[next_edge] = 0;
      --remaining;
      edge_stack.push_back(next_edge);
      cur = ug.eu[next_edge] == cur ? ug.ev[next_edge] : ug.eu[next_edge];
      if (pos[cur] >= 0) {
        const auto from = static_cast<std::size_t>(pos[cur]);
        std::vector<std::size_t> circuit(edge_stack.begin() + static_cast<long>(from), edge_stack.end());
        std::sort(circuit.begin(), circuit.end());
        out.push_back(std::move(circuit));
        for (std::size_t k = from + 1; k < vert_stack.size(); ++k) pos[vert_stack[k]] = -1;
        vert_stack.resize(from + 1);
        edge_stack.resize(from);
        if (edge_stack.empty()) break;
      } else {
        pos[cur] = static_cast<long>(vert_stack.size());
        vert_stack.push_back(cur);
      }
      bool found = false;
      for (const auto& arc : ug.adj[cur]) {
        if (live[arc.edge]) {
          next_edge = arc.edge;
          found = true;
          break;
        }
      }
      if (!found) throw std::logic_error("split_into_circuits: edge set is not even");
    }
  }
  return out;
}

/// Orders a simple circuit (edge positions) as a walk starting at its
/// smallest edge id, traversed src -> dst.
inline Cycle circuit_to_walk(const PoseGraph& g, const UGraph& ug, const std::vector<std::size_t>& circuit) {
  Cycle c;
  std::vector<char> used(ug.m(), 0);
  std::vector<char> member(ug.m(), 0);
  for (auto e : circuit) member[e] = 1;
  const std::size_t first = *std::min_element(circuit.begin(), circuit.end());
  std::size_t cur = ug.eu[first];
  std::size_t e = first;
  for (std::size_t step = 0; step < circuit.size(); ++step) {
    used[e] = 1;
    const bool forward = ug.eu[e] == cur;
    c.steps.push_back({g.edges()[e].id, forward ? Direction::Forward : Direction::Reverse});
    cur = forward ? ug.ev[e] : ug.eu[e];
    if (step + 1 == circuit.size()) break;
    bool found = false;
    for (const auto& arc : ug.adj[cur]) {
      if (member[arc.edge] && !used[arc.edge]) {
        e = arc.edge;
        found = true;
        break;
      }
    }
    if (!found) throw std::logic_error("circuit_to_walk: not a simple cycle");
  }
  return c;
}

struct Candidate {
  std::vector<std::size_t> edges;  // sorted edge positions
  std::vector<EdgeId> ids;         // sorted edge ids, for tie-breaking
};

inline bool better(const Candidate& a, const Candidate& b) {
  if (a.edges.size() != b.edges.size()) return a.edges.size() < b.edges.size();
  return a.ids < b.ids;
}

}  // namespace detail

/// Minimum-weight cycle basis with weight = number of edges. The graph is
/// treated as an undirected multigraph. Ties between equally short candidate
/// cycles go to the lexicographically smallest sorted edge-id list.
inline CycleBasis minimum_cycle_basis(const PoseGraph& g) {
  const detail::UGraph ug(g);
  const std::size_t n = ug.n;
  const std::size_t m = ug.m();

  // Spanning forest by BFS; non-tree edges index the witness space.
  std::vector<char> in_tree(m, 0);
  std::vector<char> seen(n, 0);
  for (std::size_t root = 0; root < n; ++root) {
    if (seen[root]) continue;
    seen[root] = 1;
    std::deque<std::size_t> q{root};
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop_front();
      for (const auto& arc : ug.adj[u]) {
        if (!seen[arc.to]) {
          seen[arc.to] = 1;
          in_tree[arc.edge] = 1;
          q.push_back(arc.to);
        }
      }
    }
  }
  std::vector<long> nontree_slot(m, -1);
  std::vector<std::size_t> nontree;
  for (std::size_t e = 0; e < m; ++e) {
    if (!in_tree[e]) {
      nontree_slot[e] = static_cast<long>(nontree.size());
      nontree.push_back(e);
    }
  }
  const std::size_t dim = nontree.size();

  std::vector<BitVector> witness(dim, BitVector(dim));
  for (std::size_t i = 0; i < dim; ++i) witness[i].set(i);

  auto to_slots = [&](const std::vector<std::size_t>& edges) {
    BitVector v(dim);
    for (auto e : edges) {
      if (nontree_slot[e] >= 0) v.flip(static_cast<std::size_t>(nontree_slot[e]));
    }
    return v;
  };

  CycleBasis basis;
  std::vector<std::size_t> dist(2 * n);
  std::vector<long> parent_edge(2 * n);
  std::vector<std::size_t> parent_node(2 * n);
  constexpr auto kInf = std::numeric_limits<std::size_t>::max();

  for (std::size_t i = 0; i < dim; ++i) {
    const BitVector& s = witness[i];
    auto odd = [&](std::size_t e) { return nontree_slot[e] >= 0 && s.test(static_cast<std::size_t>(nontree_slot[e])); };

    std::optional<detail::Candidate> best;
    // Shortest path from (v,0) to (v,1) in the parity-doubled graph.
    for (std::size_t v = 0; v < n; ++v) {
      std::fill(dist.begin(), dist.end(), kInf);
      const std::size_t src = 2 * v;
      const std::size_t dst = 2 * v + 1;
      dist[src] = 0;
      std::deque<std::size_t> q{src};
      while (!q.empty() && dist[dst] == kInf) {
        const std::size_t x = q.front();
        q.pop_front();
        const std::size_t u = x / 2;
        const std::size_t parity = x % 2;
        for (const auto& arc : ug.adj[u]) {
          const std::size_t y = 2 * arc.to + (parity ^ (odd(arc.edge) ? 1U : 0U));
          if (dist[y] == kInf) {
            dist[y] = dist[x] + 1;
            parent_edge[y] = static_cast<long>(arc.edge);
            parent_node[y] = x;
            q.push_back(y);
          }
        }
      }
      if (dist[dst] == kInf) continue;
      if (best && dist[dst] > best->edges.size()) continue;

      std::vector<char> cnt(m, 0);
      for (std::size_t y = dst; y != src; y = parent_node[y]) cnt[static_cast<std::size_t>(parent_edge[y])] ^= 1;
      std::vector<std::size_t> edges;
      for (std::size_t e = 0; e < m; ++e) {
        if (cnt[e]) edges.push_back(e);
      }
      for (auto& circuit : detail::split_into_circuits(ug, edges)) {
        std::size_t parity = 0;
        for (auto e : circuit) parity ^= odd(e) ? 1U : 0U;
        if (!parity) continue;
        detail::Candidate cand{circuit, {}};
        for (auto e : circuit) cand.ids.push_back(g.edges()[e].id);
        std::sort(cand.ids.begin(), cand.ids.end());
        if (!best || detail::better(cand, *best)) best = std::move(cand);
      }
    }
    if (!best) throw std::logic_error("minimum_cycle_basis: no odd cycle for witness");

    const BitVector cvec = to_slots(best->edges);
    for (std::size_t j = i + 1; j < dim; ++j) {
      if (cvec.dot(witness[j])) witness[j] ^= witness[i];
    }
    basis.cycles.push_back(detail::circuit_to_walk(g, ug, best->edges));
  }

  for (const auto& c : basis.cycles) {
    for (const auto& st : c.steps) {
      if (g.edge(st.edge).is_loop_closure()) basis.covered_lc_edges.insert(st.edge);
    }
  }
  return basis;
}

/// Throws std::invalid_argument unless `c` is a closed walk over distinct
/// edges of `g`.
inline void validate_cycle(const PoseGraph& g, const Cycle& c) {
  if (c.steps.empty()) throw std::invalid_argument("cycle is empty");
  std::set<EdgeId> seen;
  NodeId start = 0;
  NodeId cur = 0;
  for (std::size_t k = 0; k < c.steps.size(); ++k) {
    const auto& st = c.steps[k];
    if (!g.has_edge(st.edge)) throw std::invalid_argument("cycle references unknown edge " + std::to_string(st.edge));
    if (!seen.insert(st.edge).second) {
      throw std::invalid_argument("cycle repeats edge " + std::to_string(st.edge));
    }
    const Edge& e = g.edge(st.edge);
    const NodeId from = st.dir == Direction::Forward ? e.src : e.dst;
    const NodeId to = st.dir == Direction::Forward ? e.dst : e.src;
    if (k == 0) {
      start = from;
    } else if (from != cur) {
      throw std::invalid_argument("cycle is not a connected walk at edge " + std::to_string(st.edge));
    }
    cur = to;
  }
  if (cur != start) throw std::invalid_argument("cycle walk does not close");
}

/// Composition of the measurements along the walk; each later step multiplies
/// on the left, Reverse steps use the transposed measurement.
inline so3::RotationMatrix cycle_rotation(const PoseGraph& g, const Cycle& c) {
  validate_cycle(g, c);
  so3::RotationMatrix acc = so3::RotationMatrix::Identity();
  for (const auto& st : c.steps) {
    const auto& r = g.edge(st.edge).rotation;
    if (st.dir == Direction::Forward) {
      acc = r * acc;
    } else {
      acc = r.transpose() * acc;
    }
  }
  return acc;
}

/// z_c: geodesic angle of the cycle rotation, in [0, pi].
inline double cycle_error(const PoseGraph& g, const Cycle& c) {
  return so3::geodesic_angle(cycle_rotation(g, c));
}

/// Edge-incidence vector of a cycle over the graph's edge positions.
inline BitVector incidence_vector(const PoseGraph& g, const Cycle& c) {
  BitVector v(g.num_edges());
  for (const auto& st : c.steps) v.flip(g.edge_index(st.edge));
  return v;
}

/// |E| - |V| + number of connected components.
inline std::size_t cycle_space_dimension(const PoseGraph& g) {
  const detail::UGraph ug(g);
  std::vector<std::size_t> parent(ug.n);
  for (std::size_t k = 0; k < ug.n; ++k) parent[k] = k;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = ug.n;
  for (std::size_t e = 0; e < ug.m(); ++e) {
    const auto a = find(ug.eu[e]);
    const auto b = find(ug.ev[e]);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return ug.m() + components - ug.n;
}

}  // namespace loopvet
