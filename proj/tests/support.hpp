#pragma once

// Independent reference implementations and fixtures for the tests. Nothing
// here calls the library routine it is used to check.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "loopvet/loopvet.hpp"

namespace loopvet::testing {

inline so3::RotationMatrix rot(double angle, so3::Vector3 axis) { return so3::exp_so3(angle * axis.normalized()); }

inline PoseGraph make_graph(std::size_t num_nodes, const std::vector<std::pair<NodeId, NodeId>>& ends,
                            const std::vector<so3::RotationMatrix>& rotations = {}, bool all_lc = true) {
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < num_nodes; ++i) nodes.push_back({static_cast<NodeId>(i), 0});
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < ends.size(); ++k) {
    Edge e;
    e.id = static_cast<EdgeId>(k);
    e.src = ends[k].first;
    e.dst = ends[k].second;
    e.kind = all_lc ? EdgeKind::LoopClosure : EdgeKind::Ego;
    e.prior_inlier = all_lc ? 0.5 : 1.0;
    if (k < rotations.size()) e.rotation = rotations[k];
    edges.push_back(e);
  }
  return PoseGraph(std::move(nodes), std::move(edges));
}

// Four poses, five edges: 0->1, 1->2, 2->0, 2->3, 3->0. Every edge is a
// loop closure; the factor graph uses both minimum-basis triangles plus the
// outer 4-cycle, so variables sit in up to three factors.
inline PoseGraph diamond_graph(std::uint64_t seed, double outlier_rate = 0.3) {
  so3::Rng rng(seed);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi);
  std::vector<so3::RotationMatrix> truth;
  for (int i = 0; i < 4; ++i) truth.push_back(so3::exp_so3(ang(rng) * so3::random_unit_vector(rng)));
  const NodeId ends[5][2] = {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 0}};
  std::vector<Node> nodes{{0, 0}, {1, 0}, {2, 1}, {3, 1}};
  std::vector<Edge> edges;
  std::bernoulli_distribution is_out(outlier_rate);
  for (EdgeId k = 0; k < 5; ++k) {
    Edge e;
    e.id = k;
    e.src = ends[k][0];
    e.dst = ends[k][1];
    const bool out = is_out(rng);
    e.truth = out ? Truth::Outlier : Truth::Inlier;
    const double a = deg2rad(out ? 20.0 : 2.0);
    e.rotation = so3::project_to_so3(so3::exp_so3(a * so3::random_unit_vector(rng)) * truth[e.dst] *
                                     truth[e.src].transpose());
    edges.push_back(e);
  }
  return PoseGraph(std::move(nodes), std::move(edges));
}

inline FactorGraph diamond_factor_graph(const PoseGraph& g) {
  CycleBasis b = minimum_cycle_basis(g);
  Cycle outer;
  outer.steps = {{0, Direction::Forward}, {1, Direction::Forward}, {3, Direction::Forward}, {4, Direction::Forward}};
  b.cycles.push_back(outer);
  return build_factor_graph(g, CycleBasis{b.cycles, {}});
}

// Random 2-map graph with at most 12 loop closures, the instance family used
// for the exact-oracle comparisons.
inline PoseGraph small_two_map_graph(std::uint64_t seed) {
  so3::Rng rng(splitmix64(seed));
  SynthSpec s;
  s.m_lc = std::uniform_int_distribution<std::size_t>(4, 12)(rng);
  s.num_outliers = std::uniform_int_distribution<std::size_t>(1, s.m_lc - 1)(rng);
  s.seed = rng();
  return generate(s);
}

// Disjoint union; node, edge and map ids are shifted per part.
inline PoseGraph union_graph(const std::vector<PoseGraph>& parts) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  NodeId node_off = 0;
  EdgeId edge_off = 0;
  int map_off = 0;
  for (const auto& g : parts) {
    int max_map = 0;
    for (auto n : g.nodes()) {
      max_map = std::max(max_map, n.map_id);
      n.id += node_off;
      n.map_id += map_off;
      nodes.push_back(n);
    }
    for (auto e : g.edges()) {
      e.id += edge_off;
      e.src += node_off;
      e.dst += node_off;
      edges.push_back(e);
    }
    node_off += g.num_nodes();
    edge_off += g.num_edges();
    map_off += max_map + 1;
  }
  return PoseGraph(std::move(nodes), std::move(edges));
}

// Gaussian-mode synthetic graphs (m 6..12, 1..m/2 outliers) merged into one.
inline PoseGraph gaussian_union(std::uint64_t base, std::size_t count) {
  std::vector<PoseGraph> parts;
  for (std::uint64_t k = 0; k < count; ++k) {
    so3::Rng rng(splitmix64(base + k));
    SynthSpec s;
    s.noise = NoiseMode::Gaussian;
    s.m_lc = std::uniform_int_distribution<std::size_t>(6, 12)(rng);
    s.num_outliers = std::uniform_int_distribution<std::size_t>(1, s.m_lc / 2)(rng);
    s.seed = rng();
    parts.push_back(generate(s));
  }
  return union_graph(parts);
}

// ---------------------------------------------------------------------------
// Oracles

// Posterior inlier marginals and per-factor mask distributions by summing
// exp(joint_log_density) over every configuration.
inline Marginals brute_force_posterior(const FactorGraph& fg, const ModelParams& p) {
  const std::size_t n = fg.num_variables();
  const std::size_t total = std::size_t{1} << n;
  std::vector<double> logs(total);
  double mx = -INFINITY;
  std::vector<bool> x(n);
  for (std::size_t c = 0; c < total; ++c) {
    for (std::size_t v = 0; v < n; ++v) x[v] = (c >> v) & 1U;
    logs[c] = joint_log_density(fg, x, p);
    mx = std::max(mx, logs[c]);
  }
  Marginals m;
  m.inlier.assign(n, 0.0);
  m.cycles.resize(fg.num_factors());
  for (std::size_t f = 0; f < fg.num_factors(); ++f) m.cycles[f].values.assign(std::size_t{1} << fg.factor_vars[f].size(), 0.0);
  double z = 0.0;
  for (std::size_t c = 0; c < total; ++c) {
    const double w = std::exp(logs[c] - mx);
    z += w;
    for (std::size_t v = 0; v < n; ++v) {
      if (!((c >> v) & 1U)) m.inlier[v] += w;
    }
    for (std::size_t f = 0; f < fg.num_factors(); ++f) {
      std::size_t mask = 0;
      const auto& vars = fg.factor_vars[f];
      for (std::size_t k = 0; k < vars.size(); ++k) {
        if ((c >> vars[k]) & 1U) mask |= std::size_t{1} << k;
      }
      m.cycles[f].values[mask] += w;
    }
  }
  for (double& g : m.inlier) g /= z;
  for (auto& d : m.cycles) {
    for (double& v : d.values) v /= z;
  }
  return m;
}

// Minimum cycle-basis weight by exhaustive search: enumerate every even
// subgraph that is a single simple cycle, then pick greedily by weight while
// keeping GF(2) independence (matroid greedy is optimal).
struct SmallGraph {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

inline bool is_simple_cycle(const SmallGraph& g, std::uint32_t mask) {
  if (mask == 0) return false;
  std::vector<int> deg(g.n, 0);
  std::size_t start = g.n;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (!((mask >> e) & 1U)) continue;
    ++deg[g.edges[e].first];
    ++deg[g.edges[e].second];
    start = g.edges[e].first;
  }
  for (int d : deg) {
    if (d != 0 && d != 2) return false;
  }
  // Connected?
  std::uint32_t seen = 0;
  std::vector<std::size_t> stack{start};
  std::vector<char> vis(g.n, 0);
  vis[start] = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      if (!((mask >> e) & 1U)) continue;
      const auto [a, b] = g.edges[e];
      if (a != u && b != u) continue;
      seen |= 1U << e;
      const auto w = a == u ? b : a;
      if (!vis[w]) {
        vis[w] = 1;
        stack.push_back(w);
      }
    }
  }
  return seen == mask;
}

inline std::size_t gf2_rank_masks(std::vector<std::uint32_t> rows) {
  std::size_t rank = 0;
  for (int bit = 31; bit >= 0; --bit) {
    auto it = std::find_if(rows.begin() + static_cast<long>(rank), rows.end(),
                           [&](std::uint32_t r) { return (r >> bit) & 1U; });
    if (it == rows.end()) continue;
    std::swap(*it, rows[rank]);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (k != rank && ((rows[k] >> bit) & 1U)) rows[k] ^= rows[rank];
    }
    ++rank;
  }
  return rank;
}

struct BruteBasis {
  std::size_t dimension = 0;
  std::size_t weight = 0;
};

inline BruteBasis brute_force_min_basis(const SmallGraph& g) {
  std::vector<std::uint32_t> cycles;
  const std::uint32_t total = 1U << g.edges.size();
  for (std::uint32_t mask = 1; mask < total; ++mask) {
    if (is_simple_cycle(g, mask)) cycles.push_back(mask);
  }
  std::stable_sort(cycles.begin(), cycles.end(),
                   [](std::uint32_t a, std::uint32_t b) { return std::popcount(a) < std::popcount(b); });
  BruteBasis out;
  std::vector<std::uint32_t> chosen;
  for (auto c : cycles) {
    chosen.push_back(c);
    if (gf2_rank_masks(chosen) == chosen.size()) {
      out.weight += static_cast<std::size_t>(std::popcount(c));
    } else {
      chosen.pop_back();
    }
  }
  out.dimension = chosen.size();
  return out;
}

inline SmallGraph random_small_graph(std::mt19937_64& rng) {
  SmallGraph sg;
  sg.n = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
  std::uniform_int_distribution<std::size_t> node(0, sg.n - 1);
  while (sg.edges.size() < m) {
    const auto a = node(rng);
    const auto b = node(rng);
    if (a != b) sg.edges.emplace_back(a, b);
  }
  return sg;
}

inline PoseGraph to_pose_graph(const SmallGraph& sg) {
  std::vector<std::pair<NodeId, NodeId>> ends;
  for (auto [a, b] : sg.edges) ends.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
  return make_graph(sg.n, ends);
}


// Euclidean simplex projection by bisection on the shift.
inline std::vector<double> bisection_simplex_projection(const std::vector<double>& x) {
  double lo = *std::min_element(x.begin(), x.end()) - 1.0;
  double hi = *std::max_element(x.begin(), x.end());
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double s = 0.0;
    for (double v : x) s += std::max(0.0, v - mid);
    (s > 1.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  std::vector<double> out;
  for (double v : x) out.push_back(std::max(0.0, v - t));
  return out;
}

// Plain projected gradient on
//   ||v - v_hat||^2 + y'Pv + rho/2 ||Pv - w||^2
// with P written out densely.
inline std::vector<double> reference_cycle_qp(const std::vector<double>& v_hat, const std::vector<double>& y,
                                              const std::vector<double>& w, double rho, std::size_t iters = 200000) {
  const std::size_t k = y.size();
  const std::size_t n = v_hat.size();
  std::vector<std::vector<double>> P(k, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t mask = 0; mask < n; ++mask) P[r][mask] = ((mask >> r) & 1U) ? 0.0 : 1.0;
  }
  double norm_sq = 0.0;  // Frobenius bound on ||P||^2
  for (const auto& row : P) {
    for (double a : row) norm_sq += a * a;
  }
  const double step = 1.0 / (2.0 + rho * norm_sq);
  std::vector<double> v = v_hat;
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> grad(n);
    std::vector<double> resid(k);
    for (std::size_t r = 0; r < k; ++r) {
      double pv = 0.0;
      for (std::size_t i = 0; i < n; ++i) pv += P[r][i] * v[i];
      resid[r] = y[r] + rho * (pv - w[r]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = 2.0 * (v[i] - v_hat[i]);
      for (std::size_t r = 0; r < k; ++r) grad[i] += P[r][i] * resid[r];
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = v[i] - step * grad[i];
    v = bisection_simplex_projection(x);
  }
  return v;
}

// Factor-to-variable message by summing over every mask of the other members.
inline std::array<double, 2> naive_factor_to_var(const std::vector<double>& loglik_by_count,
                                                 const std::vector<std::array<double, 2>>& incoming,
                                                 std::size_t target) {
  const std::size_t k = incoming.size();
  std::array<double, 2> out{0.0, 0.0};
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    double w = std::exp(loglik_by_count[static_cast<std::size_t>(std::popcount(mask))]);
    for (std::size_t i = 0; i < k; ++i) {
      if (i == target) continue;
      w *= incoming[i][(mask >> i) & 1U];
    }
    out[(mask >> target) & 1U] += w;
  }
  const double s = out[0] + out[1];
  return {out[0] / s, out[1] / s};
}

}  // namespace loopvet::testing
