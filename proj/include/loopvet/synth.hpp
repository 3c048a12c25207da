#pragma once

// Synthetic multi-map pose graphs: per map a chain of ego edges over random
// ground-truth orientations, plus loop closures between maps, a chosen number
// of which are corrupted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loopvet/graph.hpp"
#include "loopvet/model.hpp"
#include "loopvet/so3.hpp"

namespace loopvet {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Band: random axis, angle uniform in the band. Gaussian: exp of an
/// isotropic Gaussian tangent with the given per-axis std.
enum class NoiseMode { Band, Gaussian };

struct AngleBand {
  double lo = 0.0;
  double hi = 0.0;
};

struct SynthSpec {
  std::size_t nodes_per_map = 15;
  std::size_t num_maps = 2;
  std::size_t m_lc = 10;
  std::size_t num_outliers = 1;
  AngleBand inlier_band{deg2rad(1.6), deg2rad(2.4)};
  AngleBand outlier_band{deg2rad(16.0), deg2rad(24.0)};
  NoiseMode noise = NoiseMode::Band;
  double inlier_sigma = deg2rad(2.0);
  double outlier_sigma = deg2rad(20.0);
  bool noiseless_ego = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (nodes_per_map < 1) throw std::invalid_argument("synth: nodes_per_map must be >= 1");
    if (num_maps < 2) throw std::invalid_argument("synth: at least two maps are required");
    if (m_lc < 2) throw std::invalid_argument("synth: m must be >= 2");
    if (num_outliers < 1 || num_outliers > m_lc - 1) {
      throw std::invalid_argument("synth: outliers must lie in [1, m-1], got " + std::to_string(num_outliers) +
                                  " for m = " + std::to_string(m_lc));
    }
    for (const AngleBand& b : {inlier_band, outlier_band}) {
      if (!(b.lo >= 0.0 && b.lo <= b.hi && b.hi <= std::numbers::pi)) {
        throw std::invalid_argument("synth: noise band must satisfy 0 <= lo <= hi <= pi");
      }
    }
    if (!(inlier_sigma >= 0.0) || !(outlier_sigma >= 0.0)) throw std::invalid_argument("synth: negative sigma");
    if (m_lc > max_loop_closures()) {
      throw std::invalid_argument("synth: m = " + std::to_string(m_lc) + " exceeds the " +
                                  std::to_string(max_loop_closures()) + " distinct cross-map node pairs");
    }
  }

  std::size_t max_loop_closures() const {
    return num_maps * (num_maps - 1) / 2 * nodes_per_map * nodes_per_map;
  }
};

inline PoseGraph generate(const SynthSpec& spec) {
  spec.validate();
  so3::Rng rng(spec.seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);

  const std::size_t n = spec.nodes_per_map * spec.num_maps;
  std::vector<Node> nodes;
  std::vector<so3::RotationMatrix> truth_rot;
  nodes.reserve(n);
  truth_rot.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back({static_cast<NodeId>(i), static_cast<int>(i / spec.nodes_per_map)});
    const so3::Vector3 axis = so3::random_unit_vector(rng);
    truth_rot.push_back(so3::exp_so3(angle(rng) * axis));
  }

  auto relative = [&](std::size_t a, std::size_t b) -> so3::RotationMatrix {
    return truth_rot[b] * truth_rot[a].transpose();
  };
  auto corrupt = [&](const so3::RotationMatrix& r, bool outlier) -> so3::RotationMatrix {
    if (spec.noise == NoiseMode::Gaussian) {
      return so3::sample_noisy_rotation(r, outlier ? spec.outlier_sigma : spec.inlier_sigma, rng);
    }
    const AngleBand& b = outlier ? spec.outlier_band : spec.inlier_band;
    return so3::sample_rotation_in_band(b.lo, b.hi, rng) * r;
  };

  std::vector<Edge> edges;
  EdgeId next_id = 0;
  for (std::size_t map = 0; map < spec.num_maps; ++map) {
    for (std::size_t k = 0; k + 1 < spec.nodes_per_map; ++k) {
      const std::size_t a = map * spec.nodes_per_map + k;
      Edge e;
      e.id = next_id++;
      e.src = static_cast<NodeId>(a);
      e.dst = static_cast<NodeId>(a + 1);
      e.kind = EdgeKind::Ego;
      e.prior_inlier = 1.0;
      e.rotation = spec.noiseless_ego ? relative(a, a + 1) : corrupt(relative(a, a + 1), false);
      edges.push_back(e);
    }
  }

  std::uniform_int_distribution<std::size_t> pick_map(0, spec.num_maps - 1);
  std::uniform_int_distribution<std::size_t> pick_node(0, spec.nodes_per_map - 1);
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  while (pairs.size() < spec.m_lc) {
    const std::size_t ma = pick_map(rng);
    const std::size_t mb = pick_map(rng);
    const std::size_t a = ma * spec.nodes_per_map + pick_node(rng);
    const std::size_t b = mb * spec.nodes_per_map + pick_node(rng);
    if (ma == mb) continue;
    if (!used.insert(std::minmax(a, b)).second) continue;
    pairs.emplace_back(a, b);
  }

  std::vector<std::size_t> order(spec.m_lc);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> is_outlier(spec.m_lc, 0);
  for (std::size_t k = 0; k < spec.num_outliers; ++k) is_outlier[order[k]] = 1;

  for (std::size_t k = 0; k < spec.m_lc; ++k) {
    const auto [a, b] = pairs[k];
    Edge e;
    e.id = next_id++;
    e.src = static_cast<NodeId>(a);
    e.dst = static_cast<NodeId>(b);
    e.kind = EdgeKind::LoopClosure;
    e.prior_inlier = 0.5;
    e.truth = is_outlier[k] ? Truth::Outlier : Truth::Inlier;
    e.rotation = corrupt(relative(a, b), is_outlier[k] != 0);
    edges.push_back(e);
  }
  for (auto& e : edges) e.rotation = so3::project_to_so3(e.rotation);
  return PoseGraph(std::move(nodes), std::move(edges));
}

struct SuiteOptions {
  std::size_t m_min = 10;
  std::size_t m_max = 200;
  std::size_t m_step = 5;
  double scale = 1.0;  // fraction of the outlier sweep kept per m
  std::uint64_t seed = 0;
  SynthSpec base{};  // bands, map sizes and noise mode shared by every item
};

struct SuiteItem {
  std::string graph_id;
  SynthSpec spec;
};

inline std::string suite_graph_id(std::size_t m, std::size_t outliers) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "m%03zu_o%03zu", m, outliers);
  return buf;
}

/// Outlier counts kept for one m: all of 1..m-1 at scale 1, otherwise
/// max(1, round(scale * (m-1))) evenly spaced values.
inline std::vector<std::size_t> suite_outlier_counts(std::size_t m, double scale) {
  const std::size_t total = m - 1;
  std::vector<std::size_t> out;
  if (scale >= 1.0) {
    for (std::size_t k = 1; k <= total; ++k) out.push_back(k);
    return out;
  }
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * static_cast<double>(total))));
  for (std::size_t i = 0; i < keep; ++i) {
    // Centre of the i-th of `keep` equal slices of 1..total.
    const double pos = (static_cast<double>(i) + 0.5) * static_cast<double>(total) / static_cast<double>(keep);
    out.push_back(std::min(total, static_cast<std::size_t>(pos) + 1));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<SuiteItem> suite_specs(const SuiteOptions& opts) {
  if (opts.m_min < 2 || opts.m_step == 0 || opts.m_max < opts.m_min) throw std::invalid_argument("suite: bad m range");
  if (!(opts.scale > 0.0)) throw std::invalid_argument("suite: scale must be positive");
  std::vector<SuiteItem> items;
  for (std::size_t m = opts.m_min; m <= opts.m_max; m += opts.m_step) {
    for (std::size_t k : suite_outlier_counts(m, opts.scale)) {
      SynthSpec s = opts.base;
      s.m_lc = m;
      s.num_outliers = k;
      s.seed = splitmix64(opts.seed ^ splitmix64((static_cast<std::uint64_t>(m) << 32) | k));
      items.push_back({suite_graph_id(m, k), s});
    }
  }
  return items;
}

/// Number of graphs in the full sweep: sum of (m - 1) over the m range.
inline std::size_t suite_cardinality(std::size_t m_min = 10, std::size_t m_max = 200, std::size_t m_step = 5) {
  std::size_t total = 0;
  for (std::size_t m = m_min; m <= m_max; m += m_step) total += m - 1;
  return total;
}

}  // namespace loopvet
