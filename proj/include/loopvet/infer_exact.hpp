#pragma once

// Exact posterior marginals by enumerating every configuration of each
// connected component of the factor graph.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopvet/model.hpp"

namespace loopvet {

inline constexpr std::size_t kMaxExactComponent = 24;

namespace detail {

inline std::vector<std::vector<std::size_t>> factor_components(const FactorGraph& fg) {
  std::vector<std::size_t> parent(fg.num_variables());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& vars : fg.factor_vars) {
    for (std::size_t k = 1; k < vars.size(); ++k) {
      const auto a = find(vars[0]);
      const auto b = find(vars[k]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<std::vector<std::size_t>> comps;
  std::vector<long> comp_of(fg.num_variables(), -1);
  for (std::size_t v = 0; v < fg.num_variables(); ++v) {
    if (!fg.is_covered(v)) continue;
    const auto r = find(v);
    if (comp_of[r] < 0) {
      comp_of[r] = static_cast<long>(comps.size());
      comps.emplace_back();
    }
    comps[static_cast<std::size_t>(comp_of[r])].push_back(v);
  }
  return comps;
}

}  // namespace detail

/// Exact gamma_e and gamma_c. Uncovered variables keep their prior.
inline Marginals infer_exact(const FactorGraph& fg, const ModelParams& p,
                             std::size_t max_component = kMaxExactComponent) {
  Marginals out;
  const auto priors = variable_priors(fg, p);
  out.inlier = priors;
  out.cycles.resize(fg.num_factors());
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    out.cycles[f].values.assign(std::size_t{1} << fg.factors[f].arity(), 0.0);
  }

  for (const auto& comp : detail::factor_components(fg)) {
    const std::size_t n = comp.size();
    if (n > max_component) {
      throw std::runtime_error("exact inference: component with " + std::to_string(n) +
                               " loop-closure edges exceeds the limit of " + std::to_string(max_component));
    }
    std::vector<long> local(fg.num_variables(), -1);
    for (std::size_t k = 0; k < n; ++k) local[comp[k]] = static_cast<long>(k);

    std::vector<std::size_t> factors;
    std::vector<std::uint64_t> fmask;
    std::vector<std::vector<double>> loglik;
    for (std::size_t f = 0; f < fg.num_factors(); ++f) {
      const auto& vars = fg.factor_vars[f];
      if (local[vars.front()] < 0) continue;
      std::uint64_t m = 0;
      for (auto v : vars) m |= std::uint64_t{1} << local[v];
      factors.push_back(f);
      fmask.push_back(m);
      std::vector<double> ll(vars.size() + 1);
      for (std::size_t s = 0; s < ll.size(); ++s) ll[s] = log_cycle_likelihood(fg.factors[f], s, p);
      loglik.push_back(std::move(ll));
    }
    std::vector<double> lp_in(n), lp_out(n);
    for (std::size_t k = 0; k < n; ++k) {
      lp_in[k] = log_prior_term(priors[comp[k]], false);
      lp_out[k] = log_prior_term(priors[comp[k]], true);
    }

    const std::uint64_t total = std::uint64_t{1} << n;
    auto log_joint = [&](std::uint64_t x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += ((x >> k) & 1U) ? lp_out[k] : lp_in[k];
      for (std::size_t j = 0; j < factors.size(); ++j) {
        acc += loglik[j][static_cast<std::size_t>(std::popcount(x & fmask[j]))];
      }
      return acc;
    };

    double mx = -std::numeric_limits<double>::infinity();
    for (std::uint64_t x = 0; x < total; ++x) mx = std::max(mx, log_joint(x));
    if (!std::isfinite(mx)) throw std::invalid_argument("exact inference: all configurations have zero mass");

    double z = 0.0;
    std::vector<double> outlier_mass(n, 0.0);
    for (std::uint64_t x = 0; x < total; ++x) {
      const double w = std::exp(log_joint(x) - mx);
      if (w == 0.0) continue;
      z += w;
      for (std::size_t k = 0; k < n; ++k) {
        if ((x >> k) & 1U) outlier_mass[k] += w;
      }
      for (std::size_t j = 0; j < factors.size(); ++j) {
        const auto& vars = fg.factor_vars[factors[j]];
        std::size_t lm = 0;
        for (std::size_t b = 0; b < vars.size(); ++b) {
          if ((x >> local[vars[b]]) & 1U) lm |= std::size_t{1} << b;
        }
        out.cycles[factors[j]].values[lm] += w;
      }
    }
    for (std::size_t k = 0; k < n; ++k) out.inlier[comp[k]] = 1.0 - outlier_mass[k] / z;
    for (auto f : factors) {
      for (double& v : out.cycles[f].values) v /= z;
    }
  }
  out.converged = true;
  out.iterations = 0;
  return out;
}

/// log sum_x p(x, z) over all loop-closure configurations; optional psi
/// normalisation per cycle. Small graphs only.
inline double observed_log_likelihood(const FactorGraph& fg, const ModelParams& p, bool include_psi = false,
                                      std::size_t max_component = kMaxExactComponent) {
  double acc = 0.0;
  const auto priors = variable_priors(fg, p);
  // Uncovered variables sum to one and contribute nothing.
  for (const auto& comp : detail::factor_components(fg)) {
    const std::size_t n = comp.size();
    if (n > max_component) throw std::runtime_error("observed_log_likelihood: component too large");
    std::vector<long> local(fg.num_variables(), -1);
    for (std::size_t k = 0; k < n; ++k) local[comp[k]] = static_cast<long>(k);
    std::vector<std::uint64_t> fmask;
    std::vector<std::vector<double>> loglik;
    for (std::size_t f = 0; f < fg.num_factors(); ++f) {
      const auto& vars = fg.factor_vars[f];
      if (local[vars.front()] < 0) continue;
      std::uint64_t m = 0;
      for (auto v : vars) m |= std::uint64_t{1} << local[v];
      fmask.push_back(m);
      std::vector<double> ll(vars.size() + 1);
      for (std::size_t s = 0; s < ll.size(); ++s) ll[s] = log_cycle_likelihood(fg.factors[f], s, p);
      loglik.push_back(std::move(ll));
      if (include_psi) acc -= log_psi(fg.factors[f], p);
    }
    std::vector<double> terms;
    terms.reserve(std::size_t{1} << n);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::uint64_t x = 0; x < (std::uint64_t{1} << n); ++x) {
      double t = 0.0;
      for (std::size_t k = 0; k < n; ++k) t += log_prior_term(priors[comp[k]], (x >> k) & 1U);
      for (std::size_t j = 0; j < fmask.size(); ++j) t += loglik[j][static_cast<std::size_t>(std::popcount(x & fmask[j]))];
      terms.push_back(t);
      mx = std::max(mx, t);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    acc += mx + std::log(s);
  }
  return acc;
}

}  // namespace loopvet
