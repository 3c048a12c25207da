#pragma once

// Cycle-consistency model: each basis cycle c contributes a likelihood
// p(z_c | s) that depends on the loop-closure configuration only through the
// outlier count s, with mixture standard deviation
//   varsigma(s) = sqrt(s * sigma_bar^2 + (|c| - s) * sigma^2).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopvet/cycles.hpp"
#include "loopvet/graph.hpp"

namespace loopvet {

inline constexpr std::size_t kDefaultCycleCap = 16;

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Theta = {sigma, sigma_bar, Pi}. Priors are inlier probabilities keyed by
/// edge id; edges without an entry fall back to the graph's own prior.
struct ModelParams {
  double sigma = deg2rad(2.0);
  double sigma_bar = deg2rad(20.0);
  std::map<EdgeId, double> priors;

  static ModelParams from_graph(const PoseGraph& g, double sigma, double sigma_bar) {
    ModelParams p{sigma, sigma_bar, {}};
    for (const auto& e : g.edges()) {
      if (e.is_loop_closure()) p.priors[e.id] = e.prior_inlier;
    }
    return p;
  }

  double prior(EdgeId id, double fallback = 0.5) const {
    auto it = priors.find(id);
    return it == priors.end() ? fallback : it->second;
  }

  void validate() const {
    if (!(sigma > 0.0) || !(sigma_bar > 0.0)) throw std::invalid_argument("sigma and sigma_bar must be positive");
    if (!(sigma_bar > sigma)) throw std::invalid_argument("sigma_bar must exceed sigma");
    for (const auto& [id, p] : priors) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("prior of edge " + std::to_string(id) + " outside [0,1]");
    }
  }
};

/// Observed cycle error plus its loop-closure members. Ego edges only enter
/// through n_fixed.
struct CycleFactor {
  std::size_t cycle_id = 0;
  std::vector<EdgeId> lc_members;
  std::size_t n_fixed = 0;
  double z = 0.0;

  std::size_t length() const { return n_fixed + lc_members.size(); }
  std::size_t arity() const { return lc_members.size(); }
};

/// Probabilities over configuration masks; bit k set <=> lc_members[k] is an
/// outlier.
struct CycleDistribution {
  std::vector<double> values;

  std::size_t arity() const { return static_cast<std::size_t>(std::countr_zero(values.size())); }

  double inlier_marginal(std::size_t k) const {
    double acc = 0.0;
    for (std::size_t mask = 0; mask < values.size(); ++mask) {
      if (!((mask >> k) & 1U)) acc += values[mask];
    }
    return acc;
  }

  /// Probability of each outlier count s = 0..arity.
  std::vector<double> by_count() const {
    std::vector<double> out(arity() + 1, 0.0);
    for (std::size_t mask = 0; mask < values.size(); ++mask) {
      out[static_cast<std::size_t>(std::popcount(mask))] += values[mask];
    }
    return out;
  }
};

class CycleCapError : public std::runtime_error {
 public:
  CycleCapError(std::size_t cycle_id, std::size_t arity, std::size_t cap)
      : std::runtime_error("cycle " + std::to_string(cycle_id) + " has " + std::to_string(arity) +
                           " loop-closure edges, above the cap of " + std::to_string(cap) +
                           "; raise the cap or prune the graph"),
        cycle_id_(cycle_id) {}
  std::size_t cycle_id() const { return cycle_id_; }

 private:
  std::size_t cycle_id_;
};

inline double mixture_std(std::size_t length, std::size_t s, double sigma, double sigma_bar) {
  const auto ds = static_cast<double>(s);
  const auto rest = static_cast<double>(length) - ds;
  return std::sqrt(ds * sigma_bar * sigma_bar + rest * sigma * sigma);
}

inline double mixture_std(const CycleFactor& f, std::size_t s, const ModelParams& p) {
  if (s > f.arity()) throw std::out_of_range("mixture_std: outlier count exceeds loop-closure members");
  return mixture_std(f.length(), s, p.sigma, p.sigma_bar);
}

/// phi(v) = integral_0^pi exp(-t^2 / (2 v^2)) dt, the normaliser of a
/// Gaussian truncated to [0, pi].
inline double angle_normalizer(double vs) {
  return vs * std::sqrt(std::numbers::pi / 2.0) * std::erf(std::numbers::pi / (vs * std::numbers::sqrt2));
}

/// -3 ln v - z^2 / (2 v^2) - ln phi(v), v = mixture std for s outliers.
inline double log_count_likelihood(double z, std::size_t length, std::size_t s, double sigma, double sigma_bar) {
  const double vs = mixture_std(length, s, sigma, sigma_bar);
  return -3.0 * std::log(vs) - z * z / (2.0 * vs * vs) - std::log(angle_normalizer(vs));
}

inline double log_cycle_likelihood(const CycleFactor& f, std::size_t s, const ModelParams& p) {
  if (s > f.arity()) throw std::out_of_range("log_cycle_likelihood: outlier count exceeds loop-closure members");
  return log_count_likelihood(f.z, f.length(), s, p.sigma, p.sigma_bar);
}

/// ln psi_c: log of sum_s C(n, s) exp(log_count_likelihood(s)) over the n
/// loop-closure members.
inline double log_psi(double z, std::size_t length, std::size_t arity, double sigma, double sigma_bar) {
  std::vector<double> terms;
  double log_binom = 0.0;
  for (std::size_t s = 0; s <= arity; ++s) {
    if (s > 0) log_binom += std::log(static_cast<double>(arity - s + 1)) - std::log(static_cast<double>(s));
    terms.push_back(log_binom + log_count_likelihood(z, length, s, sigma, sigma_bar));
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

inline double log_psi(const CycleFactor& f, const ModelParams& p) {
  return log_psi(f.z, f.length(), f.arity(), p.sigma, p.sigma_bar);
}

/// log of (pi, 1 - pi) with log(0) = -inf.
inline double log_prior_term(double pi_inlier, bool outlier) {
  const double p = outlier ? 1.0 - pi_inlier : pi_inlier;
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

/// Local posterior p_c(x_c | z_c) proportional to p(z_c | s) * prod of priors.
inline CycleDistribution cycle_conditional(const CycleFactor& f, const ModelParams& p,
                                           std::size_t cap = kDefaultCycleCap) {
  const std::size_t k = f.arity();
  if (k > cap) throw CycleCapError(f.cycle_id, k, cap);
  std::vector<double> loglik(k + 1);
  for (std::size_t s = 0; s <= k; ++s) loglik[s] = log_cycle_likelihood(f, s, p);
  std::vector<double> pri(k);
  for (std::size_t j = 0; j < k; ++j) pri[j] = p.prior(f.lc_members[j]);

  const std::size_t n = std::size_t{1} << k;
  std::vector<double> logv(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < n; ++mask) {
    double acc = loglik[static_cast<std::size_t>(std::popcount(mask))];
    for (std::size_t j = 0; j < k; ++j) acc += log_prior_term(pri[j], (mask >> j) & 1U);
    logv[mask] = acc;
    mx = std::max(mx, acc);
  }
  if (!std::isfinite(mx)) throw std::invalid_argument("cycle_conditional: all configurations have zero mass");
  CycleDistribution d{std::vector<double>(n)};
  double total = 0.0;
  for (std::size_t mask = 0; mask < n; ++mask) total += d.values[mask] = std::exp(logv[mask] - mx);
  for (double& v : d.values) v /= total;
  return d;
}

/// Bipartite graph of loop-closure variables and cycle factors. Cycles
/// without loop-closure members carry no information and are dropped.
struct FactorGraph {
  std::vector<EdgeId> variables;                 // loop-closure edge ids, ascending
  std::vector<CycleFactor> factors;              // basis order
  std::vector<std::vector<std::size_t>> factor_vars;  // per factor: variable indices of lc_members
  std::vector<std::vector<std::size_t>> var_factors;  // per variable: factor indices, ascending

  std::size_t num_variables() const { return variables.size(); }
  std::size_t num_factors() const { return factors.size(); }

  std::size_t variable_index(EdgeId id) const {
    auto it = std::lower_bound(variables.begin(), variables.end(), id);
    if (it == variables.end() || *it != id) throw std::out_of_range("not a loop-closure variable: " + std::to_string(id));
    return static_cast<std::size_t>(it - variables.begin());
  }

  /// Position of variable v inside factor f's member list.
  std::size_t slot_of(std::size_t f, std::size_t v) const {
    const auto& vars = factor_vars[f];
    for (std::size_t k = 0; k < vars.size(); ++k) {
      if (vars[k] == v) return k;
    }
    throw std::out_of_range("variable not adjacent to factor");
  }

  bool is_covered(std::size_t v) const { return !var_factors[v].empty(); }
};

inline CycleFactor make_factor(const PoseGraph& g, const Cycle& c, std::size_t cycle_id) {
  CycleFactor f;
  f.cycle_id = cycle_id;
  for (const auto& st : c.steps) {
    if (g.edge(st.edge).is_loop_closure()) {
      f.lc_members.push_back(st.edge);
    } else {
      ++f.n_fixed;
    }
  }
  std::sort(f.lc_members.begin(), f.lc_members.end());
  f.z = cycle_error(g, c);
  return f;
}

inline FactorGraph build_factor_graph(const PoseGraph& g, const CycleBasis& basis,
                                      std::size_t cap = kDefaultCycleCap) {
  FactorGraph fg;
  for (const auto& e : g.edges()) {
    if (e.is_loop_closure()) fg.variables.push_back(e.id);
  }
  fg.var_factors.resize(fg.variables.size());
  for (std::size_t c = 0; c < basis.cycles.size(); ++c) {
    CycleFactor f = make_factor(g, basis.cycles[c], c);
    if (f.lc_members.empty()) continue;
    if (f.arity() > cap) throw CycleCapError(c, f.arity(), cap);
    std::vector<std::size_t> vars;
    for (EdgeId id : f.lc_members) vars.push_back(fg.variable_index(id));
    const std::size_t fi = fg.factors.size();
    for (auto v : vars) fg.var_factors[v].push_back(fi);
    fg.factor_vars.push_back(std::move(vars));
    fg.factors.push_back(std::move(f));
  }
  return fg;
}

inline FactorGraph build_factor_graph(const PoseGraph& g, std::size_t cap = kDefaultCycleCap) {
  return build_factor_graph(g, minimum_cycle_basis(g), cap);
}

/// Per-variable inlier priors in variable order.
inline std::vector<double> variable_priors(const FactorGraph& fg, const ModelParams& p) {
  std::vector<double> out;
  out.reserve(fg.num_variables());
  for (EdgeId id : fg.variables) out.push_back(p.prior(id));
  return out;
}

/// log p(x, z) up to the constant psi terms: loop-closure prior terms plus
/// the cycle likelihoods. `outlier[v]` is x for variable v.
inline double joint_log_density(const FactorGraph& fg, const std::vector<bool>& outlier, const ModelParams& p) {
  if (outlier.size() != fg.num_variables()) throw std::invalid_argument("joint_log_density: configuration size mismatch");
  double acc = 0.0;
  for (std::size_t v = 0; v < fg.num_variables(); ++v) acc += log_prior_term(p.prior(fg.variables[v]), outlier[v]);
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    std::size_t s = 0;
    for (auto v : fg.factor_vars[f]) s += outlier[v] ? 1 : 0;
    acc += log_cycle_likelihood(fg.factors[f], s, p);
  }
  return acc;
}

struct Marginals {
  std::vector<double> inlier;               // gamma_e = P(x_e = 0 | z), per variable
  std::vector<CycleDistribution> cycles;    // gamma_c, per factor
  bool converged = true;
  std::size_t iterations = 0;
};

}  // namespace loopvet
