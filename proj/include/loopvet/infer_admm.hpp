#pragma once

// Consensus ADMM over per-cycle distributions. Each cycle keeps a
// distribution v_c close (in squared Euclidean distance) to its local
// posterior v_hat_c, while the inlier marginals P_c v_c of shared loop
// closures are driven to a common w_e in [0, 1].

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "loopvet/model.hpp"
#include "loopvet/simplex.hpp"

namespace loopvet {

/// AsPrinted: rho * tau if r <= mu t, rho / tau if t <= mu r.
/// Balanced: rho * tau if r > mu t, rho / tau if t > mu r.
enum class RhoRule { AsPrinted, Balanced, Fixed };

struct AdmmOptions {
  double rho0 = 1.0;
  std::size_t max_iters = 500;
  double tol = 1e-6;  // on both r and t
  double mu = 10.0;
  double tau_incr = 2.0;
  double tau_decr = 2.0;
  double rho_min = 1e-4;
  double rho_max = 1e4;
  RhoRule rho_rule = RhoRule::Balanced;
  /// Multiply y by rho_new / rho_old whenever rho changes.
  bool rescale_duals = false;
  double qp_tol = 1e-8;
  std::size_t qp_max_iters = 10000;
  /// Subproblems up to this dimension use the dense active-set solver.
  std::size_t active_set_max_dim = 64;
  std::size_t cap = kDefaultCycleCap;
};

struct AdmmState {
  std::vector<CycleDistribution> v;        // per factor
  std::vector<double> w;                   // per variable, inlier probability
  std::vector<std::vector<double>> y;      // per factor, per member slot
  double rho = 1.0;
  double r_sq = 0.0;
  double t_sq = 0.0;
};

/// P_c v: inlier marginal of each member (row k sums masks with bit k clear).
inline std::vector<double> marginalize(std::span<const double> v, std::size_t arity) {
  std::vector<double> out(arity, 0.0);
  for (std::size_t mask = 0; mask < v.size(); ++mask) {
    for (std::size_t k = 0; k < arity; ++k) {
      if (!((mask >> k) & 1U)) out[k] += v[mask];
    }
  }
  return out;
}

/// P_c^T u.
inline std::vector<double> marginalize_transpose(std::span<const double> u, std::size_t arity) {
  const std::size_t n = std::size_t{1} << arity;
  std::vector<double> out(n, 0.0);
  for (std::size_t mask = 0; mask < n; ++mask) {
    double acc = 0.0;
    for (std::size_t k = 0; k < arity; ++k) {
      if (!((mask >> k) & 1U)) acc += u[k];
    }
    out[mask] = acc;
  }
  return out;
}

/// Largest eigenvalue of P_c^T P_c: 2^(k-2) (k + 1).
inline double marginalization_norm_sq(std::size_t arity) {
  if (arity == 0) return 0.0;
  return std::ldexp(static_cast<double>(arity + 1), static_cast<int>(arity) - 2);
}

/// argmin over the simplex of ||v - v_hat||^2 + y'Pv + rho/2 ||Pv - w||^2.
/// `warm` (optional) seeds the solver.
inline SimplexQpResult solve_cycle_subproblem_detailed(std::span<const double> v_hat, std::span<const double> y,
                                                      std::span<const double> w, double rho,
                                                      std::span<const double> warm = {},
                                                      const AdmmOptions& opts = {}) {
  const std::size_t n = v_hat.size();
  const std::size_t arity = y.size();
  // Linear term g = -2 v_hat + P'y - rho P'w.
  std::vector<double> yw(arity);
  for (std::size_t k = 0; k < arity; ++k) yw[k] = y[k] - rho * w[k];
  const auto pt = marginalize_transpose(yw, arity);
  std::span<const double> start = warm.empty() ? v_hat : warm;

  if (n <= opts.active_set_max_dim) {
    const auto dim = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd h(dim, dim);
    const std::size_t full = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto both_in = static_cast<double>(std::popcount(~(i | j) & full));
        h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (i == j ? 2.0 : 0.0) + rho * both_in;
      }
    }
    Eigen::VectorXd g(dim);
    for (std::size_t i = 0; i < n; ++i) g[static_cast<Eigen::Index>(i)] = -2.0 * v_hat[i] + pt[i];
    auto res = solve_simplex_qp_active_set(h, g, start);
    if (res.kkt_residual <= opts.qp_tol) return res;
    start = {};  // fall through to the first-order solver from v_hat
  }

  auto gradient = [&](std::span<const double> v, std::span<double> out) {
    const auto pv = marginalize(v, arity);
    std::vector<double> u(arity);
    for (std::size_t k = 0; k < arity; ++k) u[k] = rho * pv[k];
    const auto ptu = marginalize_transpose(u, arity);
    for (std::size_t i = 0; i < n; ++i) out[i] = 2.0 * (v[i] - v_hat[i]) + pt[i] + ptu[i];
  };
  const double lipschitz = 2.0 + rho * marginalization_norm_sq(arity);
  return solve_simplex_qp_fista(gradient, lipschitz, start.empty() ? v_hat : start, opts.qp_tol, opts.qp_max_iters);
}

inline CycleDistribution solve_cycle_subproblem(std::span<const double> v_hat, std::span<const double> y,
                                                std::span<const double> w, double rho,
                                                const AdmmOptions& opts = {}) {
  return {solve_cycle_subproblem_detailed(v_hat, y, w, rho, {}, opts).v};
}

/// w_e = clamp(mean over incident cycles of (p_{e,c}' v_c + y_c[e] / rho), 0, 1).
/// Variables in no cycle keep their current value.
inline std::vector<double> update_w(const FactorGraph& fg, const AdmmState& s) {
  std::vector<double> sum(fg.num_variables(), 0.0);
  std::vector<std::size_t> count(fg.num_variables(), 0);
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    const auto& vars = fg.factor_vars[f];
    const auto pv = marginalize(s.v[f].values, vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) {
      sum[vars[k]] += pv[k] + s.y[f][k] / s.rho;
      ++count[vars[k]];
    }
  }
  std::vector<double> w = s.w;
  for (std::size_t e = 0; e < w.size(); ++e) {
    if (count[e] > 0) w[e] = std::clamp(sum[e] / static_cast<double>(count[e]), 0.0, 1.0);
  }
  return w;
}

/// y_c += rho (P_c v_c - w_c), using the current (freshly updated) w.
inline std::vector<std::vector<double>> update_duals(const FactorGraph& fg, const AdmmState& s) {
  auto y = s.y;
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    const auto& vars = fg.factor_vars[f];
    const auto pv = marginalize(s.v[f].values, vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) y[f][k] += s.rho * (pv[k] - s.w[vars[k]]);
  }
  return y;
}

struct Residuals {
  double primal = 0.0;  // r = sum_c ||P_c v_c - w_c||^2
  double dual = 0.0;    // t = rho^2 sum_e deg(e) (w_e - w_e_prev)^2
};

inline Residuals residuals(const FactorGraph& fg, const AdmmState& s, std::span<const double> prev_w) {
  Residuals r;
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    const auto& vars = fg.factor_vars[f];
    const auto pv = marginalize(s.v[f].values, vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) {
      const double d = pv[k] - s.w[vars[k]];
      r.primal += d * d;
    }
  }
  for (std::size_t e = 0; e < fg.num_variables(); ++e) {
    const double d = s.w[e] - prev_w[e];
    r.dual += static_cast<double>(fg.var_factors[e].size()) * d * d;
  }
  r.dual *= s.rho * s.rho;
  return r;
}

/// rho * tau_incr if r <= mu t, rho / tau_decr if t <= mu r, unchanged when
/// both or neither hold.
inline double update_rho(double rho, double r, double t, double mu, double tau_incr, double tau_decr) {
  const bool grow = r <= mu * t;
  const bool shrink = t <= mu * r;
  if (grow && !shrink) return rho * tau_incr;
  if (shrink && !grow) return rho / tau_decr;
  return rho;
}

/// Residual balancing in the usual direction: grow rho while the primal
/// residual dominates, shrink it while the dual residual dominates.
inline double update_rho_balanced(double rho, double r, double t, double mu, double tau_incr, double tau_decr) {
  if (r > mu * t) return rho * tau_incr;
  if (t > mu * r) return rho / tau_decr;
  return rho;
}

struct AdmmIterate {
  std::size_t iteration = 0;
  double r = 0.0;
  double t = 0.0;
  double rho = 0.0;  // value used during this iteration
  const AdmmState* state = nullptr;
};

struct AdmmResult {
  Marginals marginals;
  AdmmState state;
};

using AdmmObserver = std::function<void(const AdmmIterate&)>;

inline AdmmResult run_admm(const FactorGraph& fg, const ModelParams& p, const AdmmOptions& opts = {},
                           const AdmmObserver& observer = {}) {
  const std::size_t nf = fg.num_factors();
  std::vector<CycleDistribution> v_hat;
  v_hat.reserve(nf);
  for (const auto& f : fg.factors) v_hat.push_back(cycle_conditional(f, p, opts.cap));

  AdmmState s;
  s.rho = std::clamp(opts.rho0, opts.rho_min, opts.rho_max);
  s.v = v_hat;
  s.y.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) s.y[f].assign(fg.factor_vars[f].size(), 0.0);
  s.w = variable_priors(fg, p);
  {
    std::vector<double> sum(fg.num_variables(), 0.0);
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& vars = fg.factor_vars[f];
      const auto pv = marginalize(v_hat[f].values, vars.size());
      for (std::size_t k = 0; k < vars.size(); ++k) sum[vars[k]] += pv[k];
    }
    for (std::size_t e = 0; e < fg.num_variables(); ++e) {
      if (fg.is_covered(e)) s.w[e] = sum[e] / static_cast<double>(fg.var_factors[e].size());
    }
  }

  bool converged = nf == 0;
  std::size_t it = 0;
  while (!converged && it < opts.max_iters) {
    ++it;
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& vars = fg.factor_vars[f];
      std::vector<double> wc(vars.size());
      for (std::size_t k = 0; k < vars.size(); ++k) wc[k] = s.w[vars[k]];
      s.v[f].values = solve_cycle_subproblem_detailed(v_hat[f].values, s.y[f], wc, s.rho, s.v[f].values, opts).v;
    }
    const std::vector<double> prev_w = s.w;
    s.w = update_w(fg, s);
    s.y = update_duals(fg, s);
    const Residuals res = residuals(fg, s, prev_w);
    s.r_sq = res.primal;
    s.t_sq = res.dual;
    if (observer) observer({it, res.primal, res.dual, s.rho, &s});
    if (res.primal < opts.tol && res.dual < opts.tol) {
      converged = true;
      break;
    }
    double next = s.rho;
    if (opts.rho_rule == RhoRule::AsPrinted) {
      next = update_rho(s.rho, res.primal, res.dual, opts.mu, opts.tau_incr, opts.tau_decr);
    } else if (opts.rho_rule == RhoRule::Balanced) {
      next = update_rho_balanced(s.rho, res.primal, res.dual, opts.mu, opts.tau_incr, opts.tau_decr);
    }
    next = std::clamp(next, opts.rho_min, opts.rho_max);
    if (opts.rescale_duals && next != s.rho) {
      for (auto& yc : s.y) {
        for (double& x : yc) x *= next / s.rho;
      }
    }
    s.rho = next;
  }

  AdmmResult out;
  out.marginals.inlier = s.w;
  out.marginals.cycles = s.v;
  out.marginals.converged = converged;
  out.marginals.iterations = it;
  out.state = std::move(s);
  return out;
}

}  // namespace loopvet
