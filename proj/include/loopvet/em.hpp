#pragma once

// Expectation-maximization over {sigma, sigma_bar, priors}. The E-step is
// any of the inference back-ends; sigma and sigma_bar are chosen by grid
// search, priors are set to the inlier responsibilities.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopvet/infer_admm.hpp"
#include "loopvet/infer_bp.hpp"
#include "loopvet/infer_exact.hpp"
#include "loopvet/model.hpp"

namespace loopvet {

enum class InferenceMethod { BP, ADMM, Exact };

inline std::string to_string(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::BP: return "bp";
    case InferenceMethod::ADMM: return "admm";
    case InferenceMethod::Exact: return "exact";
  }
  return "?";
}

inline InferenceMethod parse_method(const std::string& s) {
  if (s == "bp") return InferenceMethod::BP;
  if (s == "admm") return InferenceMethod::ADMM;
  if (s == "exact") return InferenceMethod::Exact;
  throw std::invalid_argument("unknown inference method '" + s + "' (expected bp, admm or exact)");
}

inline constexpr double kPriorClamp = 1e-12;

/// sigma in 0.5 deg steps up to 5 deg, sigma_bar in 5 deg steps up to 45 deg.
inline std::vector<double> default_sigma_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 10; ++k) g.push_back(deg2rad(0.5 * k));
  return g;
}

inline std::vector<double> default_sigma_bar_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 9; ++k) g.push_back(deg2rad(5.0 * k));
  return g;
}

struct EmConfig {
  std::vector<double> sigma_grid = default_sigma_grid();
  std::vector<double> sigma_bar_grid = default_sigma_bar_grid();
  std::size_t max_rounds = 20;
  InferenceMethod inference = InferenceMethod::Exact;
  double ll_tol = 1e-6;
  bool freeze_priors = false;
  /// Include -ln psi_c in the sigma objective and the reported likelihood.
  /// With it the observed likelihood is nearly flat in (sigma, sigma_bar), so
  /// it is off unless asked for.
  bool include_psi = false;
  /// Report the observed-data log-likelihood each round (enumeration; small graphs).
  bool track_log_likelihood = false;
  BpOptions bp{};
  AdmmOptions admm{};

  void validate() const {
    auto check = [](const std::vector<double>& g, const char* name) {
      if (g.empty()) throw std::invalid_argument(std::string(name) + " is empty");
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(g[k] > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
        if (k > 0 && !(g[k] > g[k - 1])) throw std::invalid_argument(std::string(name) + " must be strictly ascending");
      }
    };
    check(sigma_grid, "sigma grid");
    check(sigma_bar_grid, "sigma_bar grid");
    if (sigma_bar_grid.back() <= sigma_grid.front()) {
      throw std::invalid_argument("no grid pair satisfies sigma_bar > sigma");
    }
  }
};

struct EmRound {
  std::size_t round = 0;
  ModelParams params;   // estimate after this round's M-step
  double q = 0.0;       // expected complete-data log-likelihood at `params`
  double log_likelihood = std::numeric_limits<double>::quiet_NaN();
  bool inference_converged = true;
  std::size_t inference_iterations = 0;
  double mean_inlier = 0.0;
};

struct EmTrace {
  double initial_log_likelihood = std::numeric_limits<double>::quiet_NaN();
  std::vector<EmRound> rounds;
};

struct EmResult {
  ModelParams params;
  EmTrace trace;
  Marginals marginals;  // at the final parameters
};

inline Marginals e_step(const FactorGraph& fg, const ModelParams& p, InferenceMethod method,
                        const BpOptions& bp = {}, const AdmmOptions& admm = {}) {
  switch (method) {
    case InferenceMethod::BP: return run_bp(fg, p, bp);
    case InferenceMethod::ADMM: return run_admm(fg, p, admm).marginals;
    case InferenceMethod::Exact: return infer_exact(fg, p);
  }
  throw std::invalid_argument("e_step: bad method");
}

/// pi_e = gamma_e for every loop-closure variable, clamped away from 0 and 1.
/// Ego edges are not variables and keep prior 1.
inline ModelParams m_step_priors(const FactorGraph& fg, const Marginals& m, ModelParams p) {
  for (std::size_t v = 0; v < fg.num_variables(); ++v) {
    p.priors[fg.variables[v]] = std::clamp(m.inlier[v], kPriorClamp, 1.0 - kPriorClamp);
  }
  return p;
}

/// sum_c [ sum_s gamma_c(s) ln p(z_c | s) - ln psi_c ], evaluated on outlier
/// counts.
inline double sigma_objective(const FactorGraph& fg, const std::vector<std::vector<double>>& by_count, double sigma,
                              double sigma_bar, bool include_psi) {
  double acc = 0.0;
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    const auto& fac = fg.factors[f];
    for (std::size_t s = 0; s < by_count[f].size(); ++s) {
      if (by_count[f][s] == 0.0) continue;
      acc += by_count[f][s] * log_count_likelihood(fac.z, fac.length(), s, sigma, sigma_bar);
    }
    if (include_psi) acc -= log_psi(fac.z, fac.length(), fac.arity(), sigma, sigma_bar);
  }
  return acc;
}

/// Same objective summed mask by mask.
inline double sigma_objective_naive(const FactorGraph& fg, const Marginals& m, double sigma, double sigma_bar,
                                    bool include_psi) {
  double acc = 0.0;
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    const auto& fac = fg.factors[f];
    const auto& vals = m.cycles[f].values;
    for (std::size_t mask = 0; mask < vals.size(); ++mask) {
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      acc += vals[mask] * log_count_likelihood(fac.z, fac.length(), s, sigma, sigma_bar);
    }
    if (include_psi) acc -= log_psi(fac.z, fac.length(), fac.arity(), sigma, sigma_bar);
  }
  return acc;
}

struct SigmaChoice {
  double sigma = 0.0;
  double sigma_bar = 0.0;
  double objective = -std::numeric_limits<double>::infinity();
};

/// Grid argmax; ties go to the smaller sigma, then the smaller sigma_bar.
inline SigmaChoice m_step_sigmas(const FactorGraph& fg, const Marginals& m, const EmConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<double>> by_count;
  by_count.reserve(fg.num_factors());
  for (const auto& c : m.cycles) by_count.push_back(c.by_count());
  SigmaChoice best;
  bool found = false;
  for (double s : cfg.sigma_grid) {
    for (double sb : cfg.sigma_bar_grid) {
      if (!(sb > s)) continue;
      const double obj = sigma_objective(fg, by_count, s, sb, cfg.include_psi);
      if (!found || obj > best.objective) {
        best = {s, sb, obj};
        found = true;
      }
    }
  }
  return best;
}

/// Expected complete-data log-likelihood Q(p | gamma).
inline double expected_log_likelihood(const FactorGraph& fg, const Marginals& m, const ModelParams& p,
                                      bool include_psi) {
  double acc = 0.0;
  for (std::size_t v = 0; v < fg.num_variables(); ++v) {
    const double pi = p.prior(fg.variables[v]);
    const double g = m.inlier[v];
    if (g > 0.0) acc += g * log_prior_term(pi, false);
    if (g < 1.0) acc += (1.0 - g) * log_prior_term(pi, true);
  }
  std::vector<std::vector<double>> by_count;
  for (const auto& c : m.cycles) by_count.push_back(c.by_count());
  return acc + sigma_objective(fg, by_count, p.sigma, p.sigma_bar, include_psi);
}

inline EmResult run_em(const FactorGraph& fg, const ModelParams& init, const EmConfig& cfg) {
  cfg.validate();
  init.validate();
  const bool track = cfg.track_log_likelihood || cfg.inference == InferenceMethod::Exact;
  auto loglik = [&](const ModelParams& p) {
    if (!track) return std::numeric_limits<double>::quiet_NaN();
    return observed_log_likelihood(fg, p, cfg.include_psi);
  };

  EmResult res;
  res.params = init;
  res.trace.initial_log_likelihood = loglik(init);
  double prev_q = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 1; r <= cfg.max_rounds; ++r) {
    const Marginals m = e_step(fg, res.params, cfg.inference, cfg.bp, cfg.admm);
    ModelParams next = cfg.freeze_priors ? res.params : m_step_priors(fg, m, res.params);
    const SigmaChoice sc = m_step_sigmas(fg, m, cfg);
    next.sigma = sc.sigma;
    next.sigma_bar = sc.sigma_bar;

    EmRound round;
    round.round = r;
    round.params = next;
    round.q = expected_log_likelihood(fg, m, next, cfg.include_psi);
    round.log_likelihood = loglik(next);
    round.inference_converged = m.converged;
    round.inference_iterations = m.iterations;
    double sum = 0.0;
    for (double g : m.inlier) sum += g;
    round.mean_inlier = m.inlier.empty() ? 0.0 : sum / static_cast<double>(m.inlier.size());
    res.trace.rounds.push_back(round);

    res.params = std::move(next);
    if (std::abs(round.q - prev_q) < cfg.ll_tol) break;
    prev_q = round.q;
  }
  res.marginals = e_step(fg, res.params, cfg.inference, cfg.bp, cfg.admm);
  return res;
}

}  // namespace loopvet
