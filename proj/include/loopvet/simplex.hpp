#pragma once

// Quadratic programs over the probability simplex {v >= 0, sum v = 1}.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace loopvet {

/// Euclidean projection onto the probability simplex (sort-based, O(n log n)).
inline std::vector<double> project_to_simplex(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> u(x.begin(), x.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = std::max(x[k] - theta, 0.0);
  return out;
}

/// Natural KKT residual ||v - proj(v - grad)||_inf; zero exactly at the optimum.
inline double simplex_kkt_residual(std::span<const double> v, std::span<const double> grad) {
  std::vector<double> step(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) step[k] = v[k] - grad[k];
  const auto p = project_to_simplex(step);
  double r = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) r = std::max(r, std::abs(v[k] - p[k]));
  return r;
}

struct SimplexQpResult {
  std::vector<double> v;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
};

/// min 1/2 v'Hv + g'v over the simplex, dense H positive definite.
/// Primal active-set method from a feasible start; exact up to round-off.
inline SimplexQpResult solve_simplex_qp_active_set(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                                                   std::span<const double> start, std::size_t max_iters = 0) {
  const auto n = static_cast<Eigen::Index>(g.size());
  if (max_iters == 0) max_iters = 20 * static_cast<std::size_t>(n) + 100;
  const std::vector<double> feasible = project_to_simplex(start);
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(feasible.data(), n);
  std::vector<char> active(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = v[i] <= 0.0;
  if (std::all_of(active.begin(), active.end(), [](char a) { return a; })) {
    v.setConstant(1.0 / static_cast<double>(n));
    std::fill(active.begin(), active.end(), 0);
  }

  SimplexQpResult res;
  for (std::size_t it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) free.push_back(i);
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    const Eigen::VectorXd grad = h * v + g;

    // [H_FF  -1] [d ]   [-grad_F]
    // [1'     0] [nu] = [   0   ]
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + 1, nf + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + 1);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index b = 0; b < nf; ++b) kkt(a, b) = h(free[a], free[b]);
      kkt(a, nf) = -1.0;
      kkt(nf, a) = 1.0;
      rhs[a] = -grad[free[a]];
    }
    const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
    const double nu = sol[nf];
    double dnorm = 0.0;
    for (Eigen::Index a = 0; a < nf; ++a) dnorm = std::max(dnorm, std::abs(sol[a]));

    if (dnorm <= 1e-15) {
      // Stationary on the current face: check bound multipliers.
      Eigen::Index worst = -1;
      double most_negative = -1e-13;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        const double lambda = grad[i] - nu;
        if (lambda < most_negative) {
          most_negative = lambda;
          worst = i;
        }
      }
      if (worst < 0) break;
      active[static_cast<std::size_t>(worst)] = 0;
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const double d = sol[a];
      if (d < 0.0) {
        const double t = -v[free[a]] / d;
        if (t < alpha) {
          alpha = t;
          blocking = free[a];
        }
      }
    }
    for (Eigen::Index a = 0; a < nf; ++a) v[free[a]] += alpha * sol[a];
    if (blocking >= 0) {
      v[blocking] = 0.0;
      active[static_cast<std::size_t>(blocking)] = 1;
    }
  }

  for (Eigen::Index i = 0; i < n; ++i) v[i] = std::max(v[i], 0.0);
  v /= v.sum();
  res.v.assign(v.data(), v.data() + n);
  const Eigen::VectorXd grad = h * v + g;
  res.kkt_residual = simplex_kkt_residual(res.v, std::span<const double>(grad.data(), static_cast<std::size_t>(n)));
  return res;
}

/// Same problem through an implicit gradient: accelerated projected gradient
/// (FISTA with adaptive restart) and step 1/lipschitz.
inline SimplexQpResult solve_simplex_qp_fista(
    const std::function<void(std::span<const double>, std::span<double>)>& gradient, double lipschitz,
    std::span<const double> start, double tol, std::size_t max_iters) {
  const std::size_t n = start.size();
  std::vector<double> x = project_to_simplex(start);
  std::vector<double> y = x;
  std::vector<double> x_prev = x;
  std::vector<double> grad(n), step(n);
  double t = 1.0;
  SimplexQpResult res;
  const double eta = 1.0 / lipschitz;

  for (std::size_t it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    gradient(x, grad);
    res.kkt_residual = simplex_kkt_residual(x, grad);
    if (res.kkt_residual <= tol) break;

    gradient(y, grad);
    for (std::size_t k = 0; k < n; ++k) step[k] = y[k] - eta * grad[k];
    x_prev.swap(x);
    x = project_to_simplex(step);

    double restart = 0.0;
    for (std::size_t k = 0; k < n; ++k) restart += (y[k] - x[k]) * (x[k] - x_prev[k]);
    if (restart > 0.0) {
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    for (std::size_t k = 0; k < n; ++k) y[k] = x[k] + beta * (x[k] - x_prev[k]);
    t = t_next;
  }
  gradient(x, grad);
  res.kkt_residual = simplex_kkt_residual(x, grad);
  res.v = std::move(x);
  return res;
}

}  // namespace loopvet
