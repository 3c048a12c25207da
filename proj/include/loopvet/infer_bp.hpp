#pragma once

// Damped loopy belief propagation (sum-product) on the loop-closure / cycle
// factor graph. Unary prior factors are folded into the variable side.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <vector>

#include "loopvet/model.hpp"

namespace loopvet {

/// Two-state message, index 0 = inlier, 1 = outlier; always normalised.
using Message = std::array<double, 2>;

inline constexpr double kMessageFloor = 1e-300;

inline Message normalized(Message m) {
  m[0] = std::max(m[0], kMessageFloor);
  m[1] = std::max(m[1], kMessageFloor);
  const double s = m[0] + m[1];
  return {m[0] / s, m[1] / s};
}

struct BpOptions {
  std::size_t max_iters = 200;
  double tol = 1e-6;
  double damping = 0.5;  // weight kept on the previous message
};

/// Messages indexed by (factor, slot), slot = position in the factor's member list.
struct MessageState {
  std::vector<std::vector<Message>> to_factor;  // n_{e -> f}
  std::vector<std::vector<Message>> to_var;     // m_{f -> e}
};

class BeliefPropagation {
 public:
  BeliefPropagation(const FactorGraph& fg, const ModelParams& p) : fg_(fg) {
    priors_ = variable_priors(fg, p);
    loglik_.resize(fg.num_factors());
    for (std::size_t f = 0; f < fg.num_factors(); ++f) {
      const auto& fac = fg.factors[f];
      auto& ll = loglik_[f];
      ll.resize(fac.arity() + 1);
      for (std::size_t s = 0; s <= fac.arity(); ++s) ll[s] = log_cycle_likelihood(fac, s, p);
      const double mx = *std::max_element(ll.begin(), ll.end());
      for (double& v : ll) v -= mx;  // positive rescaling of the factor
    }
    state_.to_factor.resize(fg.num_factors());
    state_.to_var.resize(fg.num_factors());
    for (std::size_t f = 0; f < fg.num_factors(); ++f) {
      state_.to_factor[f].assign(fg.factor_vars[f].size(), Message{0.5, 0.5});
      state_.to_var[f].assign(fg.factor_vars[f].size(), Message{0.5, 0.5});
    }
  }

  const MessageState& state() const { return state_; }
  MessageState& state() { return state_; }

  Message prior(std::size_t v) const { return normalized({priors_[v], 1.0 - priors_[v]}); }

  /// n_{e->f}: prior times every incoming factor message except f's.
  Message var_to_factor(std::size_t v, std::size_t f) const {
    Message acc = prior(v);
    for (auto g : fg_.var_factors[v]) {
      if (g == f) continue;
      const Message& m = state_.to_var[g][fg_.slot_of(g, v)];
      acc = normalized({acc[0] * m[0], acc[1] * m[1]});
    }
    return acc;
  }

  /// m_{f->e}: marginalises the cycle factor against the other members'
  /// messages. The factor depends on x_c only through the outlier count, so
  /// the sum reduces to a convolution over counts.
  Message factor_to_var(std::size_t f, std::size_t v) const {
    const std::size_t target = fg_.slot_of(f, v);
    const auto& msgs = state_.to_factor[f];
    std::vector<double> q{1.0};
    for (std::size_t j = 0; j < msgs.size(); ++j) {
      if (j == target) continue;
      std::vector<double> next(q.size() + 1, 0.0);
      for (std::size_t k = 0; k < q.size(); ++k) {
        next[k] += q[k] * msgs[j][0];
        next[k + 1] += q[k] * msgs[j][1];
      }
      q = std::move(next);
    }
    const auto& ll = loglik_[f];
    double in = 0.0;
    double out = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      in += q[k] * std::exp(ll[k]);
      out += q[k] * std::exp(ll[k + 1]);
    }
    return normalized({in, out});
  }

  /// One asynchronous sweep: factors in id order, then variables in id
  /// order. Returns the largest absolute message change.
  double sweep(double damping) {
    double change = 0.0;
    auto blend = [&](Message& old, const Message& fresh) {
      const Message next = normalized({damping * old[0] + (1.0 - damping) * fresh[0],
                                       damping * old[1] + (1.0 - damping) * fresh[1]});
      change = std::max({change, std::abs(next[0] - old[0]), std::abs(next[1] - old[1])});
      old = next;
    };
    for (std::size_t f = 0; f < fg_.num_factors(); ++f) {
      const auto& vars = fg_.factor_vars[f];
      for (std::size_t k = 0; k < vars.size(); ++k) blend(state_.to_var[f][k], factor_to_var(f, vars[k]));
    }
    for (std::size_t v = 0; v < fg_.num_variables(); ++v) {
      for (auto f : fg_.var_factors[v]) blend(state_.to_factor[f][fg_.slot_of(f, v)], var_to_factor(v, f));
    }
    return change;
  }

  /// b_e (inlier probability) and b_c.
  Marginals beliefs() const {
    Marginals out;
    out.inlier.resize(fg_.num_variables());
    for (std::size_t v = 0; v < fg_.num_variables(); ++v) {
      Message acc = prior(v);
      for (auto f : fg_.var_factors[v]) {
        const Message& m = state_.to_var[f][fg_.slot_of(f, v)];
        acc = normalized({acc[0] * m[0], acc[1] * m[1]});
      }
      out.inlier[v] = acc[0];
    }
    out.cycles.resize(fg_.num_factors());
    for (std::size_t f = 0; f < fg_.num_factors(); ++f) {
      const auto& msgs = state_.to_factor[f];
      const std::size_t n = std::size_t{1} << msgs.size();
      std::vector<double> logb(n);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t mask = 0; mask < n; ++mask) {
        double acc = loglik_[f][static_cast<std::size_t>(std::popcount(mask))];
        for (std::size_t k = 0; k < msgs.size(); ++k) acc += std::log(msgs[k][(mask >> k) & 1U]);
        logb[mask] = acc;
        mx = std::max(mx, acc);
      }
      CycleDistribution d{std::vector<double>(n)};
      double total = 0.0;
      for (std::size_t mask = 0; mask < n; ++mask) total += d.values[mask] = std::exp(logb[mask] - mx);
      for (double& x : d.values) x /= total;
      out.cycles[f] = std::move(d);
    }
    return out;
  }

 private:
  const FactorGraph& fg_;
  std::vector<double> priors_;
  std::vector<std::vector<double>> loglik_;  // per factor, per outlier count, max-shifted
  MessageState state_;
};

inline Marginals run_bp(const FactorGraph& fg, const ModelParams& p, const BpOptions& opts = {}) {
  BeliefPropagation bp(fg, p);
  bool converged = false;
  std::size_t it = 0;
  while (it < opts.max_iters) {
    ++it;
    if (bp.sweep(opts.damping) < opts.tol) {
      converged = true;
      break;
    }
  }
  if (fg.num_factors() == 0) converged = true;
  Marginals out = bp.beliefs();
  out.converged = converged;
  out.iterations = it;
  return out;
}

}  // namespace loopvet
