#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "loopvet/model.hpp"
#include "support.hpp"

namespace loopvet {
namespace {

CycleFactor factor(std::size_t n_fixed, std::vector<EdgeId> lc, double z) {
  CycleFactor f;
  f.lc_members = std::move(lc);
  f.n_fixed = n_fixed;
  f.z = z;
  return f;
}

// Written out from the density: -3 ln v - z^2/(2 v^2) - ln int_0^pi exp(-t^2/(2 v^2)) dt,
// the integral by Simpson's rule.
double reference_loglik(double z, double v) {
  const int n = 20000;
  const double h = std::numbers::pi / n;
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double t = k * h;
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * std::exp(-t * t / (2 * v * v));
  }
  acc *= h / 3.0;
  return -3.0 * std::log(v) - z * z / (2 * v * v) - std::log(acc);
}

TEST(Model, MixtureStdExamples) {
  EXPECT_NEAR(mixture_std(3, 0, 0.03, 0.3), 0.05196, 1e-5);
  EXPECT_NEAR(mixture_std(3, 1, 0.03, 0.3), 0.30299, 1e-5);
  EXPECT_NEAR(mixture_std(factor(2, {4}, 0.0), 1, ModelParams{0.03, 0.3, {}}), std::sqrt(0.0918), 1e-15);
  EXPECT_THROW(mixture_std(factor(2, {4}, 0.0), 2, ModelParams{0.03, 0.3, {}}), std::out_of_range);
}

TEST(Model, MixtureStdIncreasesWithOutliers) {
  for (std::size_t s = 0; s < 6; ++s) EXPECT_LT(mixture_std(6, s, 0.03, 0.3), mixture_std(6, s + 1, 0.03, 0.3));
}

TEST(Model, LikelihoodMatchesQuadrature) {
  for (double v : {0.02, 0.3, 1.0, 2.5}) {
    for (double z : {0.0, 0.1, 1.0, 3.0}) {
      EXPECT_NEAR(log_count_likelihood(z, 1, 0, v, 2 * v), reference_loglik(z, v), 1e-8) << v << ' ' << z;
    }
  }
}

TEST(Model, ZeroErrorFavorsAllInlier) {
  const ModelParams p{0.03, 0.3, {}};
  const CycleFactor f = factor(1, {0, 1, 2}, 0.0);
  const double v0 = mixture_std(f, 0, p);
  const double vc = mixture_std(f, 3, p);
  const double want = std::log(vc * vc * vc * angle_normalizer(vc)) - std::log(v0 * v0 * v0 * angle_normalizer(v0));
  const double got = log_cycle_likelihood(f, 0, p) - log_cycle_likelihood(f, 3, p);
  EXPECT_NEAR(got, want, 1e-12);
  EXPECT_GT(got, 0.0);
}

// Where a single outlier overtakes the all-inlier hypothesis when
// sigma_bar = 10 sigma: still behind at 3 inlier standard deviations, ahead
// at 5.
TEST(Model, OutlierHypothesisOvertakesBetweenThreeAndFiveStd) {
  const ModelParams p{0.01, 0.1, {}};
  for (std::size_t n_fixed = 0; n_fixed < 6; ++n_fixed) {
    CycleFactor f = factor(n_fixed, {0}, 0.0);
    const double v0 = mixture_std(f, 0, p);
    f.z = 3.0 * v0;
    EXPECT_GT(log_cycle_likelihood(f, 0, p), log_cycle_likelihood(f, 1, p)) << n_fixed;
    f.z = 5.0 * v0;
    EXPECT_LT(log_cycle_likelihood(f, 0, p), log_cycle_likelihood(f, 1, p)) << n_fixed;
  }
}

TEST(Model, LogPsiIsBinomialSum) {
  const double z = 0.2;
  double acc = 0.0;
  const double binom[] = {1, 4, 6, 4, 1};
  for (std::size_t s = 0; s <= 4; ++s) acc += binom[s] * std::exp(log_count_likelihood(z, 6, s, 0.03, 0.3));
  EXPECT_NEAR(log_psi(z, 6, 4, 0.03, 0.3), std::log(acc), 1e-12);
}

TEST(Model, CycleConditionalExamples) {
  ModelParams p{0.03, 0.3, {{0, 0.5}}};
  const auto single = cycle_conditional(factor(2, {0}, 0.0), p);
  EXPECT_GT(single.values[0], single.values[1]);
  EXPECT_NEAR(single.values[0] + single.values[1], 1.0, 1e-15);

  ModelParams sure{0.03, 0.3, {{0, 1.0}, {1, 1.0}, {2, 1.0}}};
  const auto certain = cycle_conditional(factor(0, {0, 1, 2}, 0.5), sure);
  EXPECT_EQ(certain.values[0], 1.0);

  ModelParams uniform{0.03, 0.3, {{0, 0.5}, {1, 0.5}, {2, 0.5}}};
  const auto d = cycle_conditional(factor(0, {0, 1, 2}, 0.2), uniform);
  EXPECT_NEAR(d.values[1], d.values[2], 1e-15);
  EXPECT_NEAR(d.values[1], d.values[4], 1e-15);
  EXPECT_NEAR(d.values[3], d.values[5], 1e-15);
  EXPECT_NEAR(d.values[3], d.values[6], 1e-15);
}

TEST(Model, CycleConditionalIsPermutationEquivariant) {
  ModelParams p{0.03, 0.3, {{10, 0.9}, {20, 0.3}, {30, 0.6}}};
  const auto a = cycle_conditional(factor(1, {10, 20, 30}, 0.25), p);
  const auto b = cycle_conditional(factor(1, {30, 10, 20}, 0.25), p);
  // Bit j of a's mask is member j of {10,20,30}; in b, 30 is bit 0, 10 bit 1, 20 bit 2.
  for (std::size_t mask = 0; mask < 8; ++mask) {
    const std::size_t m10 = mask & 1U, m20 = (mask >> 1) & 1U, m30 = (mask >> 2) & 1U;
    EXPECT_NEAR(a.values[mask], b.values[m30 | (m10 << 1) | (m20 << 2)], 1e-15);
  }
}

TEST(Model, AllInlierMassFallsAsErrorGrows) {
  ModelParams p{0.03, 0.3, {{0, 0.7}, {1, 0.4}}};
  double prev = 1.0;
  for (double z = 0.0; z <= 3.0; z += 0.01) {
    const double m0 = cycle_conditional(factor(2, {0, 1}, z), p).values[0];
    EXPECT_LE(m0, prev + 1e-15) << z;
    prev = m0;
  }
}

TEST(Model, CapIsEnforced) {
  std::vector<EdgeId> ids;
  for (EdgeId k = 0; k < 17; ++k) ids.push_back(k);
  EXPECT_THROW(cycle_conditional(factor(0, ids, 0.1), ModelParams{}), CycleCapError);
  const PoseGraph g = testing::make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  try {
    build_factor_graph(g, 3);
    FAIL();
  } catch (const CycleCapError& ex) {
    EXPECT_EQ(ex.cycle_id(), 0U);
    EXPECT_NE(std::string(ex.what()).find("cap"), std::string::npos);
  }
}

TEST(Model, JointDensityWithoutCyclesIsPriorSum) {
  const PoseGraph g = testing::make_graph(3, {{0, 1}, {1, 2}});
  const FactorGraph fg = build_factor_graph(g);
  ModelParams p{0.03, 0.3, {{0, 0.8}, {1, 0.3}}};
  EXPECT_NEAR(joint_log_density(fg, {false, true}, p), std::log(0.8) + std::log(0.7), 1e-15);
  EXPECT_THROW(joint_log_density(fg, {false}, p), std::invalid_argument);
}

TEST(Model, JointDensityIsLocal) {
  const PoseGraph g = testing::diamond_graph(4);
  const FactorGraph fg = testing::diamond_factor_graph(g);
  ModelParams p = ModelParams::from_graph(g, 0.03, 0.3);
  p.priors[0] = 0.8;
  std::vector<bool> x{false, true, false, false, true};
  auto y = x;
  y[0] = true;
  double expect = std::log(0.2) - std::log(0.8);
  for (auto f : fg.var_factors[0]) {
    std::size_t sx = 0;
    for (auto v : fg.factor_vars[f]) sx += x[v] ? 1 : 0;
    expect += log_cycle_likelihood(fg.factors[f], sx + 1, p) - log_cycle_likelihood(fg.factors[f], sx, p);
  }
  EXPECT_NEAR(joint_log_density(fg, y, p) - joint_log_density(fg, x, p), expect, 1e-12);
}

TEST(Model, OneCyclePosteriorIsCycleConditional) {
  so3::Rng rng(1);
  const PoseGraph g = testing::make_graph(
      3, {{0, 1}, {1, 2}, {2, 0}},
      {so3::exp_so3(0.02 * so3::random_unit_vector(rng)), so3::exp_so3(0.3 * so3::random_unit_vector(rng)),
       so3::Matrix3::Identity()});
  const FactorGraph fg = build_factor_graph(g);
  ModelParams p{0.03, 0.3, {{0, 0.6}, {1, 0.5}, {2, 0.9}}};
  const auto oracle = testing::brute_force_posterior(fg, p);
  const auto local = cycle_conditional(fg.factors[0], p);
  for (std::size_t mask = 0; mask < 8; ++mask) EXPECT_NEAR(oracle.cycles[0].values[mask], local.values[mask], 1e-12);
}

TEST(Model, FactorGraphStructure) {
  const PoseGraph g = testing::diamond_graph(0);
  const FactorGraph fg = testing::diamond_factor_graph(g);
  EXPECT_EQ(fg.num_variables(), 5U);
  EXPECT_EQ(fg.num_factors(), 3U);
  for (std::size_t f = 0; f < fg.num_factors(); ++f) {
    for (auto v : fg.factor_vars[f]) {
      const auto& vf = fg.var_factors[v];
      EXPECT_NE(std::find(vf.begin(), vf.end(), f), vf.end());
      EXPECT_EQ(fg.factor_vars[f][fg.slot_of(f, v)], v);
    }
  }
  std::size_t degree_sum = 0;
  for (const auto& vf : fg.var_factors) degree_sum += vf.size();
  EXPECT_EQ(degree_sum, 10U);  // two triangles and the outer 4-cycle
}

TEST(Model, ParamsValidate) {
  EXPECT_THROW((ModelParams{0.3, 0.03, {}}.validate()), std::invalid_argument);
  EXPECT_THROW((ModelParams{0.0, 0.03, {}}.validate()), std::invalid_argument);
  EXPECT_THROW((ModelParams{0.03, 0.3, {{1, 1.5}}}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((ModelParams{0.03, 0.3, {{1, 1.0}}}.validate()));
}

}  // namespace
}  // namespace loopvet
