#include <gtest/gtest.h>

#include <random>

#include "loopvet/cycles.hpp"
#include "support.hpp"

namespace loopvet {
namespace {

using testing::make_graph;
using testing::rot;

TEST(Cycles, TriangleHasOneCycle) {
  const PoseGraph g = make_graph(3, {{0, 1}, {1, 2}, {2, 0}});
  const CycleBasis b = minimum_cycle_basis(g);
  ASSERT_EQ(b.cycles.size(), 1U);
  EXPECT_EQ(b.cycles[0].length(), 3U);
  EXPECT_NO_THROW(validate_cycle(g, b.cycles[0]));
}

TEST(Cycles, TwoTrianglesBeatOuterSquare) {
  // 0-1-2 and 0-2-3 share the chord 0-2.
  const PoseGraph g = make_graph(4, {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 0}});
  const CycleBasis b = minimum_cycle_basis(g);
  ASSERT_EQ(b.cycles.size(), 2U);
  EXPECT_EQ(b.cycles[0].length(), 3U);
  EXPECT_EQ(b.cycles[1].length(), 3U);
  EXPECT_EQ(b.total_weight(), 6U);
}

TEST(Cycles, TreeHasEmptyBasis) {
  const PoseGraph g = make_graph(5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}});
  EXPECT_TRUE(minimum_cycle_basis(g).cycles.empty());
  EXPECT_TRUE(minimum_cycle_basis(PoseGraph{}).cycles.empty());
}

TEST(Cycles, ParallelEdgesFormTwoCycle) {
  const PoseGraph g = make_graph(2, {{0, 1}, {1, 0}});
  const CycleBasis b = minimum_cycle_basis(g);
  ASSERT_EQ(b.cycles.size(), 1U);
  EXPECT_EQ(b.cycles[0].length(), 2U);
  EXPECT_NO_THROW(validate_cycle(g, b.cycles[0]));
}

TEST(Cycles, EqualWeightChoiceIsDeterministic) {
  // Three length-2 paths between nodes 0 and 1: three 4-cycles, any two form
  // a minimum basis.
  const PoseGraph g = make_graph(5, {{0, 2}, {2, 1}, {0, 3}, {3, 1}, {0, 4}, {4, 1}});
  const CycleBasis b = minimum_cycle_basis(g);
  ASSERT_EQ(b.cycles.size(), 2U);
  EXPECT_EQ(b.total_weight(), 8U);
  EXPECT_EQ(b.cycles[0].sorted_edge_ids(), (std::vector<EdgeId>{0, 1, 2, 3}));
  const CycleBasis again = minimum_cycle_basis(g);
  for (std::size_t k = 0; k < b.cycles.size(); ++k) EXPECT_EQ(again.cycles[k].steps, b.cycles[k].steps);
}

TEST(Cycles, IdentityCycleRotation) {
  const PoseGraph g = make_graph(3, {{0, 1}, {1, 2}, {2, 0}});
  const Cycle c = minimum_cycle_basis(g).cycles[0];
  EXPECT_TRUE(cycle_rotation(g, c).isApprox(so3::Matrix3::Identity()));
  EXPECT_EQ(cycle_error(g, c), 0.0);
}

TEST(Cycles, RejectsInvalidWalks) {
  const PoseGraph g = make_graph(3, {{0, 1}, {1, 2}, {2, 0}});
  Cycle back_and_forth;
  back_and_forth.steps = {{0, Direction::Forward}, {0, Direction::Reverse}};
  EXPECT_THROW(validate_cycle(g, back_and_forth), std::invalid_argument);
  Cycle open;
  open.steps = {{0, Direction::Forward}, {1, Direction::Forward}};
  EXPECT_THROW(validate_cycle(g, open), std::invalid_argument);
  Cycle broken;
  broken.steps = {{0, Direction::Forward}, {2, Direction::Forward}, {1, Direction::Forward}};
  EXPECT_THROW(validate_cycle(g, broken), std::invalid_argument);
  EXPECT_THROW(validate_cycle(g, Cycle{}), std::invalid_argument);
  Cycle unknown;
  unknown.steps = {{9, Direction::Forward}};
  EXPECT_THROW(validate_cycle(g, unknown), std::invalid_argument);
}

TEST(Cycles, NoiseFreeSyntheticCycleIsIdentity) {
  so3::Rng rng(5);
  std::vector<so3::RotationMatrix> truth;
  for (int i = 0; i < 5; ++i) truth.push_back(so3::exp_so3(2.0 * so3::random_unit_vector(rng)));
  const std::vector<std::pair<NodeId, NodeId>> ends{{0, 1}, {2, 1}, {2, 3}, {3, 4}, {0, 4}};
  std::vector<so3::RotationMatrix> rots;
  for (auto [a, b] : ends) rots.push_back(truth[b] * truth[a].transpose());
  const PoseGraph g = make_graph(5, ends, rots);
  const Cycle c = minimum_cycle_basis(g).cycles.at(0);
  EXPECT_LT((cycle_rotation(g, c) - so3::Matrix3::Identity()).norm(), 1e-12);
}

TEST(Cycles, SinglePerturbationPassesThrough) {
  const PoseGraph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}},
                                 {so3::Matrix3::Identity(), rot(0.3, {1, 2, 3}), so3::Matrix3::Identity(),
                                  so3::Matrix3::Identity()});
  EXPECT_NEAR(cycle_error(g, minimum_cycle_basis(g).cycles[0]), 0.3, 1e-12);
}

TEST(Cycles, ErrorInvariantUnderShiftAndReversal) {
  so3::Rng rng(8);
  std::vector<so3::RotationMatrix> rots;
  for (int k = 0; k < 5; ++k) rots.push_back(so3::exp_so3(0.4 * so3::random_unit_vector(rng)));
  const PoseGraph g = make_graph(5, {{0, 1}, {1, 2}, {3, 2}, {3, 4}, {4, 0}}, rots);
  const Cycle c = minimum_cycle_basis(g).cycles.at(0);
  const double z = cycle_error(g, c);
  EXPECT_GT(z, 0.0);
  for (std::size_t shift = 1; shift < c.length(); ++shift) {
    Cycle s;
    for (std::size_t k = 0; k < c.length(); ++k) s.steps.push_back(c.steps[(k + shift) % c.length()]);
    EXPECT_NEAR(cycle_error(g, s), z, 1e-12);
  }
  Cycle r;
  for (auto it = c.steps.rbegin(); it != c.steps.rend(); ++it) {
    r.steps.push_back({it->edge, it->dir == Direction::Forward ? Direction::Reverse : Direction::Forward});
  }
  EXPECT_NEAR(cycle_error(g, r), z, 1e-12);
}

TEST(Cycles, MatchesExhaustiveMinimumOnSmallGraphs) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto sg = testing::random_small_graph(rng);
    const PoseGraph g = testing::to_pose_graph(sg);
    const CycleBasis b = minimum_cycle_basis(g);
    const auto oracle = testing::brute_force_min_basis(sg);
    EXPECT_EQ(b.cycles.size(), oracle.dimension) << trial;
    EXPECT_EQ(b.cycles.size(), cycle_space_dimension(g)) << trial;
    EXPECT_EQ(b.total_weight(), oracle.weight) << trial;
    std::vector<BitVector> rows;
    for (const auto& c : b.cycles) {
      EXPECT_NO_THROW(validate_cycle(g, c));
      rows.push_back(incidence_vector(g, c));
    }
    EXPECT_EQ(gf2_rank(rows), b.cycles.size()) << trial;
  }
}

TEST(Cycles, CoversEveryEdgeOnSomeCycle) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto sg = testing::random_small_graph(rng);
    const PoseGraph g = testing::to_pose_graph(sg);
    const CycleBasis b = minimum_cycle_basis(g);
    // An edge lies on a cycle iff removing it leaves the cycle space smaller.
    for (std::size_t e = 0; e < sg.edges.size(); ++e) {
      auto without = sg;
      without.edges.erase(without.edges.begin() + static_cast<long>(e));
      const bool on_cycle = testing::brute_force_min_basis(without).dimension < b.cycles.size();
      EXPECT_EQ(b.covered_lc_edges.count(static_cast<EdgeId>(e)) == 1, on_cycle) << trial << " edge " << e;
    }
  }
}

TEST(Cycles, SynthBasisCyclesHoldTwoLoopClosures) {
  SynthSpec s;
  s.m_lc = 20;
  s.num_outliers = 5;
  s.seed = 3;
  const PoseGraph g = generate(s);
  const CycleBasis b = minimum_cycle_basis(g);
  EXPECT_EQ(b.cycles.size(), cycle_space_dimension(g));
  for (const auto& c : b.cycles) {
    std::size_t lc = 0;
    for (const auto& st : c.steps) lc += g.edge(st.edge).is_loop_closure() ? 1 : 0;
    EXPECT_GE(lc, 2U);
  }
}

}  // namespace
}  // namespace loopvet
