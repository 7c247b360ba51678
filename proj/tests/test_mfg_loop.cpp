#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "support.hpp"

using namespace mfgham;

namespace {

// Firm side replaced by a fixed price map.
struct ConstantMapEnv : AiyagariEnv {
  MeanFieldTerm target;
  ConstantMapEnv(AiyagariConfig c, MeanFieldTerm t) : AiyagariEnv(std::move(c)), target(t) {}
  MeanFieldTerm production_unclamped(const AggregateIndicators&) const { return target; }
  MeanFieldTerm production_phi(const AggregateIndicators&) const { return clamp(target); }
};

SolverConfig quick_solver(std::size_t rounds) {
  SolverConfig s;
  s.rounds = rounds;
  s.samples = 150;
  s.cfqi.iterations = 5;
  return s;
}

}  // namespace

TEST(Solve, ZeroRoundsReturnsStart) {
  const AiyagariEnv env(testing_support::small_economy());
  SolverConfig s = quick_solver(0);
  s.z0 = {9.0, 0.5};
  const EquilibriumResult r = solve(env, s, 1);
  ASSERT_EQ(r.trajectory.size(), 1u);
  EXPECT_EQ(r.trajectory[0], (MeanFieldTerm{5.0, 0.5}));
  EXPECT_TRUE(r.diagnostics.empty());
  ASSERT_TRUE(r.policy);
  EXPECT_NEAR(r.policy->density({1.0, 1}, 0.5), 1.0 / env.feasible(r.final_z(), {1.0, 1}).hi, 1e-12);
}

TEST(Solve, ConstantMapIsReachedInOneRound) {
  const ConstantMapEnv env(testing_support::small_economy(), {0.8, 0.15});
  const EquilibriumResult r = solve(env, quick_solver(3), 2);
  ASSERT_EQ(r.trajectory.size(), 4u);
  for (std::size_t t = 1; t < 4; ++t) EXPECT_EQ(r.trajectory[t], env.target);
  EXPECT_NEAR(r.diagnostics[0].delta_l1, 0.2 + 0.05, 1e-15);
  EXPECT_EQ(r.diagnostics[1].delta_l1, 0.0);
  EXPECT_EQ(contraction_diagnostics(r).geometric_mean, 0.0);
}

TEST(Solve, IteratesAreClampedToTheBox) {
  const ConstantMapEnv env(testing_support::small_economy(), {6.0, -0.2});
  const EquilibriumResult r = solve(env, quick_solver(2), 3);
  for (const auto& z : r.trajectory) EXPECT_TRUE(env.box().contains(z));
  EXPECT_EQ(r.final_z(), (MeanFieldTerm{5.0, 0.01}));
}

TEST(Solve, DivergenceIsReported) {
  const ConstantMapEnv far(testing_support::small_economy(), {1e4, 0.1});
  EXPECT_THROW(solve(far, quick_solver(2), 4), IterationDiverged);
  const ConstantMapEnv nan(testing_support::small_economy(), {std::numeric_limits<double>::quiet_NaN(), 0.1});
  EXPECT_THROW(solve(nan, quick_solver(2), 4), IterationDiverged);
}

TEST(Solve, RejectsEmptyRounds) {
  const AiyagariEnv env(testing_support::small_economy());
  SolverConfig s = quick_solver(1);
  s.samples = 0;
  EXPECT_THROW(solve(env, s, 5), EmptyData);
}

TEST(Solve, ReproducibleAndThreadInvariant) {
  const AiyagariEnv env(testing_support::small_economy());
  SolverConfig s = quick_solver(2);
  const EquilibriumResult a = solve(env, s, 6);
  s.threads = 2;
  s.cfqi.threads = 2;
  const EquilibriumResult b = solve(env, s, 6);
  const EquilibriumResult c = solve(env, quick_solver(2), 7);
  ASSERT_EQ(a.trajectory.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(a.trajectory[t], b.trajectory[t]);
  EXPECT_NE(a.trajectory[2], c.trajectory[2]);
  for (const auto& z : a.trajectory) EXPECT_TRUE(env.box().contains(z));
}

TEST(Solve, TrajectoryCsvReparses) {
  const AiyagariEnv env(testing_support::small_economy());
  const EquilibriumResult r = solve(env, quick_solver(2), 8);
  std::stringstream ss;
  write_trajectory_csv(ss, r);
  const CsvTable t = read_csv(ss);
  ASSERT_EQ(t.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(t.rows[i][t.column("t")], static_cast<double>(i));
    EXPECT_EQ(t.rows[i][t.column("wage")], r.trajectory[i].wage);
    EXPECT_EQ(t.rows[i][t.column("rent")], r.trajectory[i].rent);
  }
  EXPECT_EQ(t.rows[2][t.column("psi_K")], r.diagnostics[1].psi.capital);
}

TEST(Contraction, Examples) {
  const std::vector<MeanFieldTerm> halving{{0, 0}, {1, 0}, {1.5, 0}, {1.75, 0}, {1.875, 0}};
  const ContractionReport rep = contraction_diagnostics(halving);
  ASSERT_EQ(rep.ratios.size(), 3u);
  for (double r : rep.ratios) EXPECT_NEAR(r, 0.5, 1e-15);
  EXPECT_NEAR(rep.geometric_mean, 0.5, 1e-15);

  // Ratios 2 and 1/8 have geometric mean 1/2.
  const std::vector<MeanFieldTerm> mixed{{0, 0}, {0, 1}, {0, 3}, {0, 3.25}};
  EXPECT_NEAR(contraction_diagnostics(mixed).geometric_mean, 0.5, 1e-15);

  const std::vector<MeanFieldTerm> still{{1, 1}, {1, 1}, {1, 1}};
  EXPECT_EQ(contraction_diagnostics(still).geometric_mean, 0.0);
  EXPECT_THROW(contraction_diagnostics(std::vector<MeanFieldTerm>{{0, 0}, {1, 1}}), InsufficientTrajectory);
}

TEST(Oracle, ConstantMapSettlesImmediately) {
  const ConstantMapEnv env(AiyagariConfig{}, {0.8, 0.15});
  GridSpec g;
  g.b_points = 21;
  g.a_cells = 10;
  const OracleResult at = reference_equilibrium(env, g, env.target);
  EXPECT_EQ(at.rounds, 1u);
  EXPECT_EQ(at.z, env.target);
  const OracleResult from = reference_equilibrium(env, g, {1.0, 0.1});
  EXPECT_EQ(from.rounds, 2u);
  EXPECT_EQ(from.last_increment, 0.0);
  EXPECT_EQ(from.z, env.target);
}

TEST(Oracle, SmallGridSanity) {
  const AiyagariEnv env;
  GridSpec g;
  g.b_points = 41;
  g.a_cells = 20;
  const MeanFieldTerm z{0.9, 0.2};
  const GridSolution sol(env, z, g);
  for (std::size_t i = 0; i < g.b_points; ++i)
    for (std::size_t w = 0; w < 2; ++w) {
      EXPECT_GE(sol.value(i, w), 0.0);
      EXPECT_LE(sol.value(i, w), env.bound() + 1e-9);
      const auto p = sol.policy_masses(i, w, env.zeta());
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    }
  // More capital never hurts.
  for (std::size_t i = 1; i < g.b_points; ++i) EXPECT_GE(sol.value(i, 1), sol.value(i - 1, 1) - 1e-9);
  // Working beats not working at the same capital.
  for (std::size_t i = 0; i < g.b_points; ++i) EXPECT_GE(sol.value(i, 1), sol.value(i, 0) - 1e-9);

  const std::vector<double> mu = stationary_population(env, sol);
  double total = 0.0;
  for (double m : mu) {
    EXPECT_GE(m, 0.0);
    total += m;
  }
  EXPECT_NEAR(total, 1.0, 1e-10);
  const AggregateIndicators xi = aggregate_on_grid(env, sol.grid(), mu);
  EXPECT_NEAR(xi.labor, 0.5, 1e-9);
  EXPECT_GE(xi.capital, 0.0);
  EXPECT_LE(xi.capital, env.config().b_max);
}
