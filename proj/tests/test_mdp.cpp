#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace mfgham;
using testing_support::one_level_q;
using testing_support::ordered_pair;
using testing_support::random_max_affine;
using testing_support::slice_sup_gap;

namespace {

constexpr double kB = 20.0;

std::vector<MaxAffineFn> random_levels(Rng& rng, std::size_t levels, std::size_t K, double L) {
  std::vector<MaxAffineFn> out;
  for (std::size_t w = 0; w < levels; ++w) out.push_back(random_max_affine(rng, 2, K, L, 0.0, kB, kB));
  return out;
}

Dataset random_dataset(const AiyagariEnv& env, const MeanFieldTerm& z, std::size_t M, std::uint64_t seed) {
  return env.sample_dataset(z, M, seed);
}

}  // namespace

TEST(Greedy, TentPeak) {
  // Q = min(a, 1 - a), i.e. f = max(B - a, B - 1 + a).
  const auto q = one_level_q(MaxAffineFn(2, {0, -1, 0, 1}, {kB, kB - 1}, 1.0, kB), kB);
  EXPECT_NEAR(greedy_value(*q, {0.3, 0}, {0.0, 1.0}), 0.5, 1e-8);
}

TEST(Greedy, BoundaryMaximizer) {
  const auto q = one_level_q(MaxAffineFn(2, {0, -1}, {kB}, 1.0, kB), kB);
  EXPECT_NEAR(greedy_value(*q, {2.0, 0}, {0.0, 0.7}), 0.7, 1e-12);
}

TEST(Greedy, PointIntervalAndEmptyInterval) {
  const auto q = one_level_q(MaxAffineFn(2, {0, -1}, {kB}, 1.0, kB), kB);
  EXPECT_NEAR(greedy_value(*q, {0.0, 0}, {0.4, 0.4}), 0.4, 1e-12);
  EXPECT_THROW(greedy_value(*q, {0.0, 0}, {0.5, 0.4}), EmptyInterval);
}

TEST(Greedy, MatchesDenseGridScan) {
  Rng rng = make_rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    // Concave slices with an interior peak: slopes of both signs in a.
    const MaxAffineFn f = random_max_affine(rng, 2, 5, 3.0, 0.0, kB, kB);
    const auto q = one_level_q(f, kB);
    const HouseholdState s{10.0 * uniform01(rng), 0};
    const FeasibleInterval iv{0.0, 1.0 + 9.0 * uniform01(rng)};
    const ActionSlice slice = q->slice(s.capital, s.level);
    // Coarse scan, then a fine scan around the best coarse node.
    const std::size_t n = 100000;
    double best = -1.0, arg = iv.lo;
    for (std::size_t j = 0; j <= n; ++j) {
      const double a = iv.lo + iv.width() * static_cast<double>(j) / n;
      if (slice(a) > best) best = slice(a), arg = a;
    }
    const double h = iv.width() / n;
    for (std::size_t j = 0; j <= n; ++j) {
      const double a = std::clamp(arg - h + 2.0 * h * static_cast<double>(j) / n, iv.lo, iv.hi);
      best = std::max(best, slice(a));
    }
    EXPECT_NEAR(greedy_value(*q, s, iv), best, 1e-6) << "trial " << trial;
  }
}

TEST(ActionSliceEnvelope, ListsActivePiecesLeftToRight) {
  Rng rng = make_rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const MaxAffineFn f = random_max_affine(rng, 2, 6, 2.0);
    const auto q = one_level_q(f, 100.0);
    const ActionSlice s = q->slice(uniform01(rng), 0);
    const auto hull = s.envelope();
    // Every piece active somewhere on a fine grid must be on the envelope.
    for (int j = 0; j <= 2000; ++j) {
      const double a = -50.0 + 100.0 * j / 2000.0;
      const std::size_t k = s.active(a);
      const bool on_hull = std::find(hull.begin(), hull.end(), k) != hull.end();
      const bool tied = std::any_of(hull.begin(), hull.end(), [&](std::size_t h) {
        return s.slopes()[h] * a + s.offsets()[h] == s.convex(a);
      });
      EXPECT_TRUE(on_hull || tied);
    }
    for (std::size_t i = 1; i < hull.size(); ++i) EXPECT_LT(s.slopes()[hull[i - 1]], s.slopes()[hull[i]]);
  }
}

TEST(BellmanTargets, DirectFormula) {
  // Q = 2 everywhere (f = B - 2) and one sample with r = 0.5.
  ConcaveQ q({MaxAffineFn::constant(2, kB - 2.0, 1.0, kB)}, kB);
  Dataset d;
  d.samples.push_back({{1.0, 0}, 0.5, 0.5, {0.5, 0}});
  const auto problems = bellman_targets(d, q, 0.95, testing_support::fixed_interval(0.0, 1.0));
  ASSERT_EQ(problems.size(), 1u);
  ASSERT_EQ(problems[0].size(), 1u);
  EXPECT_NEAR(problems[0].targets[0], 2.4, 1e-12);
  EXPECT_EQ(problems[0].inputs[0], 1.0);
  EXPECT_EQ(problems[0].inputs[1], 0.5);
}

TEST(BellmanTargets, ZeroDiscountGivesRewards) {
  const AiyagariEnv env;
  const MeanFieldTerm z{1.0, 0.1};
  const Dataset d = random_dataset(env, z, 300, 3);
  Rng rng = make_rng(3);
  const ConcaveQ q(random_levels(rng, 2, 4, 1.0), kB);
  const auto problems = bellman_targets(d, q, 0.0, env.feasibility(z));
  std::array<std::size_t, 2> pos{0, 0};
  for (const auto& s : d.samples) {
    const auto w = static_cast<std::size_t>(s.state.level);
    EXPECT_EQ(problems[w].targets[pos[w]++], s.reward);
  }
}

TEST(BellmanTargets, ConstantQShiftsRewards) {
  const AiyagariEnv env;
  const MeanFieldTerm z{1.2, 0.05};
  const Dataset d = random_dataset(env, z, 300, 4);
  const double c = 7.25;
  const ConcaveQ q({MaxAffineFn::constant(2, kB - c, 1.0, kB), MaxAffineFn::constant(2, kB - c, 1.0, kB)}, kB);
  const auto problems = bellman_targets(d, q, 0.95, env.feasibility(z));
  std::array<std::size_t, 2> pos{0, 0};
  for (const auto& s : d.samples) {
    const auto w = static_cast<std::size_t>(s.state.level);
    EXPECT_NEAR(problems[w].targets[pos[w]++], s.reward + 0.95 * c, 1e-12);
  }
}

TEST(BellmanTargets, PieceCountFollowsSampleCount) {
  const AiyagariEnv env;
  const MeanFieldTerm z{1.0, 0.1};
  const Dataset d = random_dataset(env, z, 1000, 5);
  const ConcaveQ q = ConcaveQ::zero(2, kB, 1.0);
  TargetSettings ts;
  const auto problems = bellman_targets(d, q, 0.95, env.feasibility(z), ts);
  for (const auto& p : problems) EXPECT_EQ(p.pieces, select_piece_count(p.size(), 2, ts.k_max));
  ts.fixed_pieces = 3;
  for (const auto& p : bellman_targets(d, q, 0.95, env.feasibility(z), ts)) EXPECT_EQ(p.pieces, 3u);
  EXPECT_THROW(bellman_targets(d, q, 0.95, std::vector<FeasibleInterval>(3), ts), DimensionMismatch);
}

TEST(BellmanProperties, MonotoneContractiveAndBounded) {
  const AiyagariEnv env;
  Rng rng = make_rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const MeanFieldTerm z{0.5 + uniform01(rng), 0.02 + 0.2 * uniform01(rng)};
    const Dataset d = random_dataset(env, z, 200, 100 + trial);
    const auto feasible = env.feasibility(z);
    const auto [q1, q2] = ordered_pair(rng, 2, 1.5, kB);
    const auto t1 = bellman_targets(d, q1, 0.95, feasible);
    const auto t2 = bellman_targets(d, q2, 0.95, feasible);
    std::array<std::size_t, 2> pos{0, 0};
    for (const auto& s : d.samples) {
      const auto w = static_cast<std::size_t>(s.state.level);
      const std::size_t m = pos[w]++;
      const double y1 = t1[w].targets[m], y2 = t2[w].targets[m];
      EXPECT_LE(y1, y2 + 1e-12);
      EXPECT_GE(y1, 0.0);
      EXPECT_LE(y2, kB);
      const FeasibleInterval iv = feasible(s.next);
      const double gap = slice_sup_gap(q1.slice(s.next.capital, s.next.level),
                                       q2.slice(s.next.capital, s.next.level), iv.lo, iv.hi);
      EXPECT_LE(std::abs(y1 - y2), 0.95 * gap + 1e-12);
    }
  }
}

TEST(BellmanProperties, ExactOperatorPreservesConcavity) {
  const AiyagariEnv env;
  const auto& chain = env.config().chain;
  Rng rng = make_rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const MeanFieldTerm z{0.3 + 2.0 * uniform01(rng), 0.01 + 0.3 * uniform01(rng)};
    // Convex parts kept below B on the whole (b, a) box so the upper clamp is
    // never active and Q = B - max(f, 0) is concave.
    std::vector<MaxAffineFn> fs;
    for (int w = 0; w < 2; ++w) {
      MaxAffineFn f = random_max_affine(rng, 2, 5, 0.4, 0.0, 5.0, kB);
      double top = -INFINITY;
      for (double b : {0.0, 20.0})
        for (double a : {0.0, 20.0}) top = std::max(top, f(std::array{b, a}));
      std::vector<double> s, c;
      for (std::size_t k = 0; k < f.size(); ++k) {
        s.insert(s.end(), f.slope(k).begin(), f.slope(k).end());
        c.push_back(f.intercept(k) - std::max(0.0, top - kB + 1.0));
      }
      fs.emplace_back(2, s, c, 0.4, kB);
    }
    const ConcaveQ q(fs, kB);
    auto T = [&](double b, int w, double a) {
      const HouseholdState s{b, w};
      double ev = 0.0;
      for (int v = 0; v < 2; ++v) {
        const HouseholdState next{a, v};
        ev += chain[w][v] * greedy_value(q, next, env.feasible(z, next));
      }
      return env.reward_unchecked(z, s, a) + env.gamma() * ev;
    };
    for (int w = 0; w < 2; ++w)
      for (int k = 0; k < 200; ++k) {
        const double b1 = 20.0 * uniform01(rng), b2 = 20.0 * uniform01(rng);
        const double a1 = env.feasible(z, {b1, w}).hi * uniform01(rng);
        const double a2 = env.feasible(z, {b2, w}).hi * uniform01(rng);
        const double bm = 0.5 * (b1 + b2), am = 0.5 * (a1 + a2);
        ASSERT_TRUE(env.feasible(z, {bm, w}).contains(am));
        EXPECT_GE(T(bm, w, am), 0.5 * (T(b1, w, a1) + T(b2, w, a2)) - 1e-9);
      }
  }
}

TEST(ConcaveQ, ValueAndSliceAgree) {
  Rng rng = make_rng(8);
  const ConcaveQ q(random_levels(rng, 2, 5, 2.0), kB);
  for (int i = 0; i < 200; ++i) {
    const double b = 20 * uniform01(rng), a = 20 * uniform01(rng);
    const int w = i % 2;
    EXPECT_NEAR(q(b, w, a), q.slice(b, w)(a), 1e-12);
    EXPECT_GE(q(b, w, a), 0.0);
    EXPECT_LE(q(b, w, a), kB);
  }
}

TEST(ConcaveQ, JointModeUsesLaborCoordinate) {
  const MaxAffineFn f(3, {0.0, -2.0, 0.0}, {kB}, 2.0, kB);
  const ConcaveQ q(f, {0.0, 1.0}, kB);
  EXPECT_TRUE(q.joint());
  EXPECT_EQ(q.levels(), 2u);
  EXPECT_NEAR(q(3.0, 0, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(q(3.0, 1, 1.0), 2.0, 1e-15);
  EXPECT_NEAR(q.slice(3.0, 1)(5.0), 2.0, 1e-15);
  EXPECT_THROW(ConcaveQ(MaxAffineFn::constant(2, 1.0, 1.0, kB), {0.0, 1.0}, kB), DimensionMismatch);
}

TEST(DatasetCsv, RoundTrip) {
  const AiyagariEnv env;
  const Dataset d = env.sample_dataset({1.0, 0.1}, 50, 9);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t m = 0; m < d.size(); ++m) {
    EXPECT_EQ(back.samples[m].state.capital, d.samples[m].state.capital);
    EXPECT_EQ(back.samples[m].state.level, d.samples[m].state.level);
    EXPECT_EQ(back.samples[m].action, d.samples[m].action);
    EXPECT_EQ(back.samples[m].reward, d.samples[m].reward);
    EXPECT_EQ(back.samples[m].next.capital, d.samples[m].next.capital);
    EXPECT_EQ(back.samples[m].next.level, d.samples[m].next.level);
  }
  std::istringstream bad("b,w,a\n1,2,3\n");
  EXPECT_THROW(read_dataset_csv(bad), ParseError);
  std::istringstream short_row("b,w,a,r,b_next,w_next\n1,0,0.5\n");
  EXPECT_THROW(read_dataset_csv(short_row), ParseError);
}
