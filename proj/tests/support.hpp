#pragma once

// Small independent oracles shared by the test files: quadrature, KS
// statistics, random max-affine functions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "mfgham/mfgham.hpp"

namespace testing_support {

/// Composite Simpson on [lo, hi] with n (even) cells.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, std::size_t n = 20000) {
  if (n % 2) ++n;
  const double h = (hi - lo) / static_cast<double>(n);
  double s = f(lo) + f(hi);
  for (std::size_t j = 1; j < n; ++j) s += (j % 2 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(j));
  return s * h / 3.0;
}

/// Kolmogorov-Smirnov distance between the sample and a continuous CDF.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - F, F - static_cast<double>(i) / n});
  }
  return d;
}

/// Random max-affine function with slopes uniform in [-L, L] and intercepts
/// uniform in [c_lo, c_hi].
inline mfgham::MaxAffineFn random_max_affine(mfgham::Rng& rng, std::size_t dim, std::size_t K, double L,
                                             double c_lo = -1.0, double c_hi = 1.0, double upper = 1e6) {
  std::vector<double> slopes(K * dim), icpt(K);
  for (double& a : slopes) a = L * (2.0 * mfgham::uniform01(rng) - 1.0);
  for (double& c : icpt) c = c_lo + (c_hi - c_lo) * mfgham::uniform01(rng);
  return mfgham::MaxAffineFn(dim, std::move(slopes), std::move(icpt), L, upper);
}

/// Naive per-piece maximum.
inline double naive_eval(const mfgham::MaxAffineFn& f, const std::vector<double>& x) {
  double best = -INFINITY;
  for (std::size_t k = 0; k < f.size(); ++k) {
    double v = f.intercept(k);
    for (std::size_t j = 0; j < f.dim(); ++j) v += f.slope(k)[j] * x[j];
    best = std::max(best, v);
  }
  return best;
}

inline mfgham::FeasibilityOracle fixed_interval(double lo, double hi) {
  return [lo, hi](const mfgham::HouseholdState&) { return mfgham::FeasibleInterval{lo, hi}; };
}

/// One-level ConcaveQ whose value is clamp(B - f(b, a), 0, B).
inline std::shared_ptr<const mfgham::ConcaveQ> one_level_q(mfgham::MaxAffineFn f, double B) {
  return std::make_shared<const mfgham::ConcaveQ>(std::vector<mfgham::MaxAffineFn>{std::move(f)}, B);
}

/// Smaller economy for tests that run the full loop.
inline mfgham::AiyagariConfig small_economy() {
  mfgham::AiyagariConfig c;
  c.population = 400;
  c.horizon = 40;
  c.burn_in = 20;
  return c;
}

/// Noisy samples of sum_j x_j^2 on [-1, 1]^d with the default piece rule.
inline mfgham::RegressionProblem bowl_problem(std::size_t M, std::size_t d, double noise, std::uint64_t seed) {
  mfgham::Rng rng = mfgham::make_rng(seed, {M});
  std::normal_distribution<double> eps(0.0, noise);
  mfgham::RegressionProblem p;
  p.dim = d;
  p.pieces = mfgham::select_piece_count(M, d, 40);
  p.lipschitz = 2.0;
  p.upper = static_cast<double>(d) + 1.0;
  p.seed = seed;
  std::vector<double> x(d);
  for (std::size_t m = 0; m < M; ++m) {
    double y = 0.0;
    for (double& v : x) {
      v = 2.0 * mfgham::uniform01(rng) - 1.0;
      y += v * v;
    }
    p.add(x, y + eps(rng));
  }
  return p;
}

// Exact sup over [lo, hi] of |p(a) - q(a)| for two action slices: the
// difference is piecewise linear, so the sup sits at an endpoint, at a
// crossing of two lines of either slice, or where a line meets a clamp level.
inline double slice_sup_gap(const mfgham::ActionSlice& p, const mfgham::ActionSlice& q, double lo, double hi) {
  std::vector<double> pts{lo, hi};
  for (const mfgham::ActionSlice* s : {&p, &q}) {
    const auto& sl = s->slopes();
    const auto& off = s->offsets();
    for (std::size_t i = 0; i < sl.size(); ++i) {
      if (sl[i] != 0.0) {
        pts.push_back(-off[i] / sl[i]);
        pts.push_back((s->bound() - off[i]) / sl[i]);
      }
      for (std::size_t j = i + 1; j < sl.size(); ++j)
        if (sl[i] != sl[j]) pts.push_back((off[j] - off[i]) / (sl[i] - sl[j]));
    }
  }
  double gap = 0.0;
  for (double a : pts)
    if (a >= lo && a <= hi) gap = std::max(gap, std::abs(p(a) - q(a)));
  return gap;
}

// Random per-level Q pair with Q1 <= Q2 everywhere: f1 = max(f2, g).
inline std::pair<mfgham::ConcaveQ, mfgham::ConcaveQ> ordered_pair(mfgham::Rng& rng, std::size_t levels, double L,
                                                                double B) {
  std::vector<mfgham::MaxAffineFn> lo, hi;
  for (std::size_t w = 0; w < levels; ++w) {
    const mfgham::MaxAffineFn f2 = random_max_affine(rng, 2, 4, L, 0.0, B, B);
    const mfgham::MaxAffineFn g = random_max_affine(rng, 2, 3, L, 0.0, B, B);
    std::vector<double> s, c;
    for (const mfgham::MaxAffineFn* f : {&f2, &g})
      for (std::size_t k = 0; k < f->size(); ++k) {
        s.insert(s.end(), f->slope(k).begin(), f->slope(k).end());
        c.push_back(f->intercept(k));
      }
    lo.emplace_back(2, s, c, L, B);
    hi.push_back(f2);
  }
  return {mfgham::ConcaveQ(lo, B), mfgham::ConcaveQ(hi, B)};
}

}  // namespace testing_support
