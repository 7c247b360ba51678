#pragma once

// Entropy-regularized (Gibbs) policies on the feasible saving interval:
// pi(a|s) = exp(Q(s,a)/zeta) / Z(s) on Gamma(s), zero elsewhere.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "error.hpp"
#include "mdp.hpp"
#include "rng.hpp"

namespace mfgham {

template <class P>
concept SamplingPolicy = requires(const P& p, const HouseholdState& s, Rng& rng) {
  { p.sample(s, rng) } -> std::convertible_to<double>;
};

/// Normalizing constant of one state, kept in shifted form: the density is
/// exp(Q(s,a)/zeta - shift) / normalizer on Gamma(s).
struct Normalizer {
  double shift = 0.0;
  double normalizer = 0.0;  // 0 marks a point interval
  bool degenerate() const { return normalizer == 0.0; }
};

class GibbsPolicy {
 public:
  GibbsPolicy(std::shared_ptr<const ConcaveQ> q, double zeta, FeasibilityOracle feasible,
              std::size_t grid = 256)
      : q_(std::move(q)), zeta_(zeta), feasible_(std::move(feasible)), grid_(grid) {
    if (!q_) throw InvariantViolation("Gibbs policy needs a Q-function");
    if (!(zeta_ > 0.0)) throw InvalidBounds("Gibbs policy needs zeta > 0");
    if (grid_ < 16) throw InvalidBounds("Gibbs policy needs an action grid of at least 16 cells");
  }

  double zeta() const { return zeta_; }
  std::size_t grid() const { return grid_; }
  const ConcaveQ& q() const { return *q_; }
  std::shared_ptr<const ConcaveQ> q_ptr() const { return q_; }
  FeasibleInterval interval(const HouseholdState& s) const { return feasible_(s); }
  const FeasibilityOracle& feasibility() const { return feasible_; }

  /// Z(s) in closed form: Q is piecewise linear in a, so the integral is a
  /// sum of exponential integrals, one per linear stretch.
  Normalizer normalizer(const HouseholdState& s) const {
    const FeasibleInterval iv = feasible_(s);
    if (!(iv.lo <= iv.hi)) throw EmptyInterval("policy normalizer on an empty feasible interval");
    if (iv.degenerate()) return {};
    thread_local std::vector<Stretch> parts;
    return weigh(s, iv, parts);
  }

  /// Density at a in Gamma(s); +inf for a point interval.
  double density(const HouseholdState& s, double a) const {
    const FeasibleInterval iv = feasible_(s);
    if (!iv.contains(a)) throw OutOfFeasible("density queried outside the feasible interval");
    const Normalizer n = normalizer(s);
    if (n.degenerate()) return std::numeric_limits<double>::infinity();
    return density_with(n, s, a);
  }

  /// Same as density but 0 outside Gamma(s).
  double density_or_zero(const HouseholdState& s, double a) const {
    const FeasibleInterval iv = feasible_(s);
    if (!iv.contains(a)) return 0.0;
    return density(s, a);
  }

  double density_with(const Normalizer& n, const HouseholdState& s, double a) const {
    return std::exp((*q_)(s, a) / zeta_ - n.shift) / n.normalizer;
  }

  /// Exact inverse-CDF draw. On every stretch where Q is linear the density
  /// is a single exponential, so the CDF inverts in closed form. Consumes
  /// exactly one uniform per call.
  double sample(const HouseholdState& s, Rng& rng) const {
    const double u = uniform01(rng);
    const FeasibleInterval iv = feasible_(s);
    if (!(iv.lo <= iv.hi)) throw EmptyInterval("sampling on an empty feasible interval");
    if (iv.degenerate()) return iv.lo;
    thread_local std::vector<Stretch> parts;
    const Normalizer n = weigh(s, iv, parts);
    const double top = n.shift;
    double target = u * n.normalizer;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const Stretch& p = parts[i];
      if (target < p.mass || i + 1 == parts.size()) return p.invert(std::min(target, p.mass), top);
      target -= p.mass;
    }
    return iv.hi;
  }

 private:
  // [x0, x1] with Q(a)/zeta = q0 + kappa (a - x0).
  struct Stretch {
    double x0, x1, q0, q1, kappa, mass = 0.0;

    double integral(double top) const {
      const double len = x1 - x0;
      const double w0 = std::exp(q0 - top);
      const double x = kappa * len;
      if (std::abs(x) < 1e-6) return len * w0 * (1.0 + x / 2.0 + x * x / 6.0);
      return (std::exp(q1 - top) - w0) / kappa;
    }

    // Point where the integral from x0 reaches t; inverts from whichever end
    // carries the larger density.
    double invert(double t, double top) const {
      const double len = x1 - x0;
      double x;
      if (len <= 0.0) return x0;
      if (std::abs(kappa * len) < 1e-6) {
        const double dens = mass / len;
        x = dens > 0.0 ? x0 + t / dens : x0 + 0.5 * len;
      } else if (q0 >= q1) {
        x = x0 + std::log1p(t * kappa / std::exp(q0 - top)) / kappa;
      } else {
        x = x1 + std::log1p(-(mass - t) * kappa / std::exp(q1 - top)) / kappa;
      }
      return std::isfinite(x) ? std::clamp(x, x0, x1) : x0 + 0.5 * len;
    }
  };

  // Fills `out` with the stretches of Gamma(s) and their masses.
  Normalizer weigh(const HouseholdState& s, const FeasibleInterval& iv, std::vector<Stretch>& out) const {
    stretches(s, iv, out);
    Normalizer n;
    n.shift = -std::numeric_limits<double>::infinity();
    for (const auto& p : out) n.shift = std::max({n.shift, p.q0, p.q1});
    for (auto& p : out) {
      p.mass = p.integral(n.shift);
      n.normalizer += p.mass;
    }
    return n;
  }

  // Splits Gamma(s) into stretches on which Q is linear: envelope pieces, and
  // within each piece the parts where the clamp to [0, B] is active.
  void stretches(const HouseholdState& s, const FeasibleInterval& iv, std::vector<Stretch>& out) const {
    out.clear();
    const ActionSlice slice = q_->slice(s.capital, s.level);
    const std::vector<std::size_t> hull = slice.envelope();
    const auto& sl = slice.slopes();
    const auto& off = slice.offsets();
    const double B = q_->bound();
    double left = iv.lo;
    for (std::size_t p = 0; p < hull.size() && left < iv.hi; ++p) {
      const std::size_t k = hull[p];
      double right = iv.hi;
      if (p + 1 < hull.size()) {
        const std::size_t n = hull[p + 1];
        right = std::min(iv.hi, (off[k] - off[n]) / (sl[n] - sl[k]));
      }
      if (!(right > left)) continue;
      double cuts[4] = {left, right, right, right};
      std::size_t nc = 1;
      if (sl[k] != 0.0) {
        double t1 = -off[k] / sl[k], t2 = (B - off[k]) / sl[k];
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > left && t1 < right) cuts[nc++] = t1;
        if (t2 > left && t2 < right) cuts[nc++] = t2;
      }
      cuts[nc++] = right;
      for (std::size_t c = 0; c + 1 < nc; ++c) {
        const double x0 = cuts[c], x1 = cuts[c + 1];
        if (!(x1 > x0)) continue;
        const double mid = B - (sl[k] * 0.5 * (x0 + x1) + off[k]);
        const bool free = mid >= 0.0 && mid <= B;
        const double q0 = std::clamp(B - (sl[k] * x0 + off[k]), 0.0, B) / zeta_;
        const double q1 = std::clamp(B - (sl[k] * x1 + off[k]), 0.0, B) / zeta_;
        out.push_back({x0, x1, q0, free ? q1 : q0, free ? -sl[k] / zeta_ : 0.0});
      }
      left = right;
    }
    if (out.empty()) {
      const double q0 = (*q_)(s, iv.lo) / zeta_;
      out.push_back({iv.lo, iv.hi, q0, q0, 0.0});
    }
  }

  std::shared_ptr<const ConcaveQ> q_;
  double zeta_;
  FeasibilityOracle feasible_;
  std::size_t grid_;
};

/// Uniform density on Gamma(s): the Gibbs policy of Q = 0.
inline GibbsPolicy uniform_policy(FeasibilityOracle feasible, std::size_t levels = 2, double bound = 1.0,
                                  std::size_t grid = 256) {
  return GibbsPolicy(std::make_shared<const ConcaveQ>(ConcaveQ::zero(levels, bound, 0.0)), 1.0,
                     std::move(feasible), grid);
}

/// Average over the states of sup_a |pi(a|s) - pi'(a|s)|, the sup taken on a
/// uniform grid over the union of both feasible intervals (2G cells when
/// `grid` is 0). States where either interval is a single point are skipped.
inline double policy_distance(const GibbsPolicy& p, const GibbsPolicy& q, std::span<const HouseholdState> states,
                              std::size_t grid = 0) {
  if (states.empty()) return 0.0;
  if (grid == 0) grid = 2 * std::max(p.grid(), q.grid());
  double total = 0.0;
  for (const auto& s : states) {
    const auto ip = p.interval(s);
    const auto iq = q.interval(s);
    if (ip.degenerate() || iq.degenerate()) continue;
    const Normalizer np = p.normalizer(s);
    const Normalizer nq = q.normalizer(s);
    const double lo = std::min(ip.lo, iq.lo);
    const double hi = std::max(ip.hi, iq.hi);
    double sup = 0.0;
    for (std::size_t j = 0; j <= grid; ++j) {
      const double a = j == grid ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(grid);
      const double dp = ip.contains(a, 0.0) ? p.density_with(np, s, a) : 0.0;
      const double dq = iq.contains(a, 0.0) ? q.density_with(nq, s, a) : 0.0;
      sup = std::max(sup, std::abs(dp - dq));
    }
    total += sup;
  }
  return total / static_cast<double>(states.size());
}

}  // namespace mfgham
