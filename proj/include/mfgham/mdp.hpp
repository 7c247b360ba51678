#pragma once

// Household decision process: states, feasible saving intervals, offline
// datasets, concave Q-functions stored as B - (max-affine), and the sampled
// Bellman targets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "shape_reg.hpp"

namespace mfgham {

/// Market conditions set by the firm: z = (wage, rent).
struct MeanFieldTerm {
  double wage = 0.0;
  double rent = 0.0;

  friend bool operator==(const MeanFieldTerm&, const MeanFieldTerm&) = default;
};

inline double l1_distance(const MeanFieldTerm& a, const MeanFieldTerm& b) {
  return std::abs(a.wage - b.wage) + std::abs(a.rent - b.rent);
}

struct HouseholdState {
  double capital = 0.0;
  int level = 0;  // index into the discrete income set
};

struct FeasibleInterval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool degenerate() const { return hi <= lo; }
  bool contains(double a, double tol = 1e-12) const {
    const double slack = tol * std::max(1.0, std::abs(hi));
    return a >= lo - slack && a <= hi + slack;
  }
};

using FeasibilityOracle = std::function<FeasibleInterval(const HouseholdState&)>;

struct TransitionSample {
  HouseholdState state;
  double action = 0.0;
  double reward = 0.0;
  HouseholdState next;
};

struct Dataset {
  MeanFieldTerm z;
  std::vector<TransitionSample> samples;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
};

/// CSV with columns b,w,a,r,b_next,w_next.
inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
  const auto old = os.precision(17);
  os << "b,w,a,r,b_next,w_next\n";
  for (const auto& s : data.samples) {
    os << s.state.capital << ',' << s.state.level << ',' << s.action << ',' << s.reward << ','
       << s.next.capital << ',' << s.next.level << '\n';
  }
  os.precision(old);
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "b,w,a,r,b_next,w_next")
    throw ParseError("dataset csv: unexpected header");
  Dataset out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    TransitionSample s;
    if (!(row >> s.state.capital >> s.state.level >> s.action >> s.reward >> s.next.capital >> s.next.level))
      throw ParseError("dataset csv: malformed row");
    out.samples.push_back(s);
  }
  return out;
}

/// A concave piecewise-linear function of the action alone, obtained by
/// fixing the state: g(a) = B - max_k (slope_k * a + offset_k), clamped to
/// [0, B] on evaluation.
class ActionSlice {
 public:
  ActionSlice(std::vector<double> slopes, std::vector<double> offsets, double bound)
      : slopes_(std::move(slopes)), offsets_(std::move(offsets)), bound_(bound) {}

  double convex(double a) const {
    double best = slopes_[0] * a + offsets_[0];
    for (std::size_t k = 1; k < slopes_.size(); ++k) best = std::max(best, slopes_[k] * a + offsets_[k]);
    return best;
  }
  /// Unclamped concave value B - f.
  double raw(double a) const { return bound_ - convex(a); }
  double operator()(double a) const { return std::clamp(raw(a), 0.0, bound_); }

  double bound() const { return bound_; }
  const std::vector<double>& slopes() const { return slopes_; }
  const std::vector<double>& offsets() const { return offsets_; }

  std::size_t active(double a) const {
    std::size_t arg = 0;
    double best = slopes_[0] * a + offsets_[0];
    for (std::size_t k = 1; k < slopes_.size(); ++k) {
      const double v = slopes_[k] * a + offsets_[k];
      if (v > best) {
        best = v;
        arg = k;
      }
    }
    return arg;
  }

  /// Upper envelope of the lines, ordered by increasing slope, as indices.
  /// Consecutive entries are the pieces active left to right.
  std::vector<std::size_t> envelope() const {
    std::vector<std::size_t> idx(slopes_.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [this](std::size_t a, std::size_t b) {
      return slopes_[a] < slopes_[b] || (slopes_[a] == slopes_[b] && offsets_[a] > offsets_[b]);
    });
    std::vector<std::size_t> hull;
    for (std::size_t k : idx) {
      if (!hull.empty() && slopes_[hull.back()] == slopes_[k]) continue;  // dominated parallel line
      while (hull.size() >= 2) {
        const std::size_t l1 = hull[hull.size() - 2];
        const std::size_t l2 = hull.back();
        // l2 is useless if l1 and k cross at or before where l1 and l2 cross.
        const double lhs = (offsets_[k] - offsets_[l1]) * (slopes_[l2] - slopes_[l1]);
        const double rhs = (offsets_[l2] - offsets_[l1]) * (slopes_[k] - slopes_[l1]);
        if (lhs >= rhs) hull.pop_back();
        else break;
      }
      hull.push_back(k);
    }
    return hull;
  }

 private:
  std::vector<double> slopes_;
  std::vector<double> offsets_;
  double bound_;
};

/// Q(b, w, a) = clamp(B - f(x), 0, B) with f convex max-affine. Per-level mode
/// keeps one f_w over x = (b, a) for every income level; joint mode keeps one
/// f over x = (b, n_w, a) where n_w is the labor value of level w.
class ConcaveQ {
 public:
  ConcaveQ(std::vector<MaxAffineFn> per_level, double bound)
      : fns_(std::move(per_level)), bound_(bound), joint_(false) {
    if (fns_.empty()) throw InvariantViolation("concave Q needs at least one income level");
    for (const auto& f : fns_)
      if (f.dim() != 2) throw DimensionMismatch("per-level Q pieces must act on (b, a)");
    if (!(bound_ > 0.0)) throw InvalidBounds("Q bound must be positive");
  }

  ConcaveQ(MaxAffineFn joint_fn, std::vector<double> labor, double bound)
      : fns_{std::move(joint_fn)}, labor_(std::move(labor)), bound_(bound), joint_(true) {
    if (fns_[0].dim() != 3) throw DimensionMismatch("joint Q pieces must act on (b, n, a)");
    if (labor_.empty()) throw InvariantViolation("joint Q needs the labor values");
    if (!(bound_ > 0.0)) throw InvalidBounds("Q bound must be positive");
  }

  /// Q identically zero on every level (f = B).
  static ConcaveQ zero(std::size_t levels, double bound, double lipschitz) {
    std::vector<MaxAffineFn> fns;
    for (std::size_t w = 0; w < levels; ++w) fns.push_back(MaxAffineFn::constant(2, bound, lipschitz, bound));
    return ConcaveQ(std::move(fns), bound);
  }

  static ConcaveQ zero_joint(std::vector<double> labor, double bound, double lipschitz) {
    return ConcaveQ(MaxAffineFn::constant(3, bound, lipschitz, bound), std::move(labor), bound);
  }

  double bound() const { return bound_; }
  bool joint() const { return joint_; }
  std::size_t levels() const { return joint_ ? labor_.size() : fns_.size(); }
  const MaxAffineFn& convex_part(std::size_t level) const { return joint_ ? fns_[0] : fns_.at(level); }
  const std::vector<double>& labor() const { return labor_; }

  double raw(double b, int w, double a) const {
    if (joint_) {
      const double x[3] = {b, labor_.at(static_cast<std::size_t>(w)), a};
      return bound_ - fns_[0].eval_unchecked(x);
    }
    const double x[2] = {b, a};
    return bound_ - fns_.at(static_cast<std::size_t>(w)).eval_unchecked(x);
  }

  double operator()(double b, int w, double a) const { return std::clamp(raw(b, w, a), 0.0, bound_); }
  double operator()(const HouseholdState& s, double a) const { return (*this)(s.capital, s.level, a); }

  ActionSlice slice(double b, int w) const {
    const MaxAffineFn& f = convex_part(static_cast<std::size_t>(w));
    const std::size_t d = f.dim();
    std::vector<double> slopes(f.size());
    std::vector<double> offsets(f.size());
    const double n = joint_ ? labor_.at(static_cast<std::size_t>(w)) : 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const auto a = f.slope(k);
      slopes[k] = a[d - 1];
      offsets[k] = f.intercept(k) + a[0] * b + (joint_ ? a[1] * n : 0.0);
    }
    return ActionSlice(std::move(slopes), std::move(offsets), bound_);
  }

  /// Input vector for the convex part at (b, w, a).
  std::vector<double> features(double b, int w, double a) const {
    if (joint_) return {b, labor_.at(static_cast<std::size_t>(w)), a};
    return {b, a};
  }

 private:
  std::vector<MaxAffineFn> fns_;
  std::vector<double> labor_;
  double bound_;
  bool joint_;
};

struct GreedySettings {
  std::size_t max_iterations = 80;
  double tolerance = 1e-8;
};

/// max over a in [lo, hi] of the slice, clamped to [0, B].
///
/// Golden-section search on the concave restriction, then the bracket is
/// polished to the exact kink between the pieces active at its two ends.
inline double greedy_value(const ActionSlice& q, const FeasibleInterval& iv, const GreedySettings& gs = {}) {
  if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
    throw EmptyInterval("greedy maximization over an empty interval");
  double best = std::max(q.raw(iv.lo), q.raw(iv.hi));
  if (iv.hi > iv.lo) {
    constexpr double inv_phi = 0.6180339887498949;
    double lo = iv.lo, hi = iv.hi;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = q.raw(x1), f2 = q.raw(x2);
    const double tol = gs.tolerance * std::max(1.0, iv.hi - iv.lo);
    for (std::size_t it = 0; it < gs.max_iterations && hi - lo > tol; ++it) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = q.raw(x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = q.raw(x1);
      }
    }
    best = std::max({best, f1, f2, q.raw(lo), q.raw(hi)});
    const std::size_t i = q.active(lo);
    const std::size_t j = q.active(hi);
    const double ds = q.slopes()[i] - q.slopes()[j];
    if (i != j && ds != 0.0) {
      const double kink = (q.offsets()[j] - q.offsets()[i]) / ds;
      if (kink >= iv.lo && kink <= iv.hi) best = std::max(best, q.raw(kink));
    }
  }
  return std::clamp(best, 0.0, q.bound());
}

inline double greedy_value(const ConcaveQ& q, const HouseholdState& s, const FeasibleInterval& iv,
                           const GreedySettings& gs = {}) {
  return greedy_value(q.slice(s.capital, s.level), iv, gs);
}

/// Shape and bounds shared by the per-level regression problems.
struct TargetSettings {
  double lipschitz = 1.0;
  std::size_t k_max = 40;
  std::size_t fixed_pieces = 0;  // 0 selects K from the sample count
  FitSettings fit{};
  GreedySettings greedy{};
};

/// Sampled Bellman targets clamp(r + gamma * max_{a'} Q(s', a'), 0, B) for
/// every sample, grouped into one regression problem per income level (or a
/// single joint problem). `next_intervals[m]` is the feasible set at s'_m.
inline std::vector<RegressionProblem> bellman_targets(const Dataset& data, const ConcaveQ& q, double gamma,
                                                      const std::vector<FeasibleInterval>& next_intervals,
                                                      const TargetSettings& settings = {}) {
  if (next_intervals.size() != data.size())
    throw DimensionMismatch("need one feasible interval per next state");
  const double B = q.bound();
  const std::size_t groups = q.joint() ? 1 : q.levels();
  const std::size_t dim = q.joint() ? 3 : 2;
  std::vector<RegressionProblem> problems(groups);
  for (auto& p : problems) {
    p.dim = dim;
    p.lipschitz = settings.lipschitz;
    p.upper = B;
    p.settings = settings.fit;
  }
  for (std::size_t m = 0; m < data.size(); ++m) {
    const auto& s = data.samples[m];
    const double cont = gamma > 0.0 ? greedy_value(q, s.next, next_intervals[m], settings.greedy) : 0.0;
    const double y = std::clamp(s.reward + gamma * cont, 0.0, B);
    const auto x = q.features(s.state.capital, s.state.level, s.action);
    problems[q.joint() ? 0 : static_cast<std::size_t>(s.state.level)].add(x, y);
  }
  for (auto& p : problems) {
    p.pieces = settings.fixed_pieces > 0 ? settings.fixed_pieces
                                         : select_piece_count(std::max<std::size_t>(p.size(), 1), dim, settings.k_max);
  }
  return problems;
}

inline std::vector<RegressionProblem> bellman_targets(const Dataset& data, const ConcaveQ& q, double gamma,
                                                      const FeasibilityOracle& feasible,
                                                      const TargetSettings& settings = {}) {
  std::vector<FeasibleInterval> next;
  next.reserve(data.size());
  for (const auto& s : data.samples) next.push_back(feasible(s.next));
  return bellman_targets(data, q, gamma, next, settings);
}

}  // namespace mfgham
