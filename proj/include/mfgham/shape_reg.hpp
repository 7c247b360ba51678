#pragma once

// Bounded, Lipschitz max-affine (convex piecewise-linear) regression and the
// exact max-affine <-> input-convex-network parameter conversion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "rng.hpp"

namespace mfgham {

/// f(x) = max_k (alpha_k . x + c_k) with every |alpha_k|_inf <= L.
///
/// Pieces are stored row-major in one flat buffer. The upper bound B is part
/// of the function class; it is recorded here but enforced by callers (the
/// Bellman targets are clamped to [0, B]), not by evaluation.
class MaxAffineFn {
 public:
  MaxAffineFn() = default;

  MaxAffineFn(std::size_t dim, std::vector<double> slopes, std::vector<double> intercepts,
              double lipschitz, double upper)
      : dim_(dim),
        slopes_(std::move(slopes)),
        intercepts_(std::move(intercepts)),
        lipschitz_(lipschitz),
        upper_(upper) {
    if (dim_ == 0) throw DimensionMismatch("max-affine function needs input dimension >= 1");
    if (!(lipschitz_ >= 0.0) || !(upper_ > 0.0))
      throw InvalidBounds("max-affine function needs L >= 0 and B > 0");
    if (intercepts_.empty()) throw InvariantViolation("max-affine function needs at least one piece");
    if (slopes_.size() != dim_ * intercepts_.size())
      throw DimensionMismatch("slope buffer does not match piece count * dim");
    // Reconstructed slopes are sums of network weights, so allow a few ulps.
    const double tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, lipschitz_);
    for (double a : slopes_) {
      if (!std::isfinite(a) || std::abs(a) > lipschitz_ + tol)
        throw InvariantViolation("slope exceeds the Lipschitz bound");
    }
  }

  static MaxAffineFn constant(std::size_t dim, double value, double lipschitz, double upper) {
    return MaxAffineFn(dim, std::vector<double>(dim, 0.0), {value}, lipschitz, upper);
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return intercepts_.size(); }
  double lipschitz() const { return lipschitz_; }
  double upper() const { return upper_; }

  std::span<const double> slope(std::size_t k) const { return {slopes_.data() + k * dim_, dim_}; }
  double intercept(std::size_t k) const { return intercepts_[k]; }
  const std::vector<double>& slopes() const { return slopes_; }
  const std::vector<double>& intercepts() const { return intercepts_; }

  double piece_value(std::size_t k, const double* x) const {
    const double* a = slopes_.data() + k * dim_;
    double v = intercepts_[k];
    for (std::size_t j = 0; j < dim_; ++j) v += a[j] * x[j];
    return v;
  }

  double eval_unchecked(const double* x) const {
    double best = piece_value(0, x);
    for (std::size_t k = 1; k < size(); ++k) best = std::max(best, piece_value(k, x));
    return best;
  }

  /// Index of the active piece; ties go to the lowest index.
  std::size_t argmax(const double* x) const {
    std::size_t arg = 0;
    double best = piece_value(0, x);
    for (std::size_t k = 1; k < size(); ++k) {
      const double v = piece_value(k, x);
      if (v > best) {
        best = v;
        arg = k;
      }
    }
    return arg;
  }

  double operator()(std::span<const double> x) const {
    if (x.size() != dim_) throw DimensionMismatch("input has wrong dimension for max-affine function");
    return eval_unchecked(x.data());
  }

  double max_abs_slope() const {
    double m = 0.0;
    for (double a : slopes_) m = std::max(m, std::abs(a));
    return m;
  }

  friend bool operator==(const MaxAffineFn&, const MaxAffineFn&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> slopes_;
  std::vector<double> intercepts_;
  double lipschitz_ = 0.0;
  double upper_ = 1.0;
};

inline double eval(const MaxAffineFn& f, std::span<const double> x) { return f(x); }

struct FitSettings {
  std::size_t restarts = 8;
  /// Relative SSE improvement below which the alternation stops early.
  double tolerance = 1e-10;
  std::size_t max_sweeps = 50;
  /// Ridge damping on the slopes is ridge_scale * M.
  double ridge_scale = 1e-9;
};

struct RegressionProblem {
  std::size_t dim = 1;
  std::vector<double> inputs;  // row-major, dim values per sample
  std::vector<double> targets;
  std::size_t pieces = 1;
  double lipschitz = 1.0;
  double upper = 1.0;
  FitSettings settings{};
  std::uint64_t seed = 0;
  /// Optional extra initialization (e.g. the previous iterate in fitted
  /// Q-iteration). Used as one additional restart.
  std::optional<MaxAffineFn> warm_start{};

  std::size_t size() const { return targets.size(); }
  const double* input(std::size_t m) const { return inputs.data() + m * dim; }

  void add(std::span<const double> x, double y) {
    if (x.size() != dim) throw DimensionMismatch("sample has wrong dimension for regression problem");
    inputs.insert(inputs.end(), x.begin(), x.end());
    targets.push_back(y);
  }
};

struct FitResult {
  MaxAffineFn fn;
  /// Mean squared residual over the samples.
  double risk = 0.0;
  /// Excess-risk estimate in summed-squares units: median restart SSE minus
  /// the best SSE. Zero when every restart lands on the same optimum.
  double epsilon = 0.0;
  std::size_t sweeps = 0;
  std::vector<double> restart_risks;
};

inline double empirical_risk(const MaxAffineFn& f, const RegressionProblem& p) {
  if (p.size() == 0) return 0.0;
  double sse = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    const double r = f.eval_unchecked(p.input(m)) - p.targets[m];
    sse += r * r;
  }
  return sse / static_cast<double>(p.size());
}

/// ceil(M^(d/(d+4))), floored at 1 and capped at k_max.
inline std::size_t select_piece_count(std::size_t samples, std::size_t dim,
                                      std::size_t k_max = std::numeric_limits<std::size_t>::max()) {
  if (samples <= 1 || dim == 0) return 1;
  const double raw = std::pow(static_cast<double>(samples),
                              static_cast<double>(dim) / static_cast<double>(dim + 4));
  const double nearest = std::round(raw);
  const double k = std::abs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, std::max<std::size_t>(k_max, 1));
}

namespace detail {

inline void validate_problem(const RegressionProblem& p) {
  if (p.size() == 0) throw EmptyData("regression problem has no samples");
  if (p.dim == 0) throw DimensionMismatch("regression input dimension must be >= 1");
  if (p.inputs.size() != p.dim * p.size())
    throw DimensionMismatch("regression inputs and targets have different lengths");
  if (!(p.lipschitz >= 0.0) || !(p.upper > 0.0)) throw InvalidBounds("regression needs L >= 0 and B > 0");
  if (p.pieces == 0) throw InvalidBounds("regression needs K >= 1");
}

/// Ridge-damped least squares on a subset of samples, with the slopes clamped
/// to [-L, L] and the intercept re-solved for the clamped slopes.
class AffineSolver {
 public:
  explicit AffineSolver(std::size_t dim) : dim_(dim), gram_(dim, dim), rhs_(dim), mean_(dim) {}

  template <class IndexRange>
  void fit(const RegressionProblem& p, const IndexRange& idx, double ridge, double* slope_out,
           double& intercept_out) {
    const std::size_t n = std::size(idx);
    mean_.setZero();
    double ybar = 0.0;
    for (auto m : idx) {
      const double* x = p.input(m);
      for (std::size_t j = 0; j < dim_; ++j) mean_[j] += x[j];
      ybar += p.targets[m];
    }
    mean_ /= static_cast<double>(n);
    ybar /= static_cast<double>(n);

    gram_.setZero();
    rhs_.setZero();
    for (auto m : idx) {
      const double* x = p.input(m);
      const double dy = p.targets[m] - ybar;
      for (std::size_t i = 0; i < dim_; ++i) {
        const double di = x[i] - mean_[i];
        rhs_[i] += di * dy;
        for (std::size_t j = 0; j <= i; ++j) gram_(i, j) += di * (x[j] - mean_[j]);
      }
    }
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = i + 1; j < dim_; ++j) gram_(i, j) = gram_(j, i);
      gram_(i, i) += ridge;
    }
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    if (gram_.diagonal().maxCoeff() > 0.0) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(gram_);
      alpha = ldlt.solve(rhs_);
      if (!alpha.allFinite()) alpha.setZero();
    }
    double c = ybar;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double a = std::clamp(alpha[static_cast<Eigen::Index>(j)], -p.lipschitz, p.lipschitz);
      slope_out[j] = a;
      c -= a * mean_[static_cast<Eigen::Index>(j)];
    }
    intercept_out = c;
  }

 private:
  std::size_t dim_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
  Eigen::VectorXd mean_;
};

struct Pieces {
  std::vector<double> slopes;
  std::vector<double> intercepts;
  std::size_t size() const { return intercepts.size(); }
};

/// Alternating partition least squares: assign every sample to its active
/// piece, refit each piece, repeat until the assignment stops changing.
class AlternatingFitter {
 public:
  explicit AlternatingFitter(const RegressionProblem& p)
      : p_(p),
        M_(p.size()),
        d_(p.dim),
        ridge_(p.settings.ridge_scale * static_cast<double>(p.size())),
        solver_(p.dim),
        assign_(p.size()),
        prev_assign_(p.size()),
        fitted_(p.size()) {
    lo_.assign(d_, std::numeric_limits<double>::infinity());
    hi_.assign(d_, -std::numeric_limits<double>::infinity());
    for (std::size_t m = 0; m < M_; ++m) {
      const double* x = p_.input(m);
      for (std::size_t j = 0; j < d_; ++j) {
        lo_[j] = std::min(lo_[j], x[j]);
        hi_[j] = std::max(hi_[j], x[j]);
      }
    }
    scale_.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) scale_[j] = hi_[j] > lo_[j] ? 1.0 / (hi_[j] - lo_[j]) : 1.0;
    local_size_ = std::max<std::size_t>(
        d_ + 1, std::min<std::size_t>(M_, (M_ + p.pieces - 1) / std::max<std::size_t>(p.pieces, 1)));
  }

  Pieces affine() {
    Pieces out;
    out.slopes.resize(d_);
    out.intercepts.resize(1);
    all_.resize(M_);
    std::iota(all_.begin(), all_.end(), std::size_t{0});
    solver_.fit(p_, all_, ridge_, out.slopes.data(), out.intercepts[0]);
    return out;
  }

  /// Affine fit of the nearest neighbours of sample `center`.
  void local_fit(std::size_t center, double* slope, double& intercept) {
    dist_.resize(M_);
    order_.resize(M_);
    const double* xc = p_.input(center);
    for (std::size_t m = 0; m < M_; ++m) {
      const double* x = p_.input(m);
      double s = 0.0;
      for (std::size_t j = 0; j < d_; ++j) {
        const double t = (x[j] - xc[j]) * scale_[j];
        s += t * t;
      }
      dist_[m] = s;
      order_[m] = m;
    }
    const std::size_t n = std::min(local_size_, M_);
    std::nth_element(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(n - 1), order_.end(),
                     [this](std::size_t a, std::size_t b) {
                       return dist_[a] < dist_[b] || (dist_[a] == dist_[b] && a < b);
                     });
    local_.assign(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(n));
    solver_.fit(p_, local_, ridge_, slope, intercept);
  }

  Pieces random_init(Rng& rng) {
    const std::size_t K = p_.pieces;
    Pieces out;
    out.slopes.resize(K * d_);
    out.intercepts.resize(K);
    std::vector<std::size_t> pool(M_);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t pick;
      if (k < M_) {
        std::uniform_int_distribution<std::size_t> u(k, M_ - 1);
        const std::size_t j = u(rng);
        std::swap(pool[k], pool[j]);
        pick = pool[k];
      } else {
        pick = std::uniform_int_distribution<std::size_t>(0, M_ - 1)(rng);
      }
      double* a = out.slopes.data() + k * d_;
      local_fit(pick, a, out.intercepts[k]);
      const double* xc = p_.input(pick);
      double mag = 1e-3;
      for (std::size_t j = 0; j < d_; ++j) mag = std::max(mag, std::abs(a[j]));
      double fitted = out.intercepts[k];
      for (std::size_t j = 0; j < d_; ++j) fitted += a[j] * xc[j];
      double c = fitted;
      for (std::size_t j = 0; j < d_; ++j) {
        a[j] = std::clamp(a[j] + 0.05 * mag * jitter(rng), -p_.lipschitz, p_.lipschitz);
        c -= a[j] * xc[j];
      }
      out.intercepts[k] = c;  // tangent plane through the local fit at the center
    }
    return out;
  }

  double sse(const Pieces& pc) {
    double s = 0.0;
    for (std::size_t m = 0; m < M_; ++m) {
      const double r = eval(pc, p_.input(m)) - p_.targets[m];
      s += r * r;
    }
    return s;
  }

  struct Outcome {
    Pieces pieces;
    double sse;
    std::size_t sweeps;
  };

  Outcome run(Pieces pc) {
    std::size_t K = pc.size();
    std::size_t respawns = 0;
    Pieces best = pc;
    double best_sse = assign_and_sse(pc);
    double last_sse = best_sse;
    std::size_t sweeps = 0;
    bool have_prev = false;
    members_.resize(K);
    for (std::size_t sweep = 1; sweep <= p_.settings.max_sweeps; ++sweep) {
      sweeps = sweep;
      if (have_prev && assign_ == prev_assign_) break;
      prev_assign_ = assign_;
      have_prev = true;

      for (auto& mem : members_) mem.clear();
      for (std::size_t m = 0; m < M_; ++m) members_[assign_[m]].push_back(m);
      empty_.clear();
      for (std::size_t k = 0; k < K; ++k) {
        if (members_[k].empty()) {
          empty_.push_back(k);
          continue;
        }
        solver_.fit(p_, members_[k], ridge_, pc.slopes.data() + k * d_, pc.intercepts[k]);
      }
      if (!empty_.empty()) {
        // Pieces that keep starving after a few respawns are dropped.
        if (respawns < kMaxRespawns) {
          respawn(pc);
          ++respawns;
        } else {
          drop_empty(pc);
          K = pc.size();
          members_.resize(K);
          empty_.clear();
          have_prev = false;
        }
      }

      const double s = assign_and_sse(pc);
      if (s < best_sse) {
        best_sse = s;
        best = pc;
      }
      const double improvement = last_sse - s;
      last_sse = s;
      if (empty_.empty() && sweep > 1 && std::abs(improvement) <= p_.settings.tolerance * std::max(s, 1e-300))
        break;
    }
    return {std::move(best), best_sse, sweeps};
  }

  /// Fills assign_ with the active piece of every sample and returns the SSE.
  double assign_and_sse(const Pieces& pc) {
    double s = 0.0;
    for (std::size_t m = 0; m < M_; ++m) {
      const double* x = p_.input(m);
      std::size_t arg = 0;
      double best = piece(pc, 0, x, d_);
      for (std::size_t k = 1; k < pc.size(); ++k) {
        const double v = piece(pc, k, x, d_);
        if (v > best) {
          best = v;
          arg = k;
        }
      }
      assign_[m] = arg;
      const double r = best - p_.targets[m];
      s += r * r;
    }
    return s;
  }

  static double piece(const Pieces& pc, std::size_t k, const double* x, std::size_t d) {
    const double* a = pc.slopes.data() + k * d;
    double v = pc.intercepts[k];
    for (std::size_t j = 0; j < d; ++j) v += a[j] * x[j];
    return v;
  }

  double eval(const Pieces& pc, const double* x) const {
    double best = piece(pc, 0, x, d_);
    for (std::size_t k = 1; k < pc.size(); ++k) best = std::max(best, piece(pc, k, x, d_));
    return best;
  }

  std::size_t argmax(const Pieces& pc, const double* x) const {
    std::size_t arg = 0;
    double best = piece(pc, 0, x, d_);
    for (std::size_t k = 1; k < pc.size(); ++k) {
      const double v = piece(pc, k, x, d_);
      if (v > best) {
        best = v;
        arg = k;
      }
    }
    return arg;
  }

 private:
  static constexpr std::size_t kMaxRespawns = 3;

  void drop_empty(Pieces& pc) const {
    Pieces kept;
    std::size_t e = 0;
    for (std::size_t k = 0; k < pc.size(); ++k) {
      if (e < empty_.size() && empty_[e] == k) {
        ++e;
        continue;
      }
      kept.slopes.insert(kept.slopes.end(), pc.slopes.begin() + static_cast<std::ptrdiff_t>(k * d_),
                         pc.slopes.begin() + static_cast<std::ptrdiff_t>((k + 1) * d_));
      kept.intercepts.push_back(pc.intercepts[k]);
    }
    pc = std::move(kept);
  }

  // Empty pieces restart as local fits around the samples the remaining
  // pieces underestimate the most.
  void respawn(Pieces& pc) {
    const std::size_t K = pc.size();
    std::vector<char> live(K, 1);
    for (auto k : empty_) live[k] = 0;
    for (std::size_t m = 0; m < M_; ++m) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k)
        if (live[k]) best = std::max(best, piece(pc, k, p_.input(m), d_));
      fitted_[m] = p_.targets[m] - best;
    }
    std::vector<std::size_t> candidates(M_);
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    std::sort(candidates.begin(), candidates.end(), [this](std::size_t a, std::size_t b) {
      return fitted_[a] > fitted_[b] || (fitted_[a] == fitted_[b] && a < b);
    });
    // Each new piece is centred on the worst sample not already inside the
    // neighbourhood of an earlier respawn, so the new pieces do not pile up.
    std::vector<char> covered(M_, 0);
    std::size_t next = 0;
    for (std::size_t i = 0; i < empty_.size(); ++i) {
      while (next < M_ && covered[candidates[next]]) ++next;
      const std::size_t center = next < M_ ? candidates[next] : candidates[i % M_];
      const std::size_t k = empty_[i];
      local_fit(center, pc.slopes.data() + k * d_, pc.intercepts[k]);
      for (auto m : local_) covered[m] = 1;
    }
  }

  const RegressionProblem& p_;
  std::size_t M_;
  std::size_t d_;
  double ridge_;
  AffineSolver solver_;
  std::vector<double> lo_, hi_, scale_;
  std::size_t local_size_ = 1;
  std::vector<std::size_t> assign_, prev_assign_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> empty_;
  std::vector<double> fitted_;
  std::vector<double> dist_;
  std::vector<std::size_t> order_, local_, all_;
};

inline MaxAffineFn to_fn(const Pieces& pc, const RegressionProblem& p, bool dedupe) {
  if (!dedupe) return MaxAffineFn(p.dim, pc.slopes, pc.intercepts, p.lipschitz, p.upper);
  std::vector<double> slopes;
  std::vector<double> intercepts;
  for (std::size_t k = 0; k < pc.size(); ++k) {
    const double* a = pc.slopes.data() + k * p.dim;
    bool dup = false;
    for (std::size_t q = 0; q < intercepts.size() && !dup; ++q) {
      dup = intercepts[q] == pc.intercepts[k] &&
            std::equal(a, a + p.dim, slopes.begin() + static_cast<std::ptrdiff_t>(q * p.dim));
    }
    if (dup) continue;
    slopes.insert(slopes.end(), a, a + p.dim);
    intercepts.push_back(pc.intercepts[k]);
  }
  return MaxAffineFn(p.dim, std::move(slopes), std::move(intercepts), p.lipschitz, p.upper);
}

}  // namespace detail

/// Single affine fit (the K = 1 least-squares estimate), slopes clamped to L.
inline MaxAffineFn fit_affine_ols(const RegressionProblem& problem) {
  detail::validate_problem(problem);
  detail::AlternatingFitter fitter(problem);
  return detail::to_fn(fitter.affine(), problem, false);
}

/// Max-affine least squares with K pieces and |slope|_inf <= L.
///
/// Restart 0 grows from the global affine fit, restarts 1.. start from
/// tangent planes of local fits at random samples, and a warm start (if any)
/// is one more restart. The best SSE seen during any alternation wins, so the
/// result never does worse than the affine fit.
inline FitResult fit_max_affine(const RegressionProblem& problem) {
  detail::validate_problem(problem);
  detail::AlternatingFitter fitter(problem);
  const std::size_t K = problem.pieces;
  const std::size_t d = problem.dim;

  detail::Pieces affine = fitter.affine();
  detail::Pieces best_pieces = affine;
  double best_sse = fitter.sse(affine);
  std::size_t sweeps = 0;
  std::vector<double> restart_sse;

  auto consider = [&](detail::AlternatingFitter::Outcome&& out) {
    sweeps += out.sweeps;
    restart_sse.push_back(out.sse);
    if (out.sse < best_sse) {
      best_sse = out.sse;
      best_pieces = std::move(out.pieces);
    }
  };

  if (K > 1) {
    detail::Pieces grown;
    for (std::size_t k = 0; k < K; ++k) {
      grown.slopes.insert(grown.slopes.end(), affine.slopes.begin(), affine.slopes.end());
      grown.intercepts.push_back(affine.intercepts[0]);
    }
    consider(fitter.run(std::move(grown)));
    Rng rng = make_rng(problem.seed, {0x6d6178616666ULL});
    for (std::size_t r = 1; r < std::max<std::size_t>(problem.settings.restarts, 1); ++r)
      consider(fitter.run(fitter.random_init(rng)));
  } else {
    restart_sse.push_back(best_sse);
  }

  if (problem.warm_start && problem.warm_start->dim() == d) {
    const MaxAffineFn& w = *problem.warm_start;
    detail::Pieces seed;
    seed.slopes.reserve(w.size() * d);
    for (std::size_t k = 0; k < w.size(); ++k) {
      for (double a : w.slope(k)) seed.slopes.push_back(std::clamp(a, -problem.lipschitz, problem.lipschitz));
      seed.intercepts.push_back(w.intercept(k));
    }
    consider(fitter.run(std::move(seed)));
  }

  FitResult result;
  result.fn = detail::to_fn(best_pieces, problem, true);
  const double M = static_cast<double>(problem.size());
  result.risk = best_sse / M;
  result.sweeps = sweeps;
  std::vector<double> sorted = restart_sse;
  std::sort(sorted.begin(), sorted.end());
  result.epsilon = std::max(0.0, sorted[sorted.size() / 2] - best_sse);
  for (double s : restart_sse) result.restart_risks.push_back(s / M);
  return result;
}

// ---------------------------------------------------------------------------
// Input-convex network form.
//
// K layers of width one on the doubled input x' = [x, -x]:
//   y_1     = relu(W_0 . x' + beta_0)
//   y_{i+1} = relu(y_i + W_i . x' + beta_i)
// with every W_i >= 0. Writing w_i = W_i[:d] - W_i[d:], the network equals
// relu(max_i (alpha_i . x + c_i)) with alpha_i = sum_{j >= i-1} w_j and
// c_i = sum_{j >= i-1} beta_j. Shifts are added to the pre-activation.

struct IcnnLayer {
  std::vector<double> weights;  // 2d entries, all >= 0
  double shift = 0.0;
};

struct IcnnParams {
  std::size_t dim = 1;
  double lipschitz = 0.0;
  double upper = 1.0;
  std::vector<IcnnLayer> layers;

  std::size_t depth() const { return layers.size(); }

  /// Effective weight w_i = W_i[:d] - W_i[d:].
  std::vector<double> effective_weight(std::size_t i) const {
    std::vector<double> w(dim);
    for (std::size_t j = 0; j < dim; ++j) w[j] = layers[i].weights[j] - layers[i].weights[dim + j];
    return w;
  }

  void validate() const {
    if (layers.empty()) throw InvariantViolation("network needs at least one layer");
    for (const auto& layer : layers) {
      if (layer.weights.size() != 2 * dim) throw DimensionMismatch("layer weight has wrong width");
      for (double w : layer.weights)
        if (!(w >= 0.0)) throw InvariantViolation("network input weights must be nonnegative");
      if (!std::isfinite(layer.shift)) throw InvariantViolation("network shift must be finite");
    }
    const double tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, lipschitz);
    std::vector<double> tail(dim, 0.0);
    for (std::size_t i = layers.size(); i-- > 0;) {
      const auto w = effective_weight(i);
      for (std::size_t j = 0; j < dim; ++j) {
        tail[j] += w[j];
        if (std::abs(tail[j]) > lipschitz + tol)
          throw InvariantViolation("cumulative network weight exceeds the Lipschitz bound");
      }
    }
  }

  double operator()(std::span<const double> x) const {
    if (x.size() != dim) throw DimensionMismatch("input has wrong dimension for network");
    double y = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& W = layers[i].weights;
      double pre = (i == 0 ? 0.0 : y) + layers[i].shift;
      for (std::size_t j = 0; j < dim; ++j) pre += W[j] * x[j] - W[dim + j] * x[j];
      y = std::max(0.0, pre);
    }
    return y;
  }
};

inline IcnnParams max_affine_to_icnn(const MaxAffineFn& f) {
  const std::size_t K = f.size();
  const std::size_t d = f.dim();
  IcnnParams p;
  p.dim = d;
  p.lipschitz = f.lipschitz();
  p.upper = f.upper();
  p.layers.resize(K);
  auto split = [d](const std::vector<double>& w) {
    std::vector<double> out(2 * d);
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = std::max(w[j], 0.0);
      out[d + j] = std::max(-w[j], 0.0);
    }
    return out;
  };
  std::vector<double> w(d);
  for (std::size_t i = 0; i + 1 < K; ++i) {
    const auto a = f.slope(i);
    const auto b = f.slope(i + 1);
    for (std::size_t j = 0; j < d; ++j) w[j] = a[j] - b[j];
    p.layers[i].weights = split(w);
    p.layers[i].shift = f.intercept(i) - f.intercept(i + 1);
  }
  const auto last = f.slope(K - 1);
  p.layers[K - 1].weights = split(std::vector<double>(last.begin(), last.end()));
  p.layers[K - 1].shift = f.intercept(K - 1);
  return p;
}

/// Inverts the layer recurrences. The returned function lists the K
/// reconstructed pieces followed by the zero piece contributed by the final
/// rectification, so it evaluates exactly to the network everywhere.
inline MaxAffineFn icnn_to_max_affine(const IcnnParams& p) {
  p.validate();
  const std::size_t K = p.depth();
  const std::size_t d = p.dim;
  std::vector<double> slopes((K + 1) * d, 0.0);
  std::vector<double> intercepts(K + 1, 0.0);
  std::vector<double> tail(d, 0.0);
  double shift_tail = 0.0;
  for (std::size_t i = K; i-- > 0;) {
    const auto w = p.effective_weight(i);
    for (std::size_t j = 0; j < d; ++j) tail[j] += w[j];
    shift_tail += p.layers[i].shift;
    std::copy(tail.begin(), tail.end(), slopes.begin() + static_cast<std::ptrdiff_t>(i * d));
    intercepts[i] = shift_tail;
  }
  return MaxAffineFn(d, std::move(slopes), std::move(intercepts), p.lipschitz, p.upper);
}

// ---------------------------------------------------------------------------
// Text format:
//   maxaffine v1 d K L B
//   alpha_1 ... alpha_d c        (K lines)

inline void write_max_affine(std::ostream& os, const MaxAffineFn& f) {
  const auto old = os.precision(17);
  os << "maxaffine v1 " << f.dim() << ' ' << f.size() << ' ' << f.lipschitz() << ' ' << f.upper() << '\n';
  for (std::size_t k = 0; k < f.size(); ++k) {
    for (double a : f.slope(k)) os << a << ' ';
    os << f.intercept(k) << '\n';
  }
  os.precision(old);
}

inline MaxAffineFn read_max_affine(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("max-affine model: missing header");
  std::istringstream header(line);
  std::string magic, version;
  std::size_t d = 0, K = 0;
  double L = 0.0, B = 0.0;
  if (!(header >> magic >> version >> d >> K >> L >> B) || magic != "maxaffine" || version != "v1")
    throw ParseError("max-affine model: bad header '" + line + "'");
  std::vector<double> slopes(d * K);
  std::vector<double> intercepts(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (!std::getline(is, line)) throw ParseError("max-affine model: expected " + std::to_string(K) + " pieces");
    std::istringstream row(line);
    for (std::size_t j = 0; j < d; ++j)
      if (!(row >> slopes[k * d + j])) throw ParseError("max-affine model: short piece line");
    if (!(row >> intercepts[k])) throw ParseError("max-affine model: missing intercept");
    double extra;
    if (row >> extra) throw ParseError("max-affine model: trailing values on piece line");
  }
  return MaxAffineFn(d, std::move(slopes), std::move(intercepts), L, B);
}

}  // namespace mfgham
