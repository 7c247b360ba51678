#pragma once

// Concave fitted Q-iteration: tau rounds of sampled Bellman targets followed
// by a shape-constrained (max-affine) fit of B - target.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "error.hpp"
#include "log.hpp"
#include "mdp.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "shape_reg.hpp"

namespace mfgham {

/// Leading-order iteration count ceil((4/(d+4)) log M / log(1/gamma)),
/// floored at 5.
inline std::size_t default_iteration_count(std::size_t samples, std::size_t dim, double gamma) {
  if (samples < 2 || !(gamma > 0.0 && gamma < 1.0)) return 5;
  const double tau = (4.0 / static_cast<double>(dim + 4)) * std::log(static_cast<double>(samples)) /
                     std::log(1.0 / gamma);
  return std::max<std::size_t>(5, static_cast<std::size_t>(std::ceil(tau - 1e-12)));
}

struct CfqiConfig {
  std::size_t iterations = 0;  // 0 selects default_iteration_count
  double gamma = 0.95;
  double lipschitz = 1.0;  // slope bound of the convex parts
  std::size_t levels = 2;
  std::vector<double> labor{0.0, 1.0};
  bool joint_fit = false;
  bool warm_start = true;
  /// Random restarts per fit once the previous iterate seeds a warm start.
  std::size_t warm_restarts = 2;
  TargetSettings targets{};
  unsigned threads = 1;

  double bound() const { return 1.0 / (1.0 - gamma); }
  std::size_t fit_dim() const { return joint_fit ? 3 : 2; }

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0) && gamma != 0.0) throw ConfigError("cfqi: discount must lie in [0, 1)");
    if (levels == 0) throw ConfigError("cfqi: need at least one income level");
    if (joint_fit && labor.size() != levels) throw ConfigError("cfqi: joint fit needs one labor value per level");
    if (!(lipschitz >= 0.0)) throw ConfigError("cfqi: Lipschitz bound must be >= 0");
  }
};

struct CfqiTraceRow {
  std::size_t iter = 0;
  std::size_t level = 0;
  double risk = 0.0;
  double epsilon = 0.0;
  double sup_delta = 0.0;
};

struct CfqiResult {
  ConcaveQ q;
  std::vector<CfqiTraceRow> trace;
  std::size_t iterations = 0;

  /// Mean fit risk over the groups of the last iteration.
  double mean_risk() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& row : trace) {
      if (row.iter != iterations) continue;
      s += row.risk;
      ++n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

inline void write_cfqi_trace_csv(std::ostream& os, const std::vector<CfqiTraceRow>& trace) {
  const auto old = os.precision(17);
  os << "iter,level,risk,epsilon,sup_delta\n";
  for (const auto& r : trace)
    os << r.iter << ',' << r.level << ',' << r.risk << ',' << r.epsilon << ',' << r.sup_delta << '\n';
  os.precision(old);
}

/// Fits the convex part f = B - Q to a problem whose targets are Q values.
inline FitResult fit_concave(const RegressionProblem& q_targets) {
  RegressionProblem convex = q_targets;
  for (double& y : convex.targets) y = q_targets.upper - y;
  return fit_max_affine(convex);
}

/// Called after every round with the round number and the new iterate.
using CfqiObserver = std::function<void(std::size_t, const ConcaveQ&)>;

/// Runs tau rounds starting from Q = 0. The same dataset is reused in every
/// round. `next_intervals[m]` is the feasible set at the m-th next state.
inline CfqiResult cfqi(const Dataset& data, const std::vector<FeasibleInterval>& next_intervals,
                       const CfqiConfig& cfg, std::uint64_t seed, const CfqiObserver& observe = {}) {
  cfg.validate();
  if (data.size() == 0) throw EmptyData("cfqi: dataset is empty");
  const double B = cfg.bound();
  const std::size_t tau =
      cfg.iterations > 0 ? cfg.iterations : default_iteration_count(data.size(), cfg.fit_dim(), cfg.gamma);

  TargetSettings ts = cfg.targets;
  ts.lipschitz = cfg.lipschitz;

  ConcaveQ q = cfg.joint_fit ? ConcaveQ::zero_joint(cfg.labor, B, cfg.lipschitz)
                             : ConcaveQ::zero(cfg.levels, B, cfg.lipschitz);
  const std::size_t groups = cfg.joint_fit ? 1 : cfg.levels;

  std::vector<std::size_t> counts(groups, 0);
  for (const auto& s : data.samples) {
    if (s.state.level < 0 || static_cast<std::size_t>(s.state.level) >= cfg.levels)
      throw InvariantViolation("cfqi: sample has an income level outside the configured set");
    ++counts[cfg.joint_fit ? 0 : static_cast<std::size_t>(s.state.level)];
  }
  for (std::size_t g = 0; g < groups; ++g)
    if (counts[g] == 0) log::warn("cfqi: income level ", g, " absent from data; its Q stays at zero");

  CfqiResult result{q, {}, tau};
  std::vector<double> prev_q(data.size(), 0.0);
  for (std::size_t it = 1; it <= tau; ++it) {
    auto problems = bellman_targets(data, q, cfg.gamma, next_intervals, ts);
    std::vector<MaxAffineFn> fns(groups);
    std::vector<FitResult> fits(groups);
    parallel_for(groups, cfg.threads, [&](std::size_t g) {
      if (problems[g].size() == 0) {
        fns[g] = MaxAffineFn::constant(cfg.fit_dim(), B, cfg.lipschitz, B);
        return;
      }
      problems[g].seed = derive_seed(seed, {it, g});
      if (cfg.warm_start && it > 1) {
        problems[g].warm_start = q.convex_part(g);
        problems[g].settings.restarts = std::min(problems[g].settings.restarts, cfg.warm_restarts);
      }
      fits[g] = fit_concave(problems[g]);
      fns[g] = fits[g].fn;
    });
    q = cfg.joint_fit ? ConcaveQ(std::move(fns[0]), cfg.labor, B) : ConcaveQ(std::move(fns), B);

    std::vector<double> sup(groups, 0.0);
    for (std::size_t m = 0; m < data.size(); ++m) {
      const auto& s = data.samples[m];
      const double v = q(s.state, s.action);
      const std::size_t g = cfg.joint_fit ? 0 : static_cast<std::size_t>(s.state.level);
      sup[g] = std::max(sup[g], std::abs(v - prev_q[m]));
      prev_q[m] = v;
    }
    for (std::size_t g = 0; g < groups; ++g)
      result.trace.push_back({it, g, fits[g].risk, fits[g].epsilon, sup[g]});
    if (observe) observe(it, q);
  }
  result.q = std::move(q);
  return result;
}

inline CfqiResult cfqi(const Dataset& data, const FeasibilityOracle& feasible, const CfqiConfig& cfg,
                       std::uint64_t seed, const CfqiObserver& observe = {}) {
  std::vector<FeasibleInterval> next;
  next.reserve(data.size());
  for (const auto& s : data.samples) next.push_back(feasible(s.next));
  return cfqi(data, next, cfg, seed, observe);
}

}  // namespace mfgham
