#pragma once

// Outer mean-field iteration: z^t = Phi(Psi(z^{t-1}, pi^{t-1})), then a fresh
// dataset under z^t, concave fitted Q-iteration, and the Gibbs policy of the
// fitted Q.

#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <memory>
#include <ostream>
#include <sstream>
#include <vector>

#include "aiyagari.hpp"
#include "cfqi.hpp"
#include "error.hpp"
#include "log.hpp"
#include "mdp.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace mfgham {

template <class E>
concept MeanFieldEnvironment = requires(const E& e, const MeanFieldTerm& z, const AggregateIndicators& xi,
                                        const GibbsPolicy& pi, std::size_t m, std::uint64_t seed, unsigned threads) {
  { e.feasibility(z) } -> std::convertible_to<FeasibilityOracle>;
  { e.sample_dataset(z, m, seed) } -> std::same_as<Dataset>;
  { e.aggregate_psi(z, pi, seed, threads) } -> std::same_as<AggregateIndicators>;
  { e.production_unclamped(xi) } -> std::same_as<MeanFieldTerm>;
  { e.clamp(z) } -> std::same_as<MeanFieldTerm>;
  { e.box() } -> std::convertible_to<MeanFieldBox>;
  { e.levels() } -> std::convertible_to<std::size_t>;
  { e.labor_values() } -> std::convertible_to<std::vector<double>>;
  { e.gamma() } -> std::convertible_to<double>;
  { e.zeta() } -> std::convertible_to<double>;
  { e.q_lipschitz(true) } -> std::convertible_to<double>;
};

struct SolverConfig {
  std::size_t rounds = 15;
  std::size_t samples = 1000;
  MeanFieldTerm z0{1.0, 0.1};
  /// Only the iteration count, fit settings, piece rule, joint/warm flags
  /// and thread count are read; discount, bounds and levels come from the
  /// environment.
  CfqiConfig cfqi{};
  std::size_t policy_grid = 256;
  /// Reuse one random stream for every round's dataset and population
  /// simulation (each round still regenerates both under its own z).
  bool common_random_numbers = true;
  unsigned threads = 1;
  double divergence_factor = 10.0;
};

struct IterationDiagnostics {
  std::size_t t = 0;
  MeanFieldTerm z;
  double delta_l1 = 0.0;
  double cfqi_mean_risk = 0.0;
  AggregateIndicators psi;
  double seconds = 0.0;
};

struct EquilibriumResult {
  std::vector<MeanFieldTerm> trajectory;  // z^0 .. z^T
  std::shared_ptr<const GibbsPolicy> policy;
  std::vector<IterationDiagnostics> diagnostics;  // one per round t = 1..T
  std::uint64_t seed = 0;

  const MeanFieldTerm& final_z() const { return trajectory.back(); }
};

template <MeanFieldEnvironment Env>
CfqiConfig cfqi_config_for(const Env& env, const CfqiConfig& overrides) {
  CfqiConfig c = overrides;
  c.gamma = env.gamma();
  c.levels = env.levels();
  c.labor = env.labor_values();
  c.lipschitz = env.q_lipschitz(c.joint_fit);
  return c;
}

template <MeanFieldEnvironment Env>
EquilibriumResult solve(const Env& env, const SolverConfig& cfg, std::uint64_t seed) {
  if (cfg.samples == 0) throw EmptyData("solve: need at least one sample per round");
  const CfqiConfig cfqi_cfg = cfqi_config_for(env, cfg.cfqi);
  const MeanFieldBox box = env.box();
  const double B = 1.0 / (1.0 - env.gamma());

  EquilibriumResult result;
  result.seed = seed;
  MeanFieldTerm z = env.clamp(cfg.z0);
  result.trajectory.push_back(z);
  auto policy = std::make_shared<const GibbsPolicy>(uniform_policy(env.feasibility(z), env.levels(), B, cfg.policy_grid));

  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t round_tag = cfg.common_random_numbers ? 0 : t;
    const AggregateIndicators xi = env.aggregate_psi(z, *policy, derive_seed(seed, {1, round_tag}), cfg.threads);
    const MeanFieldTerm raw = env.production_unclamped(xi);
    const double f = cfg.divergence_factor;
    if (!std::isfinite(raw.wage) || !std::isfinite(raw.rent) ||
        raw.wage > box.wage_max + f * box.wage_width() || raw.wage < box.wage_min - f * box.wage_width() ||
        raw.rent > box.rent_max + f * box.rent_width() || raw.rent < box.rent_min - f * box.rent_width()) {
      std::ostringstream msg;
      msg << "round " << t << ": firm mapping produced z = (" << raw.wage << ", " << raw.rent
          << ") far outside the mean-field box (K = " << xi.capital << ", N = " << xi.labor << ")";
      throw IterationDiverged(msg.str());
    }
    const MeanFieldTerm next = env.clamp(raw);

    const Dataset data = env.sample_dataset(next, cfg.samples, derive_seed(seed, {2, round_tag}));
    const FeasibilityOracle feasible = env.feasibility(next);
    const CfqiResult fitted = cfqi(data, feasible, cfqi_cfg, derive_seed(seed, {3, round_tag}));
    policy = std::make_shared<const GibbsPolicy>(std::make_shared<const ConcaveQ>(fitted.q), env.zeta(), feasible,
                                                 cfg.policy_grid);

    IterationDiagnostics diag;
    diag.t = t;
    diag.z = next;
    diag.delta_l1 = l1_distance(next, z);
    diag.cfqi_mean_risk = fitted.mean_risk();
    diag.psi = xi;
    diag.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log::debug("round ", t, ": z = (", next.wage, ", ", next.rent, "), |dz|_1 = ", diag.delta_l1,
               ", K = ", xi.capital, ", ", diag.seconds, " s");
    result.diagnostics.push_back(diag);
    result.trajectory.push_back(next);
    z = next;
  }
  result.policy = policy;
  return result;
}

struct ContractionReport {
  std::vector<double> ratios;
  double geometric_mean = 0.0;
};

/// Ratios |z^{t+1} - z^t|_1 / |z^t - z^{t-1}|_1. A zero increment gives a zero
/// ratio, and any zero ratio makes the geometric mean zero.
inline ContractionReport contraction_diagnostics(const std::vector<MeanFieldTerm>& trajectory) {
  if (trajectory.size() < 3) throw InsufficientTrajectory("contraction diagnostics need at least 3 iterates");
  ContractionReport rep;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t t = 1; t + 1 < trajectory.size(); ++t) {
    const double prev = l1_distance(trajectory[t], trajectory[t - 1]);
    const double next = l1_distance(trajectory[t + 1], trajectory[t]);
    const double r = (prev == 0.0 || next == 0.0) ? 0.0 : next / prev;
    rep.ratios.push_back(r);
    if (r == 0.0) zero = true;
    else log_sum += std::log(r);
  }
  rep.geometric_mean = zero ? 0.0 : std::exp(log_sum / static_cast<double>(rep.ratios.size()));
  return rep;
}

inline ContractionReport contraction_diagnostics(const EquilibriumResult& result) {
  return contraction_diagnostics(result.trajectory);
}

/// t,wage,rent,delta_l1,cfqi_mean_risk,psi_K,psi_N,seconds (t = 0 is z^0).
inline void write_trajectory_csv(std::ostream& os, const EquilibriumResult& r) {
  const auto old = os.precision(17);
  os << "t,wage,rent,delta_l1,cfqi_mean_risk,psi_K,psi_N,seconds\n";
  os << 0 << ',' << r.trajectory.front().wage << ',' << r.trajectory.front().rent << ",0,0,0,0,0\n";
  for (const auto& d : r.diagnostics) {
    os << d.t << ',' << d.z.wage << ',' << d.z.rent << ',' << d.delta_l1 << ',' << d.cfqi_mean_risk << ','
       << d.psi.capital << ',' << d.psi.labor << ',' << d.seconds << '\n';
  }
  os.precision(old);
}

}  // namespace mfgham
