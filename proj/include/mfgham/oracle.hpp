#pragma once

// Model-based reference solution. Uses the exact reward, chain and budget set
// of the Aiyagari model: value iteration on a (b, w, a) grid, the Gibbs policy
// on that grid, the stationary population by deterministic mass transport,
// then the firm mapping, repeated until z stops moving.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <sstream>
#include <vector>

#include "aiyagari.hpp"
#include "error.hpp"
#include "log.hpp"
#include "mdp.hpp"

namespace mfgham {

struct GridSpec {
  std::size_t b_points = 400;
  std::size_t a_cells = 400;  // per state, spanning Gamma_z(s); must be even
  double vi_tol = 1e-10;
  double fixed_point_tol = 1e-8;
  std::size_t max_rounds = 500;
  std::size_t max_vi_sweeps = 100000;
  double distribution_tol = 1e-13;
  std::size_t max_distribution_sweeps = 200000;

  /// Same domain with every spacing halved.
  GridSpec refined() const {
    GridSpec g = *this;
    g.b_points = 2 * (b_points - 1) + 1;
    g.a_cells = 2 * a_cells;
    return g;
  }

  void validate() const {
    if (b_points < 2) throw ConfigError("oracle grid needs at least 2 capital points");
    if (a_cells < 2 || a_cells % 2 != 0) throw ConfigError("oracle action grid needs an even cell count >= 2");
    if (!(vi_tol > 0.0) || !(fixed_point_tol > 0.0)) throw ConfigError("oracle tolerances must be positive");
  }
};

/// Optimal values under a fixed z on the capital grid. Off-grid next-period
/// values are linear interpolants, so Q is defined for every feasible (b, w, a).
class GridSolution {
 public:
  GridSolution() = default;

  GridSolution(const AiyagariEnv& env, const MeanFieldTerm& z, const GridSpec& spec,
               const GridSolution* warm = nullptr)
      : env_(&env), z_(z), spec_(spec) {
    spec_.validate();
    const std::size_t nb = spec_.b_points, W = env.levels(), na = spec_.a_cells + 1;
    const double b_max = env.config().b_max;
    grid_.resize(nb);
    for (std::size_t i = 0; i < nb; ++i) grid_[i] = b_max * static_cast<double>(i) / static_cast<double>(nb - 1);
    grid_.back() = b_max;

    idx_.resize(nb * W * na);
    frac_.resize(nb * W * na);
    reward_.resize(nb * W * na);
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t w = 0; w < W; ++w) {
        const HouseholdState s{grid_[i], static_cast<int>(w)};
        const double hi = env.feasible(z, s).hi;
        for (std::size_t j = 0; j < na; ++j) {
          const double a = j + 1 == na ? hi : hi * static_cast<double>(j) / static_cast<double>(na - 1);
          const std::size_t k = node(i, w, j);
          locate(a, idx_[k], frac_[k]);
          reward_[k] = env.reward_unchecked(z, s, a);
        }
      }

    value_.assign(nb * W, 0.0);
    if (warm && warm->value_.size() == value_.size()) value_ = warm->value_;
    iterate();
  }

  const std::vector<double>& grid() const { return grid_; }
  const GridSpec& spec() const { return spec_; }
  const MeanFieldTerm& z() const { return z_; }
  std::size_t sweeps() const { return sweeps_; }
  double value(std::size_t i, std::size_t w) const { return value_[i * levels() + w]; }

  /// r_z(s, a) + gamma E V(a, w').
  double q(double b, int w, double a) const {
    const HouseholdState s{b, w};
    std::size_t k;
    double t;
    locate(a, k, t);
    return env_->reward_unchecked(z_, s, a) + env_->gamma() * expected(static_cast<std::size_t>(w), k, t);
  }
  double q(const HouseholdState& s, double a) const { return q(s.capital, s.level, a); }

  /// Gibbs policy on the action nodes of grid state (i, w): Simpson weights
  /// times exp(Q / zeta), normalized to sum to one.
  std::vector<double> policy_masses(std::size_t i, std::size_t w, double zeta) const {
    const std::size_t na = spec_.a_cells + 1;
    std::vector<double> p(na);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < na; ++j) {
      p[j] = node_q(i, w, j) / zeta;
      top = std::max(top, p[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < na; ++j) {
      const double sw = (j == 0 || j + 1 == na) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
      p[j] = sw * std::exp(p[j] - top);
      total += p[j];
    }
    for (double& v : p) v /= total;
    return p;
  }

  /// Capital-grid cell and interpolation weight of the j-th action node.
  std::size_t node_cell(std::size_t i, std::size_t w, std::size_t j) const { return idx_[node(i, w, j)]; }
  double node_frac(std::size_t i, std::size_t w, std::size_t j) const { return frac_[node(i, w, j)]; }

 private:
  std::size_t levels() const { return env_->levels(); }
  std::size_t node(std::size_t i, std::size_t w, std::size_t j) const {
    return (i * levels() + w) * (spec_.a_cells + 1) + j;
  }

  void locate(double a, std::size_t& k, double& t) const {
    const std::size_t nb = grid_.size();
    const double h = grid_.back() / static_cast<double>(nb - 1);
    const double x = std::clamp(a / h, 0.0, static_cast<double>(nb - 1));
    k = std::min(nb - 2, static_cast<std::size_t>(x));
    t = std::clamp(x - static_cast<double>(k), 0.0, 1.0);
  }

  double expected(std::size_t w, std::size_t k, double t) const {
    const auto& P = env_->config().chain[w];
    const std::size_t W = levels();
    double ev = 0.0;
    for (std::size_t v = 0; v < W; ++v)
      if (P[v] != 0.0) ev += P[v] * ((1.0 - t) * value_[k * W + v] + t * value_[(k + 1) * W + v]);
    return ev;
  }

  double node_q(std::size_t i, std::size_t w, std::size_t j) const {
    const std::size_t k = node(i, w, j);
    const std::size_t c = idx_[k];
    const double t = frac_[k];
    return reward_[k] + env_->gamma() * ((1.0 - t) * ev_[w * grid_.size() + c] + t * ev_[w * grid_.size() + c + 1]);
  }

  void refresh_expectation() {
    const std::size_t nb = grid_.size(), W = levels();
    ev_.assign(W * nb, 0.0);
    for (std::size_t w = 0; w < W; ++w) {
      const auto& P = env_->config().chain[w];
      for (std::size_t i = 0; i < nb; ++i) {
        double e = 0.0;
        for (std::size_t v = 0; v < W; ++v) e += P[v] * value_[i * W + v];
        ev_[w * nb + i] = e;
      }
    }
  }

  void iterate() {
    const std::size_t nb = grid_.size(), W = levels(), na = spec_.a_cells + 1;
    std::vector<double> next(value_.size());
    for (sweeps_ = 1; sweeps_ <= spec_.max_vi_sweeps; ++sweeps_) {
      refresh_expectation();
      double diff = 0.0;
      for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t w = 0; w < W; ++w) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < na; ++j) best = std::max(best, node_q(i, w, j));
          next[i * W + w] = best;
          diff = std::max(diff, std::abs(best - value_[i * W + w]));
        }
      value_.swap(next);
      if (diff <= spec_.vi_tol) {
        refresh_expectation();
        return;
      }
    }
    throw OracleNoConvergence("oracle value iteration did not reach its tolerance");
  }

  const AiyagariEnv* env_ = nullptr;
  MeanFieldTerm z_;
  GridSpec spec_;
  std::vector<double> grid_;
  std::vector<std::size_t> idx_;
  std::vector<double> frac_;
  std::vector<double> reward_;
  std::vector<double> value_;  // (i, w) row-major
  std::vector<double> ev_;     // (w, i): sum_v P[w][v] V(i, v)
  std::size_t sweeps_ = 0;
};

/// Stationary distribution of (b, w) under the grid Gibbs policy. Mass sent to
/// an off-grid saving is split between the two neighboring grid points.
/// Returns masses indexed (i, w) row-major; `warm` may hold a previous answer.
inline std::vector<double> stationary_population(const AiyagariEnv& env, const GridSolution& sol,
                                                 std::vector<double> warm = {}) {
  const GridSpec& spec = sol.spec();
  const std::size_t nb = spec.b_points, W = env.levels(), na = spec.a_cells + 1;
  const double zeta = env.zeta();

  // Collapse the policy into per-state destination pairs once.
  std::vector<std::vector<double>> masses(nb * W);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t w = 0; w < W; ++w) masses[i * W + w] = sol.policy_masses(i, w, zeta);

  std::vector<double> mu(nb * W, 1.0 / static_cast<double>(nb * W));
  if (warm.size() == mu.size()) mu = std::move(warm);
  std::vector<double> saved(nb * W), next(nb * W);
  const auto& chain = env.config().chain;
  for (std::size_t sweep = 0; sweep < spec.max_distribution_sweeps; ++sweep) {
    std::fill(saved.begin(), saved.end(), 0.0);
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t w = 0; w < W; ++w) {
        const double m = mu[i * W + w];
        if (m == 0.0) continue;
        const auto& p = masses[i * W + w];
        for (std::size_t j = 0; j < na; ++j) {
          const double x = m * p[j];
          const std::size_t k = sol.node_cell(i, w, j);
          const double t = sol.node_frac(i, w, j);
          saved[k * W + w] += x * (1.0 - t);
          saved[(k + 1) * W + w] += x * t;
        }
      }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t v = 0; v < W; ++v) next[i * W + v] += saved[i * W + w] * chain[w][v];
    double diff = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) diff += std::abs(next[k] - mu[k]);
    mu.swap(next);
    if (diff <= spec.distribution_tol) return mu;
  }
  throw OracleNoConvergence("oracle population distribution did not settle");
}

inline AggregateIndicators aggregate_on_grid(const AiyagariEnv& env, const std::vector<double>& grid,
                                             const std::vector<double>& mu) {
  const std::size_t W = env.levels();
  AggregateIndicators xi;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t w = 0; w < W; ++w) {
      xi.capital += mu[i * W + w] * grid[i];
      xi.labor += mu[i * W + w] * env.labor(static_cast<int>(w));
    }
  return xi;
}

struct OracleResult {
  MeanFieldTerm z;
  std::size_t rounds = 0;
  double last_increment = 0.0;
  AggregateIndicators aggregates;
};

template <class Env>
concept OracleEnvironment = requires(const Env& e, const AggregateIndicators& xi, const MeanFieldTerm& z) {
  { e.model() } -> std::convertible_to<const AiyagariEnv&>;
  { e.production_phi(xi) } -> std::same_as<MeanFieldTerm>;
  { e.clamp(z) } -> std::same_as<MeanFieldTerm>;
};

/// Iterates z <- Phi(Psi_grid(z)) from z0 until the l1 step is at most
/// spec.fixed_point_tol.
template <OracleEnvironment Env>
OracleResult reference_equilibrium(const Env& env, const GridSpec& spec, const MeanFieldTerm& z0) {
  spec.validate();
  const AiyagariEnv& model = env.model();
  OracleResult out;
  MeanFieldTerm z = env.clamp(z0);
  GridSolution sol;
  bool have_sol = false;
  std::vector<double> mu;
  for (std::size_t round = 1; round <= spec.max_rounds; ++round) {
    sol = GridSolution(model, z, spec, have_sol ? &sol : nullptr);
    have_sol = true;
    mu = stationary_population(model, sol, std::move(mu));
    const AggregateIndicators xi = aggregate_on_grid(model, sol.grid(), mu);
    const MeanFieldTerm next = env.production_phi(xi);
    out.last_increment = l1_distance(next, z);
    out.rounds = round;
    out.aggregates = xi;
    log::debug("oracle round ", round, ": z = (", next.wage, ", ", next.rent, "), step ", out.last_increment);
    z = next;
    if (out.last_increment <= spec.fixed_point_tol) {
      out.z = z;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "reference equilibrium not reached after " << spec.max_rounds << " rounds (last step "
      << out.last_increment << ")";
  throw OracleNoConvergence(msg.str());
}

template <OracleEnvironment Env>
OracleResult reference_equilibrium(const Env& env, const GridSpec& spec = {}) {
  return reference_equilibrium(env, spec, env.model().box().clamp(MeanFieldTerm{1.0, 0.1}));
}

}  // namespace mfgham
