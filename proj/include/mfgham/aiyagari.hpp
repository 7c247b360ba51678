#pragma once

// Aiyagari economy: households with capital b and a discrete labor state w
// save a in Gamma_z(b, w) and consume the rest; a Cobb-Douglas firm prices
// capital and labor at their marginal products.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "mdp.hpp"
#include "parallel.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace mfgham {

struct MeanFieldBox {
  double wage_min = 0.05;
  double wage_max = 5.0;
  double rent_min = 0.01;
  double rent_max = 1.0;

  double wage_width() const { return wage_max - wage_min; }
  double rent_width() const { return rent_max - rent_min; }
  bool contains(const MeanFieldTerm& z) const {
    return z.wage >= wage_min && z.wage <= wage_max && z.rent >= rent_min && z.rent <= rent_max;
  }
  MeanFieldTerm clamp(const MeanFieldTerm& z) const {
    return {std::clamp(z.wage, wage_min, wage_max), std::clamp(z.rent, rent_min, rent_max)};
  }
  std::vector<MeanFieldTerm> corners() const {
    return {{wage_min, rent_min}, {wage_min, rent_max}, {wage_max, rent_min}, {wage_max, rent_max}};
  }
};

struct AggregateIndicators {
  double capital = 0.0;  // population mean of b
  double labor = 0.0;    // population mean of n
};

/// Model calibration. Key names in the config file match the member names.
struct AiyagariConfig {
  double alpha = 0.36;
  double delta = 0.08;
  double gamma = 0.95;
  double b_max = 20.0;
  std::vector<double> labor{0.0, 1.0};
  std::vector<std::vector<double>> chain{{0.9, 0.1}, {0.1, 0.9}};
  double zeta = 1.0;
  MeanFieldBox box{};
  double consumption_floor = 1.0;
  std::size_t population = 10000;
  std::size_t horizon = 200;
  std::size_t burn_in = 100;
  double capital_floor = 1e-3;
  double labor_floor = 1e-3;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(delta >= 0.0 && delta < 1.0)) throw ConfigError("delta must lie in [0, 1)");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (!(b_max > 0.0)) throw ConfigError("b_max must be positive");
    if (labor.empty()) throw ConfigError("labor must list at least one level");
    if (chain.size() != labor.size()) throw ConfigError("chain must have one row per labor level");
    for (const auto& row : chain) {
      if (row.size() != labor.size()) throw ConfigError("chain must be square");
      double s = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) throw ConfigError("chain entries must be nonnegative");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-12) throw ConfigError("chain rows must sum to 1");
    }
    for (double n : labor)
      if (!(n >= 0.0)) throw ConfigError("labor values must be nonnegative");
    if (!(zeta > 0.0)) throw ConfigError("zeta must be positive");
    if (!(box.wage_min < box.wage_max) || !(box.rent_min < box.rent_max))
      throw ConfigError("mean-field box bounds must be ordered");
    if (!(box.wage_min >= 0.0)) throw ConfigError("wage_min must be nonnegative");
    if (!(consumption_floor > 0.0)) throw ConfigError("consumption_floor must be positive");
    if (population == 0) throw ConfigError("population must be positive");
    if (burn_in >= horizon) throw ConfigError("burn_in must be smaller than horizon");
    if (!(capital_floor > 0.0) || !(labor_floor > 0.0)) throw ConfigError("capital/labor floors must be positive");
  }
};

class AiyagariEnv {
 public:
  explicit AiyagariEnv(AiyagariConfig cfg = {}) : cfg_(std::move(cfg)) {
    cfg_.validate();
    max_spending_ = (1.0 + cfg_.box.rent_max - cfg_.delta) * cfg_.b_max + cfg_.box.wage_max * max_labor();
    log_scale_ = std::log1p(max_spending_ / cfg_.consumption_floor);
    stationary_ = compute_stationary();
  }

  const AiyagariConfig& config() const { return cfg_; }
  const AiyagariEnv& model() const { return *this; }

  std::size_t levels() const { return cfg_.labor.size(); }
  const std::vector<double>& labor_values() const { return cfg_.labor; }
  double labor(int w) const { return cfg_.labor.at(static_cast<std::size_t>(w)); }
  double max_labor() const { return *std::max_element(cfg_.labor.begin(), cfg_.labor.end()); }
  double min_labor() const { return *std::min_element(cfg_.labor.begin(), cfg_.labor.end()); }
  double gamma() const { return cfg_.gamma; }
  double zeta() const { return cfg_.zeta; }
  double bound() const { return 1.0 / (1.0 - cfg_.gamma); }
  const MeanFieldBox& box() const { return cfg_.box; }
  MeanFieldTerm clamp(const MeanFieldTerm& z) const { return cfg_.box.clamp(z); }
  double max_spending() const { return max_spending_; }
  const std::vector<double>& stationary_income() const { return stationary_; }

  /// Cash on hand (1 + rent - delta) b + wage n.
  double cash(const MeanFieldTerm& z, const HouseholdState& s) const {
    return (1.0 + z.rent - cfg_.delta) * s.capital + z.wage * labor(s.level);
  }

  FeasibleInterval feasible(const MeanFieldTerm& z, const HouseholdState& s) const {
    return {0.0, std::clamp(cash(z, s), 0.0, cfg_.b_max)};
  }

  FeasibilityOracle feasibility(const MeanFieldTerm& z) const {
    const double gross = 1.0 + z.rent - cfg_.delta;
    const double wage = z.wage;
    const double b_max = cfg_.b_max;
    const std::vector<double> labor = cfg_.labor;
    return [=](const HouseholdState& s) {
      const double c = gross * s.capital + wage * labor[static_cast<std::size_t>(s.level)];
      return FeasibleInterval{0.0, std::clamp(c, 0.0, b_max)};
    };
  }

  /// log(1 + chi/eps) / log(1 + chi_max/eps), chi the whole residual budget.
  double reward(const MeanFieldTerm& z, const HouseholdState& s, double a) const {
    if (!feasible(z, s).contains(a)) throw InfeasibleAction("saving outside the feasible interval");
    return reward_unchecked(z, s, a);
  }

  double reward_unchecked(const MeanFieldTerm& z, const HouseholdState& s, double a) const {
    const double chi = std::max(0.0, cash(z, s) - a);
    return std::clamp(std::log1p(chi / cfg_.consumption_floor) / log_scale_, 0.0, 1.0);
  }

  /// Largest reward slope in the (b, a) coordinates, plus the labor
  /// coordinate when `joint` is set.
  double reward_lipschitz(bool joint = false) const {
    const double base = 1.0 / (cfg_.consumption_floor * log_scale_);
    double l = std::max(1.0, 1.0 + cfg_.box.rent_max - cfg_.delta) * base;
    if (joint) l = std::max(l, cfg_.box.wage_max * base);
    return l;
  }
  double q_lipschitz(bool joint = false) const { return reward_lipschitz(joint) / (1.0 - cfg_.gamma); }

  /// Inverse-CDF draw from row w of the chain; one uniform per call.
  int income_step(int w, Rng& rng) const {
    return draw_level(cfg_.chain.at(static_cast<std::size_t>(w)), uniform01(rng));
  }

  static int draw_level(const std::vector<double>& probs, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    // Skip trailing zero-probability levels.
    for (std::size_t k = probs.size(); k-- > 0;)
      if (probs[k] > 0.0) return static_cast<int>(k);
    return 0;
  }

  /// M tuples with b ~ U[0, b_max], w uniform, a ~ U(Gamma_z(s)), s' = (a, w').
  /// Every sample consumes exactly four uniforms, so datasets drawn with the
  /// same seed under different z share their random numbers.
  Dataset sample_dataset(const MeanFieldTerm& z, std::size_t samples, std::uint64_t seed) const {
    Dataset out;
    out.z = z;
    out.seed = seed;
    out.samples.reserve(samples);
    Rng rng = make_rng(seed, {0x64617461ULL});
    const double W = static_cast<double>(levels());
    for (std::size_t m = 0; m < samples; ++m) {
      TransitionSample t;
      t.state.capital = cfg_.b_max * uniform01(rng);
      t.state.level = std::min(static_cast<int>(levels()) - 1, static_cast<int>(uniform01(rng) * W));
      const FeasibleInterval iv = feasible(z, t.state);
      t.action = std::min(iv.hi, iv.lo + uniform01(rng) * iv.width());
      t.reward = reward_unchecked(z, t.state, t.action);
      t.next.capital = t.action;
      t.next.level = income_step(t.state.level, rng);
      out.samples.push_back(t);
    }
    return out;
  }

  /// Monte-Carlo population: `population` households start from b ~ U[0, b_max]
  /// and w from the stationary income distribution, follow the policy for
  /// `horizon` steps, and the averages after `burn_in` steps are returned.
  template <SamplingPolicy P>
  AggregateIndicators aggregate_psi(const MeanFieldTerm& /*z*/, const P& policy, std::uint64_t seed,
                                    unsigned threads = 1) const {
    const std::size_t P_pop = cfg_.population;
    std::vector<double> cap(P_pop), lab(P_pop);
    parallel_for(P_pop, threads, [&](std::size_t i) {
      Rng rng = make_rng(seed, {0x707369ULL, i});
      HouseholdState s;
      s.capital = cfg_.b_max * uniform01(rng);
      s.level = draw_level(stationary_, uniform01(rng));
      double kb = 0.0, nb = 0.0;
      for (std::size_t h = 0; h < cfg_.horizon; ++h) {
        if (h >= cfg_.burn_in) {
          kb += s.capital;
          nb += labor(s.level);
        }
        const double a = policy.sample(s, rng);
        s.capital = a;
        s.level = income_step(s.level, rng);
      }
      cap[i] = kb;
      lab[i] = nb;
    });
    const double steps = static_cast<double>(P_pop * (cfg_.horizon - cfg_.burn_in));
    double K = 0.0, N = 0.0;
    for (std::size_t i = 0; i < P_pop; ++i) {
      K += cap[i];
      N += lab[i];
    }
    return {K / steps, N / steps};
  }

  /// Marginal products of F(K, N) = K^alpha N^(1-alpha), before clamping.
  MeanFieldTerm production_unclamped(const AggregateIndicators& xi) const {
    const double K = std::max(xi.capital, cfg_.capital_floor);
    const double N = std::max(xi.labor, cfg_.labor_floor);
    const double a = cfg_.alpha;
    return {(1.0 - a) * std::pow(K, a) * std::pow(N, -a), a * std::pow(K, a - 1.0) * std::pow(N, 1.0 - a)};
  }

  MeanFieldTerm production_phi(const AggregateIndicators& xi) const { return clamp(production_unclamped(xi)); }

  double output(double K, double N) const { return std::pow(K, cfg_.alpha) * std::pow(N, 1.0 - cfg_.alpha); }

 private:
  std::vector<double> compute_stationary() const {
    const std::size_t W = levels();
    std::vector<double> p(W, 1.0 / static_cast<double>(W)), next(W);
    for (int it = 0; it < 100000; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t i = 0; i < W; ++i)
        for (std::size_t j = 0; j < W; ++j) next[j] += p[i] * cfg_.chain[i][j];
      double diff = 0.0;
      for (std::size_t j = 0; j < W; ++j) diff += std::abs(next[j] - p[j]);
      p.swap(next);
      if (diff < 1e-15) break;
    }
    return p;
  }

  AiyagariConfig cfg_;
  double max_spending_ = 0.0;
  double log_scale_ = 1.0;
  std::vector<double> stationary_;
};

}  // namespace mfgham
