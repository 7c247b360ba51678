// Command-line entry point: solve, experiment, oracle, fit-bench.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfgham/mfgham.hpp"

namespace fs = std::filesystem;
using namespace mfgham;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--m-list: '" + item + "' is not a positive integer");
    }
  }
  if (out.empty()) throw ConfigError("--m-list is empty");
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

int run_solve(const RunConfig& cfg, std::uint64_t seed, const fs::path& out) {
  const AiyagariEnv env(cfg.model);
  const auto t0 = std::chrono::steady_clock::now();
  const EquilibriumResult res = solve(env, cfg.solver, seed);
  ensure_dir(out);
  std::ofstream os(out / "trajectory.csv");
  write_trajectory_csv(os, res);
  std::printf("z^T = (wage %.6f, rent %.6f) after %zu rounds, M = %zu, %.1f s\n", res.final_z().wage,
              res.final_z().rent, cfg.solver.rounds, cfg.solver.samples, seconds_since(t0));
  if (res.trajectory.size() >= 3) {
    const auto rep = contraction_diagnostics(res);
    std::printf("geometric-mean increment ratio %.4f\n", rep.geometric_mean);
  }
  std::printf("trajectory written to %s\n", (out / "trajectory.csv").string().c_str());
  return 0;
}

int run_oracle(const RunConfig& cfg, bool refine) {
  const AiyagariEnv env(cfg.model);
  const auto t0 = std::chrono::steady_clock::now();
  const OracleResult r = reference_equilibrium(env, cfg.oracle, cfg.solver.z0);
  std::printf("z* = (wage %.9f, rent %.9f)  K = %.6f  N = %.6f  rounds %zu  last step %.2e  (%.1f s)\n", r.z.wage,
              r.z.rent, r.aggregates.capital, r.aggregates.labor, r.rounds, r.last_increment, seconds_since(t0));
  if (refine) {
    const OracleResult f = reference_equilibrium(env, cfg.oracle.refined(), cfg.solver.z0);
    std::printf("refined grid: z* = (wage %.9f, rent %.9f), shift %.3e\n", f.z.wage, f.z.rent, l1_distance(f.z, r.z));
  }
  return 0;
}

int run_experiment_cmd(const RunConfig& cfg, ExperimentPlan plan) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentSummary s = run_experiment(plan, cfg);
  std::printf("reference z* = (%.6f, %.6f)\n", s.reference.wage, s.reference.rent);
  std::printf("%8s %12s %12s %7s\n", "M", "mean_error", "sd_error", "trials");
  for (const auto& row : s.aggregate)
    std::printf("%8zu %12.6f %12.6f %7zu\n", row.samples, row.mean_error, row.sd_error, row.trials);
  if (s.rate) std::printf("fitted slope %.4f (r2 %.4f)\n", s.rate->slope, s.rate->r2);
  std::printf("outputs in %s (%.1f s)\n", plan.out.string().c_str(), seconds_since(t0));
  return 0;
}

// Fixed convex target sum_j x_j^2 plus Gaussian noise on [-1, 1]^d; reports
// fit time, training RMSE and out-of-sample RMSE against the noiseless target.
int run_fit_bench(const std::vector<std::size_t>& sizes, std::size_t dim, double noise, std::uint64_t seed) {
  std::printf("%8s %4s %6s %10s %12s %12s\n", "M", "K", "pieces", "seconds", "train_rmse", "test_rmse");
  auto target = [](const double* x, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[j] * x[j];
    return s;
  };
  Rng test_rng = make_rng(seed, {0x74657374ULL});
  std::vector<double> test(2000 * dim);
  for (double& v : test) v = 2.0 * uniform01(test_rng) - 1.0;
  for (std::size_t M : sizes) {
    Rng rng = make_rng(seed, {M});
    std::normal_distribution<double> eps(0.0, noise);
    RegressionProblem p;
    p.dim = dim;
    p.pieces = select_piece_count(M, dim, 40);
    p.lipschitz = 2.0;
    p.upper = static_cast<double>(dim);
    p.seed = seed;
    std::vector<double> x(dim);
    for (std::size_t m = 0; m < M; ++m) {
      for (double& v : x) v = 2.0 * uniform01(rng) - 1.0;
      p.add(x, target(x.data(), dim) + eps(rng));
    }
    const auto t0 = std::chrono::steady_clock::now();
    const FitResult fit = fit_max_affine(p);
    const double secs = seconds_since(t0);
    double se = 0.0;
    for (std::size_t i = 0; i < 2000; ++i) {
      const double* xi = test.data() + i * dim;
      const double r = fit.fn.eval_unchecked(xi) - target(xi, dim);
      se += r * r;
    }
    std::printf("%8zu %4zu %6zu %10.4f %12.6f %12.6f\n", M, p.pieces, fit.fn.size(), secs, std::sqrt(fit.risk),
                std::sqrt(se / 2000.0));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field equilibrium solver with concave fitted Q-iteration"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::string out = "results";
  bool print_config = false;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "master random seed");
  app.add_option("--jobs", jobs, "concurrent trials (experiment) or worker threads (solve)")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  std::size_t rounds = 0;
  std::size_t samples = 0;
  auto* solve_cmd = app.add_subcommand("solve", "run one equilibrium solve");
  solve_cmd->add_option("--rounds", rounds, "outer iterations T");
  solve_cmd->add_option("--samples,-M", samples, "samples per round");

  std::string m_list = "250,1000,4000";
  std::size_t trials = 10;
  std::size_t exp_rounds = 15;
  auto* exp_cmd = app.add_subcommand("experiment", "sample-size sweep against the reference equilibrium");
  exp_cmd->add_option("--m-list", m_list, "comma-separated sample sizes");
  exp_cmd->add_option("--trials", trials, "trials per sample size");
  exp_cmd->add_option("--rounds", exp_rounds, "outer iterations T per run");

  bool refine = false;
  auto* oracle_cmd = app.add_subcommand("oracle", "print the grid reference equilibrium");
  oracle_cmd->add_flag("--refine", refine, "also solve on a grid with halved spacing");

  std::string bench_list = "200,800,3200";
  std::size_t bench_dim = 2;
  double bench_noise = 0.05;
  auto* bench_cmd = app.add_subcommand("fit-bench", "max-affine regression micro-benchmark");
  bench_cmd->add_option("--m-list", bench_list, "comma-separated sample sizes");
  bench_cmd->add_option("--dim", bench_dim, "input dimension")->check(CLI::Range(1, 8));
  bench_cmd->add_option("--noise", bench_noise, "noise standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (rounds > 0) cfg.solver.rounds = rounds;
    if (samples > 0) cfg.solver.samples = samples;
    cfg.solver.threads = jobs;
    cfg.solver.cfqi.threads = jobs;
    validate(cfg);

    if (print_config) {
      write_config(std::cout, cfg);
      return 0;
    }
    if (*solve_cmd) return run_solve(cfg, seed, out);
    if (*oracle_cmd) return run_oracle(cfg, refine);
    if (*bench_cmd) return run_fit_bench(parse_sizes(bench_list), bench_dim, bench_noise, seed);
    if (*exp_cmd) {
      ExperimentPlan plan;
      plan.sample_sizes = parse_sizes(m_list);
      plan.trials = trials;
      plan.rounds = exp_rounds;
      plan.seed = seed;
      plan.out = out;
      plan.jobs = jobs;
      return run_experiment_cmd(cfg, plan);
    }
    std::cout << app.help();
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const IterationDiverged& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kExitDiverged;
  } catch (const OracleNoConvergence& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
