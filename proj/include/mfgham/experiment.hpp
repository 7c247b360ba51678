#pragma once

// Sample-size sweep: repeated solves per M, l1 error of z^T against the
// reference equilibrium, aggregate tables, a log-log rate fit and an SVG plot.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aiyagari.hpp"
#include "config.hpp"
#include "error.hpp"
#include "log.hpp"
#include "mfg_loop.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace mfgham {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least squares of log(error) on log(M).
inline RateFit rate_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw DegenerateInput("rate fit needs at least two points");
  for (const auto& [m, e] : points)
    if (!(m > 0.0) || !(e > 0.0) || !std::isfinite(m) || !std::isfinite(e))
      throw DegenerateInput("rate fit needs positive, finite sample sizes and errors");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [m, e] : points) {
    mx += std::log(m);
    my += std::log(e);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [m, e] : points) {
    const double dx = std::log(m) - mx, dy = std::log(e) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw DegenerateInput("rate fit needs at least two distinct sample sizes");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (const auto& [m, e] : points) {
    const double r = std::log(e) - (f.intercept + f.slope * std::log(m));
    sse += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

struct ExperimentPlan {
  std::vector<std::size_t> sample_sizes{250, 1000, 4000};
  std::size_t trials = 10;
  std::size_t rounds = 15;
  std::uint64_t seed = 1;
  std::filesystem::path out = "results";
  unsigned jobs = 1;

  void validate() const {
    if (sample_sizes.empty()) throw ConfigError("experiment needs at least one sample size");
    for (auto m : sample_sizes)
      if (m < 50) throw ConfigError("experiment sample sizes must be at least 50 (got " + std::to_string(m) + ")");
    if (trials == 0) throw ConfigError("experiment needs at least one trial per sample size");
  }
};

struct RunRecord {
  std::size_t samples = 0;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  MeanFieldTerm z;
  double error = 0.0;
  double contraction = 0.0;  // geometric-mean increment ratio, 0 if T < 2
  double seconds = 0.0;
};

struct AggregateRow {
  std::size_t samples = 0;
  double mean_error = 0.0;
  double sd_error = 0.0;
  std::size_t trials = 0;
};

struct ExperimentSummary {
  MeanFieldTerm reference;
  std::vector<RunRecord> runs;
  std::vector<AggregateRow> aggregate;
  std::optional<RateFit> rate;  // empty with a single sample size
};

/// Numeric CSV table as written by this module.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("csv has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw ParseError("csv is empty");
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream rs(line);
    std::string cell;
    while (std::getline(rs, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != t.header.size())
      throw ParseError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " fields, got " + std::to_string(row.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return read_csv(in);
}

inline void write_runs_csv(std::ostream& os, const std::vector<RunRecord>& runs) {
  const auto old = os.precision(17);
  os << "samples,trial,seed,wage,rent,error,contraction,seconds\n";
  for (const auto& r : runs)
    os << r.samples << ',' << r.trial << ',' << r.seed << ',' << r.z.wage << ',' << r.z.rent << ',' << r.error << ','
       << r.contraction << ',' << r.seconds << '\n';
  os.precision(old);
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  const auto old = os.precision(17);
  os << "samples,mean_error,sd_error,trials\n";
  for (const auto& r : rows) os << r.samples << ',' << r.mean_error << ',' << r.sd_error << ',' << r.trials << '\n';
  os.precision(old);
}

inline std::vector<AggregateRow> aggregate_runs(const std::vector<RunRecord>& runs) {
  std::vector<std::size_t> sizes;
  for (const auto& r : runs)
    if (std::find(sizes.begin(), sizes.end(), r.samples) == sizes.end()) sizes.push_back(r.samples);
  std::sort(sizes.begin(), sizes.end());
  std::vector<AggregateRow> out;
  for (auto m : sizes) {
    AggregateRow row;
    row.samples = m;
    for (const auto& r : runs)
      if (r.samples == m) {
        row.mean_error += r.error;
        ++row.trials;
      }
    row.mean_error /= static_cast<double>(row.trials);
    double ss = 0.0;
    for (const auto& r : runs)
      if (r.samples == m) ss += (r.error - row.mean_error) * (r.error - row.mean_error);
    row.sd_error = row.trials > 1 ? std::sqrt(ss / static_cast<double>(row.trials - 1)) : 0.0;
    out.push_back(row);
  }
  return out;
}

/// Log-log plot of mean error with +-1 sd bars and the fitted line.
inline void write_convergence_svg(std::ostream& os, const std::vector<AggregateRow>& rows,
                                  const std::optional<RateFit>& fit) {
  const double W = 640, H = 440, left = 80, right = 30, top = 40, bottom = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto lo_bar = [](const AggregateRow& r) {
    const double lo = r.mean_error - r.sd_error;
    return lo > 0.0 ? lo : r.mean_error * 0.5;
  };
  for (const auto& r : rows) {
    const double m = static_cast<double>(r.samples);
    xmin = std::min(xmin, std::log10(m));
    xmax = std::max(xmax, std::log10(m));
    if (r.mean_error > 0.0) {
      ymin = std::min(ymin, std::log10(lo_bar(r)));
      ymax = std::max(ymax, std::log10(r.mean_error + r.sd_error));
    }
  }
  if (!(xmax > xmin)) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (!(ymax > ymin)) {
    ymin = (ymin < 1e299 ? ymin : 0.0) - 0.5;
    ymax = ymin + 1.0;
  }
  const double xpad = 0.08 * (xmax - xmin), ypad = 0.08 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;
  auto px = [&](double lx) { return left + (lx - xmin) / (xmax - xmin) * (W - left - right); };
  auto py = [&](double ly) { return H - bottom - (ly - ymin) / (ymax - ymin) * (H - top - bottom); };

  os << std::setprecision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 15
     << "\" text-anchor=\"middle\">sample size M (log scale)</text>\n";
  os << "<text x=\"20\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 "
     << (top + H - bottom) / 2 << ")\">mean l1 error of z (log scale)</text>\n";
  for (const auto& r : rows) {
    const double x = px(std::log10(static_cast<double>(r.samples)));
    os << "<text x=\"" << x << "\" y=\"" << H - bottom + 18 << "\" text-anchor=\"middle\">" << r.samples
       << "</text>\n";
  }
  for (int k = static_cast<int>(std::ceil(ymin)); k <= static_cast<int>(std::floor(ymax)); ++k)
    os << "<text x=\"" << left - 8 << "\" y=\"" << py(k) + 4 << "\" text-anchor=\"end\">1e" << k << "</text>\n";
  if (fit) {
    const double l0 = xmin + xpad, l1 = xmax - xpad;
    const double ln10 = std::log(10.0);
    auto fy = [&](double lx) { return (fit->intercept + fit->slope * lx * ln10) / ln10; };
    os << "<line x1=\"" << px(l0) << "\" y1=\"" << py(fy(l0)) << "\" x2=\"" << px(l1) << "\" y2=\"" << py(fy(l1))
       << "\" stroke=\"steelblue\" stroke-dasharray=\"6 4\"/>\n";
    os << "<text x=\"" << W - right << "\" y=\"" << top - 12 << "\" text-anchor=\"end\">fitted slope "
       << fit->slope << " (r2 " << fit->r2 << ")</text>\n";
  }
  for (const auto& r : rows) {
    if (!(r.mean_error > 0.0)) continue;
    const double x = px(std::log10(static_cast<double>(r.samples)));
    const double y = py(std::log10(r.mean_error));
    const double y0 = py(std::log10(lo_bar(r))), y1 = py(std::log10(r.mean_error + r.sd_error));
    os << "<line x1=\"" << x << "\" y1=\"" << y0 << "\" x2=\"" << x << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n";
    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"firebrick\"/>\n";
  }
  os << "</svg>\n";
}

/// Runs every (M, trial) pair, up to plan.jobs at a time, against the
/// reference equilibrium `reference` (computed from cfg.oracle if absent).
inline ExperimentSummary run_experiment(const ExperimentPlan& plan, const RunConfig& cfg,
                                        std::optional<MeanFieldTerm> reference = std::nullopt) {
  plan.validate();
  validate(cfg);
  const AiyagariEnv env(cfg.model);
  ExperimentSummary summary;
  if (reference) {
    summary.reference = *reference;
  } else {
    log::info("computing reference equilibrium on a ", cfg.oracle.b_points, " x ", cfg.oracle.a_cells, " grid");
    summary.reference = reference_equilibrium(env, cfg.oracle, cfg.solver.z0).z;
  }

  namespace fs = std::filesystem;
  fs::create_directories(plan.out / "runs");

  struct Job {
    std::size_t samples, trial;
  };
  std::vector<Job> jobs;
  for (auto m : plan.sample_sizes)
    for (std::size_t k = 0; k < plan.trials; ++k) jobs.push_back({m, k});
  summary.runs.resize(jobs.size());

  parallel_for(jobs.size(), std::max(1u, plan.jobs), [&](std::size_t j) {
    const Job job = jobs[j];
    SolverConfig sc = cfg.solver;
    sc.samples = job.samples;
    sc.rounds = plan.rounds;
    sc.threads = 1;
    sc.cfqi.threads = 1;
    const std::uint64_t seed = derive_seed(plan.seed, {job.samples, job.trial});
    const auto start = std::chrono::steady_clock::now();
    const EquilibriumResult res = solve(env, sc, seed);
    RunRecord rec;
    rec.samples = job.samples;
    rec.trial = job.trial;
    rec.seed = seed;
    rec.z = res.final_z();
    rec.error = l1_distance(rec.z, summary.reference);
    rec.contraction = res.trajectory.size() >= 3 ? contraction_diagnostics(res).geometric_mean : 0.0;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream traj(plan.out / "runs" / ("M" + std::to_string(job.samples) + "_trial" + std::to_string(job.trial) + ".csv"));
    write_trajectory_csv(traj, res);
    if (!traj) throw Error("cannot write trajectory file under " + (plan.out / "runs").string());
    log::info("M = ", job.samples, " trial ", job.trial, ": error ", rec.error, " (", rec.seconds, " s)");
    summary.runs[j] = rec;
  });

  summary.aggregate = aggregate_runs(summary.runs);
  std::vector<std::pair<double, double>> pts;
  for (const auto& row : summary.aggregate) pts.emplace_back(static_cast<double>(row.samples), row.mean_error);
  if (summary.aggregate.size() >= 2) {
    try {
      summary.rate = rate_fit(pts);
    } catch (const DegenerateInput& e) {
      log::warn("no rate fit: ", e.what());
    }
  }

  auto open = [&](const char* name) {
    std::ofstream os(plan.out / name);
    if (!os) throw Error("cannot write " + (plan.out / name).string());
    return os;
  };
  {
    auto os = open("runs.csv");
    write_runs_csv(os, summary.runs);
  }
  {
    auto os = open("aggregate.csv");
    write_aggregate_csv(os, summary.aggregate);
  }
  {
    auto os = open("rate.csv");
    os << std::setprecision(17) << "slope,intercept,r2,reference_wage,reference_rent\n";
    if (summary.rate)
      os << summary.rate->slope << ',' << summary.rate->intercept << ',' << summary.rate->r2 << ',';
    else
      os << "0,0,0,";
    os << summary.reference.wage << ',' << summary.reference.rent << '\n';
  }
  {
    auto os = open("convergence.svg");
    write_convergence_svg(os, summary.aggregate, summary.rate);
  }
  return summary;
}

}  // namespace mfgham
