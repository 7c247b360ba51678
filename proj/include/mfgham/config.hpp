#pragma once

// Flat `key = value` configuration covering the model, the solver and the
// reference oracle. Lines starting with '#' are comments. Every key has a
// built-in default, so an empty file is a valid configuration.

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "aiyagari.hpp"
#include "error.hpp"
#include "mfg_loop.hpp"
#include "oracle.hpp"

namespace mfgham {

struct RunConfig {
  AiyagariConfig model{};
  SolverConfig solver{};
  GridSpec oracle{};
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  T v{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + t + "' as a number");
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true or false, got '" + t + "'");
}

inline std::vector<double> parse_list(std::string_view key, std::string_view text, char sep = ',') {
  std::vector<double> out;
  std::string item;
  std::istringstream is{std::string(text)};
  while (std::getline(is, item, sep)) out.push_back(parse_number<double>(key, item));
  if (out.empty()) throw ConfigError("config key '" + std::string(key) + "' needs at least one value");
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

struct ConfigField {
  std::string key;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

template <class T>
ConfigField number_field(std::string key, T& ref) {
  return {key, [&ref] {
            if constexpr (std::is_floating_point_v<T>) return format_double(ref);
            else return std::to_string(ref);
          },
          [&ref, key](std::string_view v) { ref = parse_number<T>(key, v); }};
}

inline ConfigField bool_field(std::string key, bool& ref) {
  return {key, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, key](std::string_view v) { ref = parse_bool(key, v); }};
}

inline std::vector<ConfigField> config_fields(RunConfig& c) {
  auto& m = c.model;
  auto& s = c.solver;
  auto& q = c.solver.cfqi;
  auto& o = c.oracle;
  std::vector<ConfigField> f{
      number_field("alpha", m.alpha),
      number_field("delta", m.delta),
      number_field("gamma", m.gamma),
      number_field("b_max", m.b_max),
      {"labor", [&m] { return format_list(m.labor); },
       [&m](std::string_view v) { m.labor = parse_list("labor", v); }},
      {"chain",
       [&m] {
         std::string out;
         for (std::size_t i = 0; i < m.chain.size(); ++i) out += (i ? ";" : "") + format_list(m.chain[i]);
         return out;
       },
       [&m](std::string_view v) {
         m.chain.clear();
         std::string row;
         std::istringstream is{std::string(v)};
         while (std::getline(is, row, ';')) m.chain.push_back(parse_list("chain", row));
       }},
      number_field("zeta", m.zeta),
      number_field("wage_min", m.box.wage_min),
      number_field("wage_max", m.box.wage_max),
      number_field("rent_min", m.box.rent_min),
      number_field("rent_max", m.box.rent_max),
      number_field("consumption_floor", m.consumption_floor),
      number_field("population", m.population),
      number_field("horizon", m.horizon),
      number_field("burn_in", m.burn_in),
      number_field("capital_floor", m.capital_floor),
      number_field("labor_floor", m.labor_floor),

      number_field("z0_wage", s.z0.wage),
      number_field("z0_rent", s.z0.rent),
      number_field("rounds", s.rounds),
      number_field("samples", s.samples),
      number_field("threads", s.threads),
      bool_field("common_random_numbers", s.common_random_numbers),
      number_field("policy_grid", s.policy_grid),
      number_field("divergence_factor", s.divergence_factor),

      number_field("tau", q.iterations),
      bool_field("joint_fit", q.joint_fit),
      bool_field("warm_start", q.warm_start),
      number_field("warm_restarts", q.warm_restarts),
      number_field("restarts", q.targets.fit.restarts),
      number_field("fit_tol", q.targets.fit.tolerance),
      number_field("max_sweeps", q.targets.fit.max_sweeps),
      number_field("ridge_scale", q.targets.fit.ridge_scale),
      number_field("k_max", q.targets.k_max),
      number_field("piece_count", q.targets.fixed_pieces),
      number_field("greedy_iterations", q.targets.greedy.max_iterations),
      number_field("greedy_tol", q.targets.greedy.tolerance),

      number_field("oracle_b_points", o.b_points),
      number_field("oracle_a_cells", o.a_cells),
      number_field("oracle_vi_tol", o.vi_tol),
      number_field("oracle_fixed_point_tol", o.fixed_point_tol),
      number_field("oracle_max_rounds", o.max_rounds),
  };
  return f;
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  c.model.validate();
  c.oracle.validate();
  if (c.solver.samples == 0) throw ConfigError("samples must be at least 1");
  if (c.solver.policy_grid < 16) throw ConfigError("policy_grid must be at least 16");
  if (c.solver.cfqi.targets.k_max == 0) throw ConfigError("k_max must be at least 1");
  if (!(c.solver.divergence_factor > 0.0)) throw ConfigError("divergence_factor must be positive");
}

/// Applies `key = value` lines on top of `base`. Unknown keys and malformed
/// values throw ConfigError naming the line.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  auto fields = detail::config_fields(base);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
    if (it == fields.end())
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                        "' (run with --print-config to list valid keys)");
    try {
      it->set(value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(base);
  return base;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

inline void write_config(std::ostream& os, const RunConfig& c) {
  RunConfig copy = c;
  for (const auto& f : detail::config_fields(copy)) os << f.key << " = " << f.get() << '\n';
}

}  // namespace mfgham
