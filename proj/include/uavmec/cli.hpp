#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "uavmec/config.hpp"
#include "uavmec/planner.hpp"

namespace uavmec {

struct RunConfig {
  std::string scenario_path;
  std::vector<Scheme> schemes;
  std::vector<double> T_sweep;  ///< empty: the scenario's own T
  std::string output_dir = "out";
  std::optional<double> xi;
  std::optional<double> xi1;
  std::uint64_t seed = 0;  ///< recorded in the summary; the solvers are deterministic
  bool verbose = false;
  unsigned threads = 0;    ///< 0 = hardware concurrency
};

/// Parses "all" or a comma list of proposed, straight-line, semi-circle.
inline std::vector<Scheme> parse_schemes(const std::string& text) {
  std::vector<Scheme> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    if (item == "all") {
      out = {Scheme::proposed, Scheme::straight_line, Scheme::semi_circle};
      continue;
    }
    Scheme s;
    if (item == "proposed") {
      s = Scheme::proposed;
    } else if (item == "straight-line" || item == "straight") {
      s = Scheme::straight_line;
    } else if (item == "semi-circle" || item == "semicircle") {
      s = Scheme::semi_circle;
    } else {
      throw Error(ErrorKind::invalid_argument, "unknown scheme '" + item + "'");
    }
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

/// Parses a comma list of positive durations in seconds.
inline std::vector<double> parse_T_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || !(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::invalid_argument, "invalid sweep duration '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

/// Throws Error(invalid_argument) before any solve when the configuration is unusable.
inline void validate(const RunConfig& cfg) {
  if (cfg.schemes.empty()) throw Error(ErrorKind::invalid_argument, "schemes: at least one scheme is required");
  if (cfg.scenario_path.empty()) throw Error(ErrorKind::invalid_argument, "scenario: a path is required");
  if (cfg.output_dir.empty()) throw Error(ErrorKind::invalid_argument, "out: a directory is required");
  for (double T : cfg.T_sweep) {
    if (!(T > 0.0)) throw Error(ErrorKind::invalid_argument, "sweep-T: durations must be positive");
  }
  if (cfg.xi && !(*cfg.xi > 0.0)) throw Error(ErrorKind::invalid_argument, "xi: must be positive");
  if (cfg.xi1 && !(*cfg.xi1 > 0.0)) throw Error(ErrorKind::invalid_argument, "xi1: must be positive");
}

/// Short, stable text for a duration, used in directory names and tables.
inline std::string format_T(double T) {
  std::ostringstream o;
  o << std::setprecision(10) << T;
  return o.str();
}

inline std::string cell_dir_name(const SweepCell& c) {
  return std::string(to_string(c.scheme)) + "_T" + format_T(c.T);
}

/// Aligned summary table: scheme, T, uav_total, iterations, status.
inline void write_summary(std::ostream& os, const std::vector<SweepCell>& cells) {
  os << std::left << std::setw(15) << "scheme" << std::setw(8) << "T" << std::setw(22) << "uav_total"
     << std::setw(12) << "iterations" << "status\n";
  for (const auto& c : cells) {
    std::ostringstream e;
    if (c.ok) {
      e << std::setprecision(15) << c.result.ledger.uav_total;
    } else {
      e << "-";
    }
    os << std::left << std::setw(15) << to_string(c.scheme) << std::setw(8) << format_T(c.T) << std::setw(22)
       << e.str() << std::setw(12) << (c.ok ? c.result.iterations : 0) << to_string(c.result.status);
    if (!c.ok) os << " (" << c.error << ")";
    os << '\n';
  }
}

/**
 * Runs every requested (T, scheme) cell and writes, per cell, trajectory.txt,
 * ledger.txt and trace.txt under `<out>/<scheme>_T<T>/`, plus summary.txt.
 *
 * @return 0 when every cell converged, 1 when some cell did not, 2 on a
 *   configuration or input error
 */
inline int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  Scenario s;
  try {
    validate(cfg);
    s = load_scenario(cfg.scenario_path);
    if (cfg.xi) s.xi = *cfg.xi;
    if (cfg.xi1) s.xi1 = *cfg.xi1;
    validate(s);
    fs::create_directories(cfg.output_dir);
    std::ofstream probe(fs::path(cfg.output_dir) / "summary.txt");
    if (!probe) throw Error(ErrorKind::io_error, "cannot write to '" + cfg.output_dir + "'");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  const std::vector<double> Ts = cfg.T_sweep.empty() ? std::vector<double>{s.T} : cfg.T_sweep;
  const std::vector<SweepCell> cells = sweep_T(s, Ts, cfg.schemes, {}, cfg.threads);

  bool all_converged = true;
  for (const auto& c : cells) {
    if (!c.ok || c.result.status != RunStatus::converged) {
      all_converged = false;
      err << "cell " << cell_dir_name(c) << ": " << to_string(c.result.status);
      if (!c.result.message.empty()) err << " (" << c.result.message << ")";
      err << '\n';
    }
    if (!c.ok) continue;
    const fs::path dir = fs::path(cfg.output_dir) / cell_dir_name(c);
    fs::create_directories(dir);
    Scenario sc = s;
    sc.T = c.T;
    std::ofstream traj(dir / "trajectory.txt");
    write_trajectory(traj, sc, c.result.plan.traj);
    std::ofstream ledger(dir / "ledger.txt");
    write_ledger(ledger, c.result.ledger);
    std::ofstream trace(dir / "trace.txt");
    write_trace(trace, c.result);
    if (cfg.verbose) {
      out << cell_dir_name(c) << ":\n";
      for (const auto& row : c.result.outer_trace) {
        out << "  i=" << row.iteration << " E_u=" << std::setprecision(15) << row.energy
            << " omega=" << row.omega << " sca=" << row.sca_iterations << '\n';
      }
    }
  }

  std::ostringstream table;
  write_summary(table, cells);
  std::ofstream summary(fs::path(cfg.output_dir) / "summary.txt");
  summary << "# scenario " << cfg.scenario_path << " seed " << cfg.seed << '\n' << table.str();
  out << table.str();
  return all_converged ? 0 : 1;
}

}  // namespace uavmec
