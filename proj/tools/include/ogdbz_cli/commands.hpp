#pragma once

#include "ogdbz_cli/config.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace ogdbz::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnsafe = 1;      // violations, solver failures or positive certified margins
inline constexpr int kExitUsage = 2;       // bad arguments, config or input files
inline constexpr int kExitInfeasible = 3;  // parameter selection or Omega_epsilon failed

/// Runs all seeds and writes manifest.json, seeds.csv, summary.csv, regret.csv, envelope.csv,
/// traces/ and plot.gp under cfg.output.dir.
int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

/// One cell per (epsilon, eta0, H); failing cells are recorded and the sweep continues.
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

struct AuditOptions {
  std::string trace_path;
  bool physical = false;
  double epsilon = 0.0;
  std::string margins_path;  // empty: not written
};

/// Re-checks a recorded trace against the configured instance.
int cmd_audit(const ExperimentConfig& cfg, const AuditOptions& opts, std::ostream& out, std::ostream& err);

int cmd_preset_list(std::ostream& out);
int cmd_preset_show(const std::string& name, std::ostream& out);

}  // namespace ogdbz::cli
