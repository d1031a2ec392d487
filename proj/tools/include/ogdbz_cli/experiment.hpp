#pragma once

#include "ogdbz/simulator.hpp"
#include "ogdbz_cli/config.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ogdbz::cli {

/// Stage-cost model of an instance: costs for a seed and horizon, and their gradient constant.
struct CostModel {
  std::function<CostStream(std::uint64_t seed, int T)> make;
  double G = 0.0;
  std::string description;
};

ProblemInstance build_instance(const InstanceConfig& ic, int T);
CostModel build_costs(const InstanceConfig& ic);

/// Everything a run needs after parameter selection.
struct Resolved {
  ProblemInstance inst;
  CostModel costs;
  std::vector<Mat> grid;          // empty when m n > 4
  std::optional<EpsStarResult> eps_star;
  OgdBzParams params;
  OgdBzSetup setup;
  BenchmarkKind benchmark = BenchmarkKind::none;  // after substitution
  std::string benchmark_note;                     // substitution made for the requested benchmark
};

/// Builds the instance, probes eps_star on the gain grid, selects (H, epsilon, schedule) and
/// prepares Omega_epsilon. Throws InfeasibleError naming the violated condition.
Resolved resolve(const ExperimentConfig& cfg);

struct SeedResult {
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  double total_cost = 0.0;
  SafetyReport safety;
  double worst_margin = 0.0;
  int worst_margin_stage = -1;
  int motion_flags = 0;
  int splitting_steps = 0;
  std::optional<double> regret_linear, regret_fixed;
  Mat K_star;
  std::vector<double> avg_regret_linear, avg_regret_fixed;  // cumulative regret / (t + 1)
  std::vector<std::vector<double>> x_phys, u_phys;          // [coordinate][stage 0..T]
  double wall_seconds = 0.0;
  std::string trace_path, margin_path;
};

struct CellSummary {
  int seeds = 0;
  int completed = 0;
  int failures = 0;
  int violations = 0;
  int motion_flags = 0;
  double mean_cost = 0.0;
  std::optional<double> mean_regret_linear, mean_regret_fixed;
  double mean_worst_margin = 0.0;
  double max_worst_margin = 0.0;
  bool flags_hold = false;          // horizon and safety conditions both hold
  bool certified_ok = true;         // margins <= 0 wherever flags_hold
  bool ok() const { return failures == 0 && violations == 0 && completed == seeds && certified_ok; }
};

struct CellResult {
  std::vector<SeedResult> seeds;  // in configured seed order
  CellSummary summary;
};

/// One seed: OGD-BZ rollout, audits and the configured benchmarks. Solver errors are caught
/// and reported through `error`. A non-empty `trace_dir` receives seed_<seed>.csv and
/// margins_<seed>.csv.
SeedResult run_seed(const Resolved& r, const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::string& trace_dir = {});

/// Runs every seed on up to cfg.run.threads workers. With a non-empty `trace_dir`, the first
/// cfg.run.trace_seeds seeds get trace and margin CSVs written there.
CellResult run_cell(const Resolved& r, const ExperimentConfig& cfg, const std::string& trace_dir,
                    std::ostream* progress = nullptr);

/// Columns shared by summary.csv and sweep.csv.
std::string summary_header();
std::string summary_row(const ExperimentConfig& cfg, const Resolved* r, const CellSummary* s,
                        const std::string& status, const std::string& error);

/// Averaged-regret band and state/action envelope over completed seeds.
void write_regret_csv(const std::string& path, const std::vector<SeedResult>& seeds);
void write_envelope_csv(const std::string& path, const std::vector<SeedResult>& seeds);
void write_seeds_csv(const std::string& path, const std::vector<SeedResult>& seeds);

/// Manifest with resolved parameters, buffers, condition flags and output paths.
Json manifest_json(const ExperimentConfig& cfg, const Resolved& r, const CellResult& cell);

/// gnuplot script drawing averaged regret and the first state/action coordinate ranges of each
/// listed directory (paths relative to the script).
void write_plot_script(const std::string& path, const std::vector<std::string>& cell_dirs,
                       const std::vector<std::string>& labels, int n, bool has_regret);

std::string version_stamp();

}  // namespace ogdbz::cli
