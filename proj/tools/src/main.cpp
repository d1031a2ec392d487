#include "ogdbz_cli/commands.hpp"
#include "ogdbz_cli/experiment.hpp"

#include <iostream>

#include "CLI11.hpp"

namespace {

using namespace ogdbz::cli;

struct Source {
  std::string config;
  std::string preset;
  std::string out;
  std::string seeds;
  int threads = -1;
  int T = -1;
  int trace_seeds = -2;
};

void add_source(CLI::App* cmd, Source& s, bool run_options) {
  auto* cfg = cmd->add_option("--config", s.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--preset", s.preset, "built-in preset (see `ogdbz preset list`)")->excludes(cfg);
  if (!run_options) return;
  cmd->add_option("--out", s.out, "output directory (overrides output.dir)");
  cmd->add_option("--seeds", s.seeds, "seed list such as 1-100 or 1,5,9 (overrides run.seeds)");
  cmd->add_option("--threads", s.threads, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  cmd->add_option("-T,--horizon", s.T, "horizon T (overrides run.T)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--trace-seeds", s.trace_seeds, "write full traces for the first k seeds, -1 for all")
      ->check(CLI::Range(-1, 1 << 30));
}

ExperimentConfig load(const Source& s) {
  if (s.config.empty() && s.preset.empty()) throw ConfigError("one of --config or --preset is required");
  ExperimentConfig c = s.config.empty() ? preset_config(s.preset) : load_config(s.config);
  if (!s.out.empty()) c.output.dir = s.out;
  if (!s.seeds.empty()) {
    try {
      c.run.seeds = parse_seed_list(s.seeds);
    } catch (const ogdbz::InvalidArgument& e) {
      throw ConfigError(std::string("--seeds: ") + e.what());
    }
  }
  if (s.threads >= 0) c.run.threads = s.threads;
  if (s.T >= 0) c.run.T = s.T;
  if (s.trace_seeds >= -1) c.run.trace_seeds = s.trace_seeds;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online gradient descent with buffer zones for constrained LTI control"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_stamp());

  Source run_src, sweep_src, audit_src;
  auto* run = app.add_subcommand("run", "run every seed and write artifacts");
  add_source(run, run_src, true);
  auto* sweep = app.add_subcommand("sweep", "run a grid over epsilon, eta0 and H");
  add_source(sweep, sweep_src, true);

  auto* audit = app.add_subcommand("audit", "re-check a recorded trace");
  add_source(audit, audit_src, false);
  AuditOptions audit_opts;
  std::string frame = "working";
  audit->add_option("--trace", audit_opts.trace_path, "trace CSV written by `run`")->required();
  audit->add_option("--frame", frame, "coordinates of the trace")->check(CLI::IsMember({"working", "physical"}));
  audit->add_option("--epsilon", audit_opts.epsilon, "also report strict safety at this margin")
      ->check(CLI::NonNegativeNumber);
  audit->add_option("--margins", audit_opts.margins_path, "write per-stage certified margins here");

  auto* preset = app.add_subcommand("preset", "list or print built-in presets");
  preset->require_subcommand(1);
  preset->add_subcommand("list", "list presets");
  std::string show_name;
  auto* show = preset->add_subcommand("show", "print a preset as a complete config");
  show->add_option("name", show_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(load(run_src), std::cout, std::cerr);
    if (*sweep) return cmd_sweep(load(sweep_src), std::cout, std::cerr);
    if (*audit) {
      audit_opts.physical = frame == "physical";
      return cmd_audit(load(audit_src), audit_opts, std::cout, std::cerr);
    }
    if (*show) return cmd_preset_show(show_name, std::cout);
    return cmd_preset_list(std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ogdbz::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ogdbz::InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUnsafe;
  }
}
