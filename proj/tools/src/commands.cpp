#include "ogdbz_cli/commands.hpp"

#include "ogdbz/io.hpp"
#include "ogdbz_cli/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace ogdbz::cli {

namespace fs = std::filesystem;

namespace {

// Recorded w_t must reproduce x_{t+1} to this tolerance, relative to the state scale.
constexpr double kReplayTol = 1e-8;
constexpr double kMarginTol = 1e-9;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  os << text;
}

void print_params(const Resolved& r, std::ostream& out) {
  const OgdBzParams& p = r.params;
  const BufferParams& b = p.buffers;
  out << "instance   " << r.inst.name << "  n=" << r.inst.system.n() << " m=" << r.inst.system.m()
      << "  K=" << fmt(r.inst.base_gain.K(0, 0)) << (r.inst.base_gain.K.size() > 1 ? " ..." : "")
      << "  kappa=" << fmt(r.inst.base_gain.kappa) << " gamma=" << fmt(r.inst.base_gain.gamma) << "\n";
  out << "eps_star   " << (r.eps_star ? fmt(r.eps_star->eps_star) : std::string("n/a")) << "\n";
  out << "params     H=" << p.H << " epsilon=" << fmt(p.epsilon) << " schedule=" << to_string(p.schedule.kind)
      << " eta0=" << fmt(p.schedule.eta0) << " T=" << p.T << "\n";
  out << "buffers    eps1=" << fmt(b.eps1) << " eps2=" << fmt(b.eps2) << (p.eps2_extrapolated ? " (at max eta)" : "")
      << " eps3=" << fmt(b.eps3) << "\n";
  out << "conditions horizon=" << p.horizon_condition << " safety=" << p.safety_condition
      << " nonempty=" << p.nonempty_condition << "\n";
  if (!r.benchmark_note.empty()) out << "note       " << r.benchmark_note << "\n";
}

void print_summary(const CellSummary& s, std::ostream& out) {
  out << "seeds      " << s.completed << "/" << s.seeds << " completed, " << s.failures << " failed\n";
  out << "safety     " << s.violations << " violations, " << s.motion_flags << " motion flags\n";
  out << "margins    mean worst " << fmt(s.mean_worst_margin) << ", max " << fmt(s.max_worst_margin)
      << (s.flags_hold ? (s.certified_ok ? " (certified)" : " (POSITIVE under valid flags)") : " (flags do not hold)")
      << "\n";
  out << "cost       mean " << fmt(s.mean_cost) << "\n";
  if (s.mean_regret_linear) out << "regret     linear mean " << fmt(*s.mean_regret_linear) << "\n";
  if (s.mean_regret_fixed) out << "regret     fixed mean " << fmt(*s.mean_regret_fixed) << "\n";
}

bool has_regret(const CellResult& c) {
  for (const SeedResult& s : c.seeds)
    if (s.completed && (s.regret_linear || s.regret_fixed)) return true;
  return false;
}

bool any_completed(const CellResult& c) {
  for (const SeedResult& s : c.seeds)
    if (s.completed) return true;
  return false;
}

// Writes seeds.csv, summary.csv, regret.csv and envelope.csv; returns the file map.
Json write_cell_files(const fs::path& dir, const ExperimentConfig& cfg, const Resolved& r, const CellResult& cell) {
  Json files;
  write_seeds_csv((dir / "seeds.csv").string(), cell.seeds);
  files["seeds"] = "seeds.csv";
  write_text(dir / "summary.csv",
             summary_header() + "\n" + summary_row(cfg, &r, &cell.summary, cell.summary.ok() ? "ok" : "unsafe", "") + "\n");
  files["summary"] = "summary.csv";
  if (has_regret(cell)) {
    write_regret_csv((dir / "regret.csv").string(), cell.seeds);
    files["regret"] = "regret.csv";
  }
  if (any_completed(cell)) {
    write_envelope_csv((dir / "envelope.csv").string(), cell.seeds);
    files["envelope"] = "envelope.csv";
  }
  return files;
}

std::string rel(const std::string& path, const fs::path& base) {
  return path.empty() ? path : fs::relative(path, base).generic_string();
}

}  // namespace

int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  Resolved r;
  try {
    r = resolve(cfg);
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInfeasible;
  }
  print_params(r, out);

  const fs::path dir(cfg.output.dir);
  fs::create_directories(dir);
  const CellResult cell = run_cell(r, cfg, (dir / "traces").string(), &err);

  Json files = write_cell_files(dir, cfg, r, cell);
  Json traces = Json::array(), margins = Json::array();
  for (const SeedResult& s : cell.seeds) {
    if (s.trace_path.empty()) continue;
    traces.push_back(rel(s.trace_path, dir));
    margins.push_back(rel(s.margin_path, dir));
  }
  files["traces"] = traces;
  files["margins"] = margins;
  if (cfg.output.plot_script && any_completed(cell)) {
    write_plot_script((dir / "plot.gp").string(), {"."}, {"epsilon = " + fmt(r.params.epsilon)},
                      r.inst.system.n(), has_regret(cell));
    files["plot"] = "plot.gp";
  }
  Json manifest = manifest_json(cfg, r, cell);
  manifest["files"] = files;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  print_summary(cell.summary, out);
  for (const SeedResult& s : cell.seeds)
    if (!s.completed) err << "seed " << s.seed << " failed: " << s.error << "\n";
  out << "output     " << dir.string() << "\n";
  return cell.summary.ok() ? kExitOk : kExitUnsafe;
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.algorithm.select != Selection::manual) {
    err << "error: sweep needs algorithm.select = manual\n";
    return kExitUsage;
  }
  const std::vector<double> eps = cfg.sweep.epsilon.empty() ? std::vector<double>{cfg.algorithm.epsilon} : cfg.sweep.epsilon;
  const std::vector<double> eta0 =
      cfg.sweep.eta0.empty() ? std::vector<double>{cfg.algorithm.schedule.eta0} : cfg.sweep.eta0;
  const std::vector<int> Hs = cfg.sweep.H.empty() ? std::vector<int>{cfg.algorithm.H} : cfg.sweep.H;

  const fs::path dir(cfg.output.dir);
  fs::create_directories(dir);
  std::ostringstream table;
  table << "cell," << summary_header() << "\n";
  Json cells = Json::array();
  std::vector<std::string> plot_dirs, labels;
  int n = 1;
  bool any_regret = false, all_ok = true;
  int index = 0;
  for (double e : eps) {
    for (double h0 : eta0) {
      for (int H : Hs) {
        ExperimentConfig c = cfg;
        c.sweep = {};
        c.algorithm.epsilon = e;
        c.algorithm.schedule.eta0 = h0;
        c.algorithm.H = H;
        c.output.dir = (dir / "cells" / ("cell_" + std::to_string(index))).string();
        const std::string name = "cell_" + std::to_string(index++);
        const std::string label = "eps=" + fmt(e) + " eta0=" + fmt(h0) + " H=" + std::to_string(H);
        out << name << ": " << label << "\n";
        Json entry = {{"cell", name}, {"epsilon", e}, {"eta0", h0}, {"H", H}};
        try {
          if (H < 1 || !(e >= 0.0) || !(h0 > 0.0)) throw InvalidArgument("need H >= 1, epsilon >= 0, eta0 > 0");
          const Resolved r = resolve(c);
          fs::create_directories(c.output.dir);
          const CellResult cell = run_cell(r, c, "", &err);
          const std::string status = cell.summary.ok() ? "ok" : "unsafe";
          table << name << ',' << summary_row(c, &r, &cell.summary, status, "") << "\n";
          Json m = manifest_json(c, r, cell);
          m["files"] = write_cell_files(c.output.dir, c, r, cell);
          write_text(fs::path(c.output.dir) / "manifest.json", m.dump(2) + "\n");
          entry["status"] = status;
          entry["summary"] = m["summary"];
          all_ok = all_ok && cell.summary.ok();
          if (any_completed(cell)) {
            plot_dirs.push_back("cells/" + name);
            labels.push_back(label);
            any_regret = any_regret || has_regret(cell);
            n = r.inst.system.n();
          }
          print_summary(cell.summary, out);
        } catch (const std::exception& ex) {
          const std::string status = dynamic_cast<const InfeasibleError*>(&ex) ? "infeasible" : "error";
          table << name << ',' << summary_row(c, nullptr, nullptr, status, ex.what()) << "\n";
          entry["status"] = status;
          entry["error"] = ex.what();
          all_ok = false;
          out << "  " << status << ": " << ex.what() << "\n";
        }
        cells.push_back(entry);
      }
    }
  }
  write_text(dir / "sweep.csv", table.str());
  if (cfg.output.plot_script && !plot_dirs.empty())
    write_plot_script((dir / "plot.gp").string(), plot_dirs, labels, n, any_regret);
  Json manifest = {{"tool", "ogdbz"}, {"version", version_stamp()}, {"config", to_json(cfg)}, {"cells", cells}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "output     " << dir.string() << "\n";
  return all_ok ? kExitOk : kExitUnsafe;
}

int cmd_audit(const ExperimentConfig& cfg, const AuditOptions& opts, std::ostream& out, std::ostream& err) {
  std::ifstream in(opts.trace_path);
  if (!in) {
    err << "error: cannot open trace '" << opts.trace_path << "'\n";
    return kExitUsage;
  }
  RolloutTrace tr;
  try {
    tr = read_trace_csv(in);
  } catch (const ParseError& e) {
    err << "error: " << opts.trace_path << ": " << e.what() << "\n";
    return kExitUsage;
  }
  const ProblemInstance inst = build_instance(cfg.instance, tr.T());
  const int n = inst.system.n(), m = inst.system.m();
  if (tr.stages.front().x.size() != n || tr.stages.front().u.size() != m) {
    err << "error: trace dimensions do not match the configured instance\n";
    return kExitUsage;
  }
  if (opts.physical && inst.coordinate_shift) {
    const CoordinateShift& sh = *inst.coordinate_shift;
    for (StageRecord& s : tr.stages) {
      s.x -= sh.x_eq;
      s.u -= sh.u_eq;
    }
    tr.final_state -= sh.x_eq;
  }

  bool ok = true;
  double scale = 1.0;
  for (const StageRecord& s : tr.stages) scale = std::max(scale, s.x.cwiseAbs().maxCoeff());
  const double replay = tr.replay_error(inst.system);
  out << "stages     " << tr.stages.size() << " (T = " << tr.T() << ")\n";
  out << "replay     max |x_{t+1} - A x_t - B u_t - w_t| = " << fmt(replay) << "\n";
  if (replay > kReplayTol * scale) {
    out << "           recorded disturbances do not reproduce the states\n";
    ok = false;
  }

  const SafetyReport rep = opts.physical && inst.coordinate_shift
                               ? audit_safety(tr, physical_constraints(inst), opts.epsilon, &*inst.coordinate_shift)
                               : audit_safety(tr, inst.constraints, opts.epsilon);
  out << "frame      " << (opts.physical ? "physical" : "working") << "\n";
  out << "safety     " << rep.violations << " violations";
  if (rep.first_violation >= 0) out << ", first at t = " << rep.first_violation;
  out << ", worst excess " << fmt(rep.worst_excess) << ", min slack " << fmt(rep.min_slack) << "\n";
  if (opts.epsilon > 0.0)
    out << "           strictly safe at epsilon " << fmt(opts.epsilon) << ": " << (rep.strictly_safe ? "yes" : "no") << "\n";
  ok = ok && rep.safe();

  const int H = tr.stages.front().M.H;
  if (H > 0) {
    const std::vector<Vec> states = tr.states();
    const MarginTrace mt = worst_case_margins(tr.policies(), &states, inst);
    out << "margins    worst certified " << fmt(mt.worst) << " at t = " << mt.worst_stage << "\n";
    if (!opts.margins_path.empty()) {
      std::ofstream mos(opts.margins_path);
      if (!mos) {
        err << "error: cannot write '" << opts.margins_path << "'\n";
        return kExitUsage;
      }
      write_margins_csv(mos, mt);
    }
    try {
      ExperimentConfig c = cfg;
      c.run.T = tr.T();
      const OgdBzParams p = c.algorithm.select == Selection::manual
                                ? make_params(inst, c.algorithm.H, c.algorithm.epsilon, c.algorithm.schedule,
                                              tr.T(), build_costs(c.instance).G, std::nullopt, c.algorithm.gf_constant)
                                : resolve(c).params;
      if (p.H != H) {
        out << "flags      configured H = " << p.H << " differs from the trace's H = " << H << "; not checked\n";
      } else {
        out << "flags      horizon=" << p.horizon_condition << " safety=" << p.safety_condition << "\n";
        if (p.theorem1_safe() && mt.worst > kMarginTol) {
          out << "           certified margin is positive although the flags hold\n";
          ok = false;
        }
      }
    } catch (const Error& e) {
      out << "flags      not checked: " << e.what() << "\n";
    }
  }
  out << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitUnsafe;
}

int cmd_preset_list(std::ostream& out) {
  for (const PresetInfo& p : preset_list()) out << p.name << "  " << p.description << "\n";
  return kExitOk;
}

int cmd_preset_show(const std::string& name, std::ostream& out) {
  out << to_json(preset_config(name)).dump(2) << "\n";
  return kExitOk;
}

}  // namespace ogdbz::cli
