#include "ogdbz_cli/experiment.hpp"

#include "ogdbz/io.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#ifndef OGDBZ_VERSION
#define OGDBZ_VERSION "unknown"
#endif
#ifndef OGDBZ_GIT_REVISION
#define OGDBZ_GIT_REVISION "unknown"
#endif

namespace ogdbz::cli {

namespace fs = std::filesystem;

namespace {

// Grids beyond this many gains are not searched; eps_star and the linear benchmark are skipped.
constexpr double kMaxGridSize = 2.0e5;
// Certified margins above this count as positive.
constexpr double kMarginTol = 1e-9;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  return os;
}

Json mat_json(const Mat& M) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json num_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

bool wants_linear(BenchmarkKind b) { return b == BenchmarkKind::linear || b == BenchmarkKind::both; }
bool wants_fixed(BenchmarkKind b) { return b == BenchmarkKind::fixed || b == BenchmarkKind::both; }

}  // namespace

std::string version_stamp() { return std::string(OGDBZ_VERSION) + "+" + OGDBZ_GIT_REVISION; }

ProblemInstance build_instance(const InstanceConfig& ic, int T) {
  ProblemInstance inst;
  if (!ic.preset.empty()) {
    inst = build_hvac_instance(ic.hvac);
  } else {
    inst.system = {ic.A, ic.B, ic.w_bar};
    inst.system.validate();
    inst.constraints = {ic.Dx, ic.dx, ic.Du, ic.du};
    inst.constraints.validate(inst.system.n(), inst.system.m());
    inst.base_gain = ic.kappa ? certify_strong_stability(ic.A, ic.B, ic.K, *ic.kappa, *ic.gamma)
                              : certify_tightest(ic.A, ic.B, ic.K);
    inst.name = "inline";
  }
  inst.T = T;
  return inst;
}

CostModel build_costs(const InstanceConfig& ic) {
  CostModel cm;
  if (!ic.preset.empty()) {
    const double q = ic.hvac.q, lo = ic.hvac.r_min, hi = ic.hvac.r_max;
    cm.make = [q, lo, hi](std::uint64_t seed, int T) { return hvac_costs(seed, T, q, lo, hi).stream(); };
    cm.G = 2.0 * std::max(q, hi);
    cm.description = "q x^2 + r_t u^2, r_t ~ U(" + fmt(lo) + ", " + fmt(hi) + "), q = " + fmt(q);
    return cm;
  }
  if (ic.Q.rows() != ic.A.rows() || ic.Q.cols() != ic.A.rows())
    throw ConfigError("instance.Q: expected an n x n matrix");
  if (ic.R.rows() != ic.B.cols() || ic.R.cols() != ic.B.cols())
    throw ConfigError("instance.R: expected an m x m matrix");
  const CostFunction f = quadratic_cost(ic.Q, ic.R);
  cm.make = [f](std::uint64_t, int) { return CostStream([f](int) { return f; }); };
  cm.G = f.G;
  cm.description = "x'Qx + u'Ru";
  return cm;
}

Resolved resolve(const ExperimentConfig& cfg) {
  Resolved r;
  const int T = cfg.run.T;
  r.inst = build_instance(cfg.instance, T);
  r.costs = build_costs(cfg.instance);
  const int d = r.inst.system.m() * r.inst.system.n();
  if (d <= 4 && std::pow(static_cast<double>(cfg.run.grid_per_axis), d) <= kMaxGridSize)
    r.grid = default_gain_grid(r.inst, cfg.run.grid_per_axis);
  if (!r.grid.empty()) {
    try {
      r.eps_star = epsilon_star_probe(r.inst, r.grid, r.inst.base_gain.kappa, r.inst.base_gain.gamma);
    } catch (const InfeasibleError&) {
      r.eps_star.reset();
    }
  }
  r.benchmark = cfg.run.benchmark;
  if (wants_linear(r.benchmark) && r.grid.empty()) {
    r.benchmark = BenchmarkKind::fixed;
    r.benchmark_note = "gain grid unavailable (needs m n <= 4 and a bounded grid size); best fixed policy used instead";
  }

  const std::optional<double> es = r.eps_star ? std::optional<double>(r.eps_star->eps_star) : std::nullopt;
  const AlgorithmConfig& a = cfg.algorithm;
  if (a.select == Selection::manual) {
    r.params = make_params(r.inst, a.H, a.epsilon, a.schedule, T, r.costs.G, es, a.gf_constant);
  } else {
    if (!es)
      throw InfeasibleError("automatic selection needs eps_star, but no grid gain is certified "
                            "strongly stable and safe");
    const SelectionMode mode = a.select == Selection::theorem1 ? SelectionMode::theorem1 : SelectionMode::corollary2;
    r.params = select_parameters(r.inst, T, *es, mode, r.costs.G, a.gf_constant);
  }
  r.setup = prepare_ogd_bz(r.inst, r.params);
  return r;
}

SeedResult run_seed(const Resolved& r, const ExperimentConfig& cfg, std::uint64_t seed,
                    const std::string& trace_dir) {
  SeedResult s;
  s.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const ProblemInstance& inst = r.inst;
    const int T = cfg.run.T;
    const CostStream costs = r.costs.make(seed, T);
    const std::vector<Vec> ws = uniform_disturbances(inst.system.n(), inst.system.w_bar, seed, T);
    DisturbanceSource dist = DisturbanceSource::fixed(ws, inst.system.w_bar);
    const RolloutTrace tr = run_ogd_bz(inst, r.params, r.setup, costs, dist);

    s.total_cost = tr.total_cost;
    s.motion_flags = tr.motion_flags;
    for (const StageRecord& st : tr.stages)
      if (st.proj_path == ProjectionPath::splitting) ++s.splitting_steps;
    s.safety = audit_safety(tr, inst.constraints, r.params.epsilon);
    const std::vector<Vec> states = tr.states();
    const MarginTrace margins = worst_case_margins(tr.policies(), &states, inst);
    s.worst_margin = margins.worst;
    s.worst_margin_stage = margins.worst_stage;

    const std::vector<double> alg = stage_costs(tr);
    if (wants_linear(r.benchmark)) {
      const LinearBenchmark lb = best_linear_in_hindsight(inst, costs, ws, T, r.grid);
      const RegretReport rr = regret_report(alg, lb.stage_costs, "linear");
      s.regret_linear = rr.regret;
      s.avg_regret_linear = rr.averaged;
      s.K_star = lb.K_star;
    }
    if (wants_fixed(r.benchmark)) {
      const FixedPolicyBenchmark fb =
          best_fixed_policy_in_hindsight(r.setup.poly, inst, materialize(costs, T), ws);
      DacController ctrl(inst.system, inst.base_gain.K, fb.M_star);
      DisturbanceSource replay = DisturbanceSource::fixed(ws, inst.system.w_bar);
      const RolloutTrace fixed = rollout(ctrl, inst, replay, costs, T);
      const RegretReport rr = regret_report(alg, stage_costs(fixed), "fixed");
      s.regret_fixed = rr.regret;
      s.avg_regret_fixed = rr.averaged;
    }

    const int n = inst.system.n(), m = inst.system.m();
    s.x_phys.assign(n, std::vector<double>(tr.stages.size()));
    s.u_phys.assign(m, std::vector<double>(tr.stages.size()));
    for (size_t t = 0; t < tr.stages.size(); ++t) {
      const Vec x = to_physical_state(inst, tr.stages[t].x);
      const Vec u = to_physical_action(inst, tr.stages[t].u);
      for (int i = 0; i < n; ++i) s.x_phys[i][t] = x(i);
      for (int j = 0; j < m; ++j) s.u_phys[j][t] = u(j);
    }

    if (!trace_dir.empty()) {
      s.trace_path = (fs::path(trace_dir) / ("seed_" + std::to_string(seed) + ".csv")).string();
      s.margin_path = (fs::path(trace_dir) / ("margins_" + std::to_string(seed) + ".csv")).string();
      std::ofstream tos = open_out(s.trace_path);
      write_trace_csv(tos, tr);
      std::ofstream mos = open_out(s.margin_path);
      write_margins_csv(mos, margins);
    }
    s.completed = true;
  } catch (const std::exception& e) {
    s.completed = false;
    s.error = e.what();
  }
  s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

CellResult run_cell(const Resolved& r, const ExperimentConfig& cfg, const std::string& trace_dir,
                    std::ostream* progress) {
  const auto& seeds = cfg.run.seeds;
  const int count = static_cast<int>(seeds.size());
  const int traced = trace_dir.empty() ? 0 : cfg.run.trace_seeds < 0 ? count : std::min(count, cfg.run.trace_seeds);
  if (traced > 0) fs::create_directories(trace_dir);

  CellResult cell;
  cell.seeds.resize(seeds.size());
  std::atomic<int> done{0};
  std::mutex io;
  parallel_for(count, cfg.run.threads, [&](int i) {
    cell.seeds[i] = run_seed(r, cfg, seeds[i], i < traced ? trace_dir : std::string());
    const int k = ++done;
    if (progress && (k == count || k % std::max(1, count / 20) == 0)) {
      std::lock_guard<std::mutex> lock(io);
      *progress << "  " << k << "/" << count << " seeds\n" << std::flush;
    }
  });

  CellSummary& sm = cell.summary;
  sm.seeds = count;
  sm.flags_hold = r.params.theorem1_safe();
  double cost = 0.0, lin = 0.0, fix = 0.0, margin = 0.0;
  int n_lin = 0, n_fix = 0;
  sm.max_worst_margin = -std::numeric_limits<double>::infinity();
  for (const SeedResult& s : cell.seeds) {
    if (!s.completed) {
      ++sm.failures;
      continue;
    }
    ++sm.completed;
    sm.violations += s.safety.violations;
    sm.motion_flags += s.motion_flags;
    cost += s.total_cost;
    margin += s.worst_margin;
    sm.max_worst_margin = std::max(sm.max_worst_margin, s.worst_margin);
    if (s.regret_linear) lin += *s.regret_linear, ++n_lin;
    if (s.regret_fixed) fix += *s.regret_fixed, ++n_fix;
  }
  if (sm.completed > 0) {
    sm.mean_cost = cost / sm.completed;
    sm.mean_worst_margin = margin / sm.completed;
  }
  if (n_lin > 0) sm.mean_regret_linear = lin / n_lin;
  if (n_fix > 0) sm.mean_regret_fixed = fix / n_fix;
  sm.certified_ok = !sm.flags_hold || sm.completed == 0 || sm.max_worst_margin <= kMarginTol;
  return cell;
}

std::string summary_header() {
  return "epsilon,eta0,H,status,seeds,completed,failures,violations,motion_flags,mean_cost,"
         "mean_regret_linear,mean_regret_fixed,mean_worst_margin,max_worst_margin,flags_hold,error";
}

std::string summary_row(const ExperimentConfig& cfg, const Resolved* r, const CellSummary* s,
                        const std::string& status, const std::string& error) {
  std::ostringstream os;
  const double eps = r ? r->params.epsilon : cfg.algorithm.epsilon;
  const double eta0 = r ? r->params.schedule.eta0 : cfg.algorithm.schedule.eta0;
  const int H = r ? r->params.H : cfg.algorithm.H;
  os << fmt(eps) << ',' << fmt(eta0) << ',' << H << ',' << status << ',';
  if (s) {
    os << s->seeds << ',' << s->completed << ',' << s->failures << ',' << s->violations << ','
       << s->motion_flags << ',' << fmt(s->mean_cost) << ',' << opt(s->mean_regret_linear) << ','
       << opt(s->mean_regret_fixed) << ',' << fmt(s->mean_worst_margin) << ','
       << fmt(s->max_worst_margin) << ',' << (s->flags_hold ? 1 : 0) << ',';
  } else {
    os << cfg.run.seeds.size() << ",0,,,,,,,,,,";
  }
  os << csv_safe(error);
  return os.str();
}

void write_regret_csv(const std::string& path, const std::vector<SeedResult>& seeds) {
  std::vector<std::vector<double>> lin, fix;
  for (const SeedResult& s : seeds) {
    if (!s.completed) continue;
    if (!s.avg_regret_linear.empty()) lin.push_back(s.avg_regret_linear);
    if (!s.avg_regret_fixed.empty()) fix.push_back(s.avg_regret_fixed);
  }
  require(!lin.empty() || !fix.empty(), "write_regret_csv: no regret series");
  std::vector<std::string> names;
  std::vector<const std::vector<double>*> cols;
  const Band bl = lin.empty() ? Band{} : band(lin);
  const Band bf = fix.empty() ? Band{} : band(fix);
  auto add = [&](const std::string& stem, const Band& b) {
    names.insert(names.end(), {stem + "_mean", stem + "_lo", stem + "_hi"});
    cols.insert(cols.end(), {&b.mean, &b.lo, &b.hi});
  };
  if (!lin.empty()) add("linear", bl);
  if (!fix.empty()) add("fixed", bf);
  std::ofstream os = open_out(path);
  write_series_csv(os, names, cols);
}

void write_envelope_csv(const std::string& path, const std::vector<SeedResult>& seeds) {
  std::vector<const SeedResult*> done;
  for (const SeedResult& s : seeds)
    if (s.completed) done.push_back(&s);
  require(!done.empty(), "write_envelope_csv: no completed seeds");
  const size_t n = done.front()->x_phys.size(), m = done.front()->u_phys.size();
  std::vector<Band> bands;
  std::vector<std::string> names;
  auto add = [&](const std::string& stem, size_t coord, bool state) {
    std::vector<std::vector<double>> series;
    for (const SeedResult* s : done) series.push_back(state ? s->x_phys[coord] : s->u_phys[coord]);
    bands.push_back(band(series));
    names.insert(names.end(), {stem + "_mean", stem + "_lo", stem + "_hi"});
  };
  for (size_t i = 0; i < n; ++i) add("x" + std::to_string(i), i, true);
  for (size_t j = 0; j < m; ++j) add("u" + std::to_string(j), j, false);
  std::vector<const std::vector<double>*> cols;
  for (const Band& b : bands) cols.insert(cols.end(), {&b.mean, &b.lo, &b.hi});
  std::ofstream os = open_out(path);
  write_series_csv(os, names, cols);
}

void write_seeds_csv(const std::string& path, const std::vector<SeedResult>& seeds) {
  std::ofstream os = open_out(path);
  os << "seed,status,total_cost,violations,worst_excess,min_slack,worst_margin,worst_margin_stage,"
        "motion_flags,splitting_steps,regret_linear,K_star,regret_fixed,wall_seconds,trace,error\n";
  for (const SeedResult& s : seeds) {
    os << s.seed << ',' << (s.completed ? "ok" : "failed") << ',';
    if (s.completed) {
      std::string kstar;
      for (Eigen::Index i = 0; i < s.K_star.size(); ++i) kstar += (i ? " " : "") + fmt(s.K_star.data()[i]);
      os << fmt(s.total_cost) << ',' << s.safety.violations << ',' << fmt(s.safety.worst_excess) << ','
         << fmt(s.safety.min_slack) << ',' << fmt(s.worst_margin) << ',' << s.worst_margin_stage << ','
         << s.motion_flags << ',' << s.splitting_steps << ',' << opt(s.regret_linear) << ',' << kstar
         << ',' << opt(s.regret_fixed) << ',';
    } else {
      os << ",,,,,,,,,,,";
    }
    os << fmt(s.wall_seconds) << ',' << s.trace_path << ',' << csv_safe(s.error) << '\n';
  }
}

Json manifest_json(const ExperimentConfig& cfg, const Resolved& r, const CellResult& cell) {
  Json j;
  j["tool"] = "ogdbz";
  j["version"] = version_stamp();
  j["config"] = to_json(cfg);

  const ProblemInstance& inst = r.inst;
  Json& in = j["instance"];
  in["name"] = inst.name;
  in["n"] = inst.system.n();
  in["m"] = inst.system.m();
  in["kx"] = inst.constraints.kx();
  in["ku"] = inst.constraints.ku();
  in["w_bar"] = inst.system.w_bar;
  in["K"] = mat_json(inst.base_gain.K);
  in["kappa"] = inst.base_gain.kappa;
  in["gamma"] = inst.base_gain.gamma;
  if (inst.coordinate_shift)
    in["shift"] = {{"x_eq", vec_json(inst.coordinate_shift->x_eq)}, {"u_eq", vec_json(inst.coordinate_shift->u_eq)}};
  in["cost"] = r.costs.description;
  in["G"] = r.costs.G;

  if (r.eps_star)
    j["eps_star"] = {{"value", r.eps_star->eps_star}, {"K_star", mat_json(r.eps_star->K_star)},
                     {"candidates", r.eps_star->candidates}, {"admissible", r.eps_star->admissible}};
  else
    j["eps_star"] = nullptr;

  const OgdBzParams& p = r.params;
  j["params"] = {{"H", p.H},
                 {"epsilon", p.epsilon},
                 {"T", p.T},
                 {"schedule", {{"kind", to_string(p.schedule.kind)}, {"eta0", p.schedule.eta0}, {"floor", p.schedule.floor}}},
                 {"max_eta", p.schedule.max_eta(p.T)}};
  const BufferParams& b = p.buffers;
  j["buffers"] = {{"eta", b.eta}, {"eps1", b.eps1},   {"eps2", b.eps2},       {"eps3", b.eps3},
                  {"c1", b.c1},   {"c2", b.c2},       {"c3", b.c3},           {"b", b.b},
                  {"Lg", b.Lg},   {"Gf", b.Gf},       {"G", b.G},             {"gf_constant", b.gf_constant},
                  {"kappa_B", b.kappa_B},             {"h_threshold", b.h_threshold}};
  j["conditions"] = {{"horizon", p.horizon_condition},
                     {"safety", p.safety_condition},
                     {"nonempty", p.nonempty_condition},
                     {"eps2_extrapolated", p.eps2_extrapolated},
                     {"theorem1_safe", p.theorem1_safe()}};
  const bool zero_start = r.setup.poly.worst_slack(DacPolicy::zeros(p.H, inst.system.m(), inst.system.n()).flatten()) >= 0.0;
  j["initial_policy"] = zero_start ? "zero" : "phase-one witness";
  j["phase_one_slack"] = r.setup.feasibility.max_min_slack;
  j["benchmark"] = {{"requested", to_string(cfg.run.benchmark)},
                    {"used", to_string(r.benchmark)},
                    {"grid_size", r.grid.size()},
                    {"note", r.benchmark_note}};

  const CellSummary& s = cell.summary;
  j["summary"] = {{"seeds", s.seeds},
                  {"completed", s.completed},
                  {"failures", s.failures},
                  {"violations", s.violations},
                  {"motion_flags", s.motion_flags},
                  {"mean_cost", s.mean_cost},
                  {"mean_regret_linear", s.mean_regret_linear ? Json(*s.mean_regret_linear) : Json(nullptr)},
                  {"mean_regret_fixed", s.mean_regret_fixed ? Json(*s.mean_regret_fixed) : Json(nullptr)},
                  {"mean_worst_margin", num_or_null(s.mean_worst_margin)},
                  {"max_worst_margin", num_or_null(s.max_worst_margin)},
                  {"flags_hold", s.flags_hold},
                  {"certified_ok", s.certified_ok},
                  {"ok", s.ok()}};
  return j;
}

void write_plot_script(const std::string& path, const std::vector<std::string>& cell_dirs,
                       const std::vector<std::string>& labels, int n, bool has_regret) {
  require(cell_dirs.size() == labels.size(), "write_plot_script: one label per directory");
  std::ofstream os = open_out(path);
  const int u_lo = 2 + 3 * n + 1;
  auto file = [](const std::string& dir, const char* name) {
    return "'" + (dir.empty() || dir == "." ? std::string(name) : dir + "/" + name) + "'";
  };
  auto plot = [&](const char* name, const std::string& spec_fill, const std::string& spec_mean) {
    os << "plot ";
    for (size_t k = 0; k < cell_dirs.size(); ++k) {
      if (k) os << ", \\\n     ";
      os << file(cell_dirs[k], name) << " skip 1 using " << spec_fill << " with filledcurves fs transparent solid 0.25 lc " << k + 1
         << " notitle, \\\n     " << file(cell_dirs[k], name) << " skip 1 using " << spec_mean
         << " with lines lc " << k + 1 << " title '" << labels[k] << "'";
    }
    os << "\n";
  };
  os << "# gnuplot " << path.substr(path.find_last_of('/') + 1) << " (run from this directory)\n"
     << "set datafile separator ','\n"
     << "set terminal pngcairo size " << (has_regret ? 1500 : 1000) << ",450\n"
     << "set output 'figure.png'\n"
     << "set multiplot layout 1," << (has_regret ? 3 : 2) << "\n"
     << "set xlabel 't'\n";
  if (has_regret) {
    os << "set title 'averaged regret'\n";
    plot("regret.csv", "1:3:4", "1:2");
  }
  os << "set title 'state x_0'\n";
  plot("envelope.csv", "1:3:4", "1:2");
  os << "set title 'action u_0'\n";
  plot("envelope.csv", "1:" + std::to_string(u_lo) + ":" + std::to_string(u_lo + 1),
       "1:" + std::to_string(u_lo - 1));
  os << "unset multiplot\n";
}

}  // namespace ogdbz::cli
