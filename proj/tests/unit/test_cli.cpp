#include "doctest.h"

#include "ogdbz/io.hpp"
#include "ogdbz_cli/commands.hpp"
#include "ogdbz_cli/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ogdbz;
using namespace ogdbz::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("OGDBZ_TEST_TMP");
  const fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "ogdbz_cli_test";
  const fs::path p = root / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Small HVAC run: preset algorithm, short horizon, a handful of seeds.
ExperimentConfig small_hvac(const fs::path& dir, int T = 150, const std::string& seeds = "1-4") {
  ExperimentConfig c = preset_config("hvac");
  c.run.T = T;
  c.run.seeds = parse_seed_list(seeds);
  c.run.threads = 2;
  c.run.trace_seeds = 2;
  c.output.dir = dir.string();
  return c;
}

ExperimentConfig inline_scalar() {
  ExperimentConfig c;
  InstanceConfig& i = c.instance;
  i.A = Mat::Constant(1, 1, 0.5);
  i.B = Mat::Constant(1, 1, 1.0);
  i.K = Mat::Constant(1, 1, 0.1);
  i.Dx = (Mat(2, 1) << 1.0, -1.0).finished();
  i.dx = Vec::Constant(2, 4.0);
  i.Du = (Mat(2, 1) << 1.0, -1.0).finished();
  i.du = Vec::Constant(2, 3.0);
  i.Q = Mat::Identity(1, 1);
  i.R = Mat::Identity(1, 1);
  i.w_bar = 0.5;
  i.kappa = 1.0;
  i.gamma = 0.6;
  return c;
}

std::string parse_error(const Json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config round trip") {
  const ExperimentConfig hv = preset_config("hvac");
  CHECK(parse_config(to_json(hv)) == hv);
  ExperimentConfig sc = inline_scalar();
  sc.algorithm.schedule = StepSchedule::floored(0.3, 25);
  sc.sweep.epsilon = {0.1, 0.2};
  sc.sweep.H = {3, 5};
  CHECK(parse_config(to_json(sc)) == sc);
  ExperimentConfig au = hv;
  au.algorithm.select = Selection::corollary2;
  CHECK(parse_config(to_json(au)) == au);
  CHECK_FALSE(to_json(au)["algorithm"].contains("H"));

  const fs::path dir = scratch("config");
  std::ofstream(dir / "c.json") << to_json(sc).dump(2);
  CHECK(load_config((dir / "c.json").string()) == sc);
  std::ofstream(dir / "bad.json") << "{ \"instance\": ";
  CHECK_THROWS_AS(load_config((dir / "bad.json").string()), ConfigError);
  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), ConfigError);
}

TEST_CASE("config rejects unknown keys and wrong types") {
  Json j = to_json(preset_config("hvac"));
  Json k = j;
  k["run"]["horizon"] = 10;
  CHECK(parse_error(k) == "run: unknown key 'horizon'");
  k = j;
  k["instance"]["hvac"]["zeta2"] = 1.0;
  CHECK(parse_error(k) == "instance.hvac: unknown key 'zeta2'");
  k = j;
  k["extra"] = 1;
  CHECK(parse_error(k) == "config: unknown key 'extra'");
  k = j;
  k["run"]["T"] = "long";
  CHECK(parse_error(k) == "run.T: expected an integer");
  k = j;
  k["algorithm"]["stepsize"]["schedule"] = "cosine";
  CHECK(parse_error(k) == "algorithm.stepsize.schedule: unknown schedule 'cosine'");
  k = j;
  k["algorithm"]["select"] = "auto:theorem1";
  CHECK(parse_error(k) == "algorithm.H: not allowed with automatic selection");
  k = j;
  k["run"]["seeds"] = "1,1";
  CHECK(parse_error(k) == "run.seeds: duplicate seed");
  k = j;
  k["instance"]["preset"] = "boiler";
  CHECK(parse_error(k) == "instance.preset: unknown preset 'boiler'");
  Json s = to_json(inline_scalar());
  s["instance"].erase("gamma");
  CHECK(parse_error(s) == "instance: kappa and gamma must be given together");
  s = to_json(inline_scalar());
  s["instance"]["A"] = Json::array({Json::array({1.0, 2.0}), Json::array({1.0})});
  CHECK(parse_error(s) == "instance.A: ragged matrix");
  CHECK(parse_error(Json::object()) == "config: missing section 'instance'");
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("3") == std::vector<std::uint64_t>{3});
  CHECK(parse_seed_list("1-3,7") == std::vector<std::uint64_t>{1, 2, 3, 7});
  CHECK(parse_seed_list("1-100").size() == 100);
  CHECK_THROWS_AS(parse_seed_list(""), InvalidArgument);
  CHECK_THROWS_AS(parse_seed_list("5-2"), InvalidArgument);
  CHECK_THROWS_AS(parse_seed_list("a"), InvalidArgument);
  CHECK_THROWS_AS(parse_seed_list("1,,2"), InvalidArgument);
  CHECK_THROWS_AS(parse_seed_list("-3"), InvalidArgument);
}

TEST_CASE("presets") {
  std::ostringstream list, show;
  CHECK(cmd_preset_list(list) == kExitOk);
  CHECK(list.str().rfind("hvac  ", 0) == 0);
  CHECK(cmd_preset_show("hvac", show) == kExitOk);
  CHECK(parse_config(Json::parse(show.str())) == preset_config("hvac"));
  const ExperimentConfig hv = preset_config("hvac");
  CHECK(hv.algorithm.H == 7);
  CHECK(hv.algorithm.epsilon == 0.04);
  CHECK(hv.run.T == 2000);
  CHECK(hv.run.seeds.size() == 1000);
  CHECK_THROWS_AS(preset_config("boiler"), ConfigError);
}

TEST_CASE("run writes the documented artifacts") {
  const fs::path dir = scratch("run");
  std::ostringstream out, err;
  REQUIRE(cmd_run(small_hvac(dir), out, err) == kExitOk);
  CHECK(out.str().find("params     H=7 epsilon=0.04") != std::string::npos);

  const Json man = Json::parse(slurp(dir / "manifest.json"));
  CHECK(man["tool"] == "ogdbz");
  CHECK(man["params"]["H"] == 7);
  CHECK(man["params"]["epsilon"] == 0.04);
  CHECK(man["instance"]["K"][0][0] == -0.1);
  CHECK(man["eps_star"]["value"].get<double>() == doctest::Approx(2.0 / 7.0));
  CHECK(man["initial_policy"] == "phase-one witness");
  CHECK(man["summary"]["ok"] == true);
  CHECK(man["summary"]["violations"] == 0);
  CHECK(man["conditions"]["safety"] == false);
  CHECK(man["files"]["traces"].size() == 2);
  CHECK(man["files"]["plot"] == "plot.gp");
  for (const char* f : {"seeds.csv", "summary.csv", "regret.csv", "envelope.csv", "plot.gp",
                        "traces/seed_1.csv", "traces/margins_1.csv", "traces/seed_2.csv"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  CHECK_FALSE(fs::exists(dir / "traces/seed_3.csv"));

  CHECK(lines(dir / "summary.csv").front() == summary_header());
  CHECK(summary_header() ==
        "epsilon,eta0,H,status,seeds,completed,failures,violations,motion_flags,mean_cost,"
        "mean_regret_linear,mean_regret_fixed,mean_worst_margin,max_worst_margin,flags_hold,error");
  CHECK(lines(dir / "seeds.csv").front() ==
        "seed,status,total_cost,violations,worst_excess,min_slack,worst_margin,worst_margin_stage,"
        "motion_flags,splitting_steps,regret_linear,K_star,regret_fixed,wall_seconds,trace,error");
  CHECK(lines(dir / "seeds.csv").size() == 5);
  CHECK(lines(dir / "regret.csv").front() == "t,linear_mean,linear_lo,linear_hi");
  CHECK(lines(dir / "envelope.csv").front() == "t,x0_mean,x0_lo,x0_hi,u0_mean,u0_lo,u0_hi");
  CHECK(lines(dir / "envelope.csv").size() == 152);
  CHECK(lines(dir / "traces/margins_1.csv").front() == "# ogdbz-margins/1");

  // The envelope is in physical units: the room stays inside [22, 26] degrees.
  for (size_t k = 1; k < lines(dir / "envelope.csv").size(); k += 25) {
    const auto f = split_csv(lines(dir / "envelope.csv")[k]);
    CHECK(std::stod(f[2]) >= 22.0);
    CHECK(std::stod(f[3]) <= 26.0);
  }
}

TEST_CASE("a zero-length horizon runs") {
  const fs::path dir = scratch("t0");
  std::ostringstream out, err;
  CHECK(cmd_run(small_hvac(dir, 0, "1"), out, err) == kExitOk);
  const Json man = Json::parse(slurp(dir / "manifest.json"));
  CHECK(man["summary"]["completed"] == 1);
  CHECK(man["params"]["T"] == 0);
}

TEST_CASE("infeasible selections exit with code 3 and name the condition") {
  const fs::path dir = scratch("infeasible");
  std::ostringstream out, err;
  ExperimentConfig c = small_hvac(dir);
  c.algorithm.epsilon = 0.9;
  CHECK(cmd_run(c, out, err) == kExitInfeasible);
  CHECK(err.str().find("condition ε ≤ ε★ − ε₁ − ε₃ fails") != std::string::npos);

  std::ostringstream out2, err2;
  c.algorithm.select = Selection::corollary2;
  CHECK(cmd_run(c, out2, err2) == kExitInfeasible);
  CHECK(err2.str().find("condition ε ≤ ε★ − ε₁ − ε₃ fails (H = 119") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "manifest.json"));
}

TEST_CASE("inline instances run end to end") {
  const fs::path dir = scratch("inline");
  ExperimentConfig c = inline_scalar();
  c.algorithm.H = 4;
  c.algorithm.epsilon = 0.1;
  c.algorithm.schedule = StepSchedule::constant(0.05);
  c.run.T = 100;
  c.run.seeds = {7, 8};
  c.run.benchmark = BenchmarkKind::both;
  c.output.dir = dir.string();
  std::ostringstream out, err;
  CHECK(cmd_run(c, out, err) == kExitOk);
  const Json man = Json::parse(slurp(dir / "manifest.json"));
  CHECK(man["initial_policy"] == "zero");
  CHECK(man["benchmark"]["used"] == "both");
  CHECK_FALSE(man["summary"]["mean_regret_fixed"].is_null());
  CHECK(lines(dir / "regret.csv").front() == "t,linear_mean,linear_lo,linear_hi,fixed_mean,fixed_lo,fixed_hi");
}

TEST_CASE("audit accepts recorded traces and catches injected violations") {
  const fs::path dir = scratch("audit");
  const ExperimentConfig c = small_hvac(dir, 120, "3");
  std::ostringstream o0, e0;
  REQUIRE(cmd_run(c, o0, e0) == kExitOk);
  const fs::path trace = dir / "traces/seed_3.csv";

  std::ostringstream out, err;
  AuditOptions opts{trace.string(), false, 0.04, (dir / "audit_margins.csv").string()};
  CHECK(cmd_audit(c, opts, out, err) == kExitOk);
  CHECK(out.str().find("safety     0 violations") != std::string::npos);
  CHECK(out.str().find("flags      horizon=1 safety=0") != std::string::npos);
  CHECK(out.str().substr(out.str().size() - 5) == "PASS\n");
  CHECK(slurp(dir / "audit_margins.csv") == slurp(dir / "traces/margins_3.csv"));

  // Shift to physical units and audit in that frame.
  std::ifstream in(trace);
  RolloutTrace tr = read_trace_csv(in);
  const ProblemInstance inst = build_instance(c.instance, tr.T());
  for (StageRecord& s : tr.stages) {
    s.x += inst.coordinate_shift->x_eq;
    s.u += inst.coordinate_shift->u_eq;
  }
  tr.final_state += inst.coordinate_shift->x_eq;
  {
    std::ofstream os(dir / "physical.csv");
    write_trace_csv(os, tr);
  }
  std::ostringstream po, pe;
  CHECK(cmd_audit(c, {(dir / "physical.csv").string(), true, 0.0, ""}, po, pe) == kExitOk);
  CHECK(po.str().find("frame      physical") != std::string::npos);

  // Heat the room to 27 degrees at t = 40 with a matching disturbance so replay still holds.
  tr.stages[40].x(0) = 27.0;
  tr.stages[39].w(0) = 27.0 - 24.0 - 0.9 * (tr.stages[39].x(0) - 24.0) + 0.6 * (tr.stages[39].u(0) - 2.5);
  tr.stages[40].w(0) = tr.stages[41].x(0) - 24.0 - 0.9 * 3.0 + 0.6 * (tr.stages[40].u(0) - 2.5);
  {
    std::ofstream os(dir / "hot.csv");
    write_trace_csv(os, tr);
  }
  std::ostringstream ho, he;
  CHECK(cmd_audit(c, {(dir / "hot.csv").string(), true, 0.0, ""}, ho, he) == kExitUnsafe);
  CHECK(ho.str().find("safety     1 violations, first at t = 40, worst excess 1") != std::string::npos);
  CHECK(ho.str().find("recorded disturbances do not reproduce") == std::string::npos);
  CHECK(ho.str().substr(ho.str().size() - 5) == "FAIL\n");

  // Without the matching disturbance the replay check fails too.
  tr.stages[39].w(0) = 0.0;
  {
    std::ofstream os(dir / "tampered.csv");
    write_trace_csv(os, tr);
  }
  std::ostringstream to, te;
  CHECK(cmd_audit(c, {(dir / "tampered.csv").string(), true, 0.0, ""}, to, te) == kExitUnsafe);
  CHECK(to.str().find("recorded disturbances do not reproduce") != std::string::npos);
}

TEST_CASE("audit input errors exit with code 2") {
  const fs::path dir = scratch("audit_errors");
  const ExperimentConfig c = small_hvac(dir);
  std::ostringstream out, err;
  CHECK(cmd_audit(c, {(dir / "none.csv").string(), false, 0.0, ""}, out, err) == kExitUsage);
  std::ofstream(dir / "junk.csv") << "# ogdbz-trace/1 n=1 m=1 H=0\nnot,a,header\n";
  std::ostringstream o2, e2;
  CHECK(cmd_audit(c, {(dir / "junk.csv").string(), false, 0.0, ""}, o2, e2) == kExitUsage);
  CHECK(e2.str().find("line 2:") != std::string::npos);
  std::ofstream(dir / "wide.csv") << "# ogdbz-trace/1 n=2 m=1 H=0\n"
                                  << trace_csv_header(2, 1, 0) << "\n0,0,0,0,0,0,0,identity,0,0,0,1\n1,0,0\n";
  std::ostringstream o3, e3;
  CHECK(cmd_audit(c, {(dir / "wide.csv").string(), false, 0.0, ""}, o3, e3) == kExitUsage);
  CHECK(e3.str().find("dimensions") != std::string::npos);
}

TEST_CASE("a single-cell sweep reproduces the run summary") {
  const fs::path rd = scratch("sweep_run"), sd = scratch("sweep_one");
  std::ostringstream o1, e1, o2, e2;
  ExperimentConfig c = small_hvac(rd, 120, "1-3");
  REQUIRE(cmd_run(c, o1, e1) == kExitOk);
  c.output.dir = sd.string();
  c.sweep.epsilon = {0.04};
  REQUIRE(cmd_sweep(c, o2, e2) == kExitOk);
  const auto sweep = lines(sd / "sweep.csv");
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[0] == "cell," + summary_header());
  CHECK(sweep[1] == "cell_0," + lines(rd / "summary.csv")[1]);
  CHECK(fs::exists(sd / "cells/cell_0/manifest.json"));
  CHECK(fs::exists(sd / "plot.gp"));
}

TEST_CASE("sweep over epsilon and H records every cell") {
  const fs::path dir = scratch("sweep_grid");
  ExperimentConfig c = small_hvac(dir, 120, "1-3");
  c.sweep.epsilon = {0.04, 0.4, 0.9};
  c.sweep.H = {5, 7, 9};
  std::ostringstream out, err;
  // The eps = 0.9 cells are infeasible, so the sweep as a whole reports failure.
  CHECK(cmd_sweep(c, out, err) == kExitUnsafe);
  const auto rows = lines(dir / "sweep.csv");
  REQUIRE(rows.size() == 10);
  const Json man = Json::parse(slurp(dir / "manifest.json"));
  REQUIRE(man["cells"].size() == 9);
  for (const Json& cell : man["cells"]) {
    const double eps = cell["epsilon"];
    // Omega_0.4 is empty at H = 5.
    if (eps == 0.9 || (eps == 0.4 && cell["H"] == 5)) {
      CHECK(cell["status"] == "infeasible");
      continue;
    }
    CHECK(cell["status"] == "ok");
    CHECK(cell["summary"]["violations"] == 0);
    CHECK(cell["summary"]["completed"] == 3);
  }
  CHECK(split_csv(rows[7])[4] == "infeasible");

  // Tighter buffers keep the trajectories further from the walls.
  auto envelope_width = [&](int cell) {
    const auto env = lines(dir / "cells" / ("cell_" + std::to_string(cell)) / "envelope.csv");
    double hi = -1e9, lo = 1e9;
    for (size_t k = 1; k < env.size(); ++k) {
      const auto f = split_csv(env[k]);
      lo = std::min(lo, std::stod(f[2]));
      hi = std::max(hi, std::stod(f[3]));
    }
    return std::max(hi - 24.0, 24.0 - lo);
  };
  for (int h = 1; h < 3; ++h) CHECK(envelope_width(3 + h) <= envelope_width(h) + 1e-12);
}

TEST_CASE("sweep refuses automatic selection") {
  const fs::path dir = scratch("sweep_auto");
  ExperimentConfig c = small_hvac(dir);
  c.algorithm.select = Selection::theorem1;
  std::ostringstream out, err;
  CHECK(cmd_sweep(c, out, err) == kExitUsage);
}

TEST_CASE("version stamp") {
    const std::string v = version_stamp();
  CHECK(v.find('+') != std::string::npos);
  CHECK(v.rfind("0.", 0) == 0);
}
