#include "ogdbz_cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace ogdbz::cli {

namespace {

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

double get_number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

int get_int(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

bool get_bool(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  return j.get<bool>();
}

std::string get_string(const Json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

Vec get_vec(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_number(j[i], where);
  return v;
}

Mat get_mat(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw ConfigError(where + ": rows must be non-empty arrays");
  Mat M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(where + ": ragged matrix");
    for (size_t c = 0; c < cols; ++c)
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get_number(j[r][c], where);
  }
  return M;
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

bool same(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

// Field table shared by parse and serialize so the two cannot drift apart.
struct HvacField {
  const char* key;
  double HvacConfig::*member;
};
constexpr HvacField kHvacFields[] = {
    {"upsilon", &HvacConfig::upsilon},     {"zeta", &HvacConfig::zeta},
    {"theta_out", &HvacConfig::theta_out}, {"pi_heat", &HvacConfig::pi_heat},
    {"dt", &HvacConfig::dt},               {"theta_set", &HvacConfig::theta_set},
    {"x_min", &HvacConfig::x_min},         {"x_max", &HvacConfig::x_max},
    {"u_min", &HvacConfig::u_min},         {"u_max", &HvacConfig::u_max},
    {"w_min", &HvacConfig::w_min},         {"w_max", &HvacConfig::w_max},
    {"q", &HvacConfig::q},                 {"r_min", &HvacConfig::r_min},
    {"r_max", &HvacConfig::r_max},         {"base_gain", &HvacConfig::base_gain},
};

HvacConfig parse_hvac(const Json& j) {
  if (!j.is_object()) throw ConfigError("instance.hvac: expected an object");
  HvacConfig h;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto f = std::find_if(std::begin(kHvacFields), std::end(kHvacFields),
                                [&](const HvacField& x) { return it.key() == x.key; });
    if (f == std::end(kHvacFields)) throw ConfigError("instance.hvac: unknown key '" + it.key() + "'");
    h.*(f->member) = get_number(it.value(), "instance.hvac." + it.key());
  }
  return h;
}

InstanceConfig parse_instance(const Json& j) {
  InstanceConfig ic;
  if (j.contains("preset")) {
    check_keys(j, "instance", {"preset", "hvac"});
    ic.preset = get_string(j["preset"], "instance.preset");
    if (ic.preset != "hvac") throw ConfigError("instance.preset: unknown preset '" + ic.preset + "'");
    if (j.contains("hvac")) ic.hvac = parse_hvac(j["hvac"]);
    return ic;
  }
  check_keys(j, "instance", {"A", "B", "w_bar", "Dx", "dx", "Du", "du", "K", "Q", "R", "kappa", "gamma"});
  for (const char* k : {"A", "B", "w_bar", "Dx", "dx", "Du", "du", "K", "Q", "R"})
    if (!j.contains(k)) throw ConfigError(std::string("instance: missing key '") + k + "'");
  ic.A = get_mat(j["A"], "instance.A");
  ic.B = get_mat(j["B"], "instance.B");
  ic.w_bar = get_number(j["w_bar"], "instance.w_bar");
  ic.Dx = get_mat(j["Dx"], "instance.Dx");
  ic.dx = get_vec(j["dx"], "instance.dx");
  ic.Du = get_mat(j["Du"], "instance.Du");
  ic.du = get_vec(j["du"], "instance.du");
  ic.K = get_mat(j["K"], "instance.K");
  ic.Q = get_mat(j["Q"], "instance.Q");
  ic.R = get_mat(j["R"], "instance.R");
  if (j.contains("kappa") != j.contains("gamma"))
    throw ConfigError("instance: kappa and gamma must be given together");
  if (j.contains("kappa")) {
    ic.kappa = get_number(j["kappa"], "instance.kappa");
    ic.gamma = get_number(j["gamma"], "instance.gamma");
  }
  return ic;
}

StepSchedule parse_schedule(const Json& j) {
  check_keys(j, "algorithm.stepsize", {"schedule", "eta0", "floor"});
  if (!j.contains("schedule") || !j.contains("eta0"))
    throw ConfigError("algorithm.stepsize: 'schedule' and 'eta0' are required");
  const std::string kind = get_string(j["schedule"], "algorithm.stepsize.schedule");
  const double eta0 = get_number(j["eta0"], "algorithm.stepsize.eta0");
  if (!(eta0 > 0.0)) throw ConfigError("algorithm.stepsize.eta0: must be > 0");
  StepSchedule s;
  if (kind == "constant") {
    if (j.contains("floor")) throw ConfigError("algorithm.stepsize.floor: only for floored_inv_sqrt");
    s = StepSchedule::constant(eta0);
  } else if (kind == "inv_sqrt") {
    if (j.contains("floor")) throw ConfigError("algorithm.stepsize.floor: only for floored_inv_sqrt");
    s = {StepSchedule::Kind::inv_sqrt, eta0, 1};
  } else if (kind == "floored_inv_sqrt") {
    const int floor = j.contains("floor") ? get_int(j["floor"], "algorithm.stepsize.floor") : 1;
    if (floor < 1) throw ConfigError("algorithm.stepsize.floor: must be >= 1");
    s = StepSchedule::floored(eta0, floor);
  } else {
    throw ConfigError("algorithm.stepsize.schedule: unknown schedule '" + kind + "'");
  }
  return s;
}

AlgorithmConfig parse_algorithm(const Json& j) {
  check_keys(j, "algorithm", {"select", "H", "epsilon", "stepsize", "gf_constant"});
  AlgorithmConfig a;
  if (j.contains("select")) {
    const std::string s = get_string(j["select"], "algorithm.select");
    if (s == "manual") a.select = Selection::manual;
    else if (s == "auto:theorem1") a.select = Selection::theorem1;
    else if (s == "auto:corollary2") a.select = Selection::corollary2;
    else throw ConfigError("algorithm.select: expected manual, auto:theorem1 or auto:corollary2");
  }
  if (a.select != Selection::manual) {
    for (const char* k : {"H", "epsilon", "stepsize"})
      if (j.contains(k))
        throw ConfigError(std::string("algorithm.") + k + ": not allowed with automatic selection");
  } else {
    if (j.contains("H")) a.H = get_int(j["H"], "algorithm.H");
    if (j.contains("epsilon")) a.epsilon = get_number(j["epsilon"], "algorithm.epsilon");
    if (j.contains("stepsize")) a.schedule = parse_schedule(j["stepsize"]);
    if (a.H < 1) throw ConfigError("algorithm.H: must be >= 1");
    if (!(a.epsilon >= 0.0)) throw ConfigError("algorithm.epsilon: must be >= 0");
  }
  if (j.contains("gf_constant")) a.gf_constant = get_number(j["gf_constant"], "algorithm.gf_constant");
  if (!(a.gf_constant > 0.0)) throw ConfigError("algorithm.gf_constant: must be > 0");
  return a;
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  std::ostringstream os;
  for (size_t i = 0; i < seeds.size();) {
    size_t j = i;
    while (j + 1 < seeds.size() && seeds[j + 1] == seeds[j] + 1) ++j;
    if (i) os << ',';
    os << seeds[i];
    if (j > i) os << '-' << seeds[j];
    i = j + 1;
  }
  return os.str();
}

RunConfig parse_run(const Json& j) {
  check_keys(j, "run", {"T", "seeds", "threads", "benchmark", "grid_per_axis", "trace_seeds"});
  RunConfig r;
  if (j.contains("T")) r.T = get_int(j["T"], "run.T");
  if (r.T < 0) throw ConfigError("run.T: must be >= 0");
  if (j.contains("seeds")) {
    const Json& s = j["seeds"];
    if (s.is_string()) {
      try {
        r.seeds = parse_seed_list(s.get<std::string>());
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("run.seeds: ") + e.what());
      }
    } else if (s.is_array()) {
      r.seeds.clear();
      for (const auto& v : s) {
        if (!v.is_number_unsigned()) throw ConfigError("run.seeds: entries must be non-negative integers");
        r.seeds.push_back(v.get<std::uint64_t>());
      }
    } else {
      throw ConfigError("run.seeds: expected a range string or an array");
    }
    if (r.seeds.empty()) throw ConfigError("run.seeds: empty seed list");
    std::set<std::uint64_t> uniq(r.seeds.begin(), r.seeds.end());
    if (uniq.size() != r.seeds.size()) throw ConfigError("run.seeds: duplicate seed");
  }
  if (j.contains("threads")) r.threads = get_int(j["threads"], "run.threads");
  if (r.threads < 0) throw ConfigError("run.threads: must be >= 0");
  if (j.contains("benchmark")) {
    const std::string b = get_string(j["benchmark"], "run.benchmark");
    if (b == "none") r.benchmark = BenchmarkKind::none;
    else if (b == "linear") r.benchmark = BenchmarkKind::linear;
    else if (b == "fixed") r.benchmark = BenchmarkKind::fixed;
    else if (b == "both") r.benchmark = BenchmarkKind::both;
    else throw ConfigError("run.benchmark: expected none, linear, fixed or both");
  }
  if (j.contains("grid_per_axis")) r.grid_per_axis = get_int(j["grid_per_axis"], "run.grid_per_axis");
  if (r.grid_per_axis < 2) throw ConfigError("run.grid_per_axis: must be >= 2");
  if (j.contains("trace_seeds")) r.trace_seeds = get_int(j["trace_seeds"], "run.trace_seeds");
  if (r.trace_seeds < -1) throw ConfigError("run.trace_seeds: must be >= -1");
  return r;
}

OutputConfig parse_output(const Json& j) {
  check_keys(j, "output", {"dir", "plot_script"});
  OutputConfig o;
  if (j.contains("dir")) o.dir = get_string(j["dir"], "output.dir");
  if (o.dir.empty()) throw ConfigError("output.dir: must be non-empty");
  if (j.contains("plot_script")) o.plot_script = get_bool(j["plot_script"], "output.plot_script");
  return o;
}

SweepConfig parse_sweep(const Json& j) {
  check_keys(j, "sweep", {"epsilon", "eta0", "H"});
  SweepConfig s;
  auto list = [&](const char* key) -> const Json& {
    const Json& a = j[key];
    if (!a.is_array() || a.empty()) throw ConfigError(std::string("sweep.") + key + ": expected a non-empty array");
    return a;
  };
  if (j.contains("epsilon"))
    for (const auto& v : list("epsilon")) s.epsilon.push_back(get_number(v, "sweep.epsilon"));
  if (j.contains("eta0"))
    for (const auto& v : list("eta0")) s.eta0.push_back(get_number(v, "sweep.eta0"));
  if (j.contains("H"))
    for (const auto& v : list("H")) s.H.push_back(get_int(v, "sweep.H"));
  return s;
}

}  // namespace

bool InstanceConfig::operator==(const InstanceConfig& o) const {
  if (preset != o.preset) return false;
  if (!preset.empty()) return hvac == o.hvac;
  return same(A, o.A) && same(B, o.B) && same(K, o.K) && same(Dx, o.Dx) && same(Du, o.Du) &&
         same(Q, o.Q) && same(R, o.R) && same(dx, o.dx) && same(du, o.du) && w_bar == o.w_bar &&
         kappa == o.kappa && gamma == o.gamma;
}

bool AlgorithmConfig::operator==(const AlgorithmConfig& o) const {
  if (select != o.select || gf_constant != o.gf_constant) return false;
  return select != Selection::manual || (H == o.H && epsilon == o.epsilon && schedule == o.schedule);
}

const char* to_string(Selection s) {
  switch (s) {
    case Selection::manual: return "manual";
    case Selection::theorem1: return "auto:theorem1";
    case Selection::corollary2: return "auto:corollary2";
  }
  return "unknown";
}

const char* to_string(BenchmarkKind b) {
  switch (b) {
    case BenchmarkKind::none: return "none";
    case BenchmarkKind::linear: return "linear";
    case BenchmarkKind::fixed: return "fixed";
    case BenchmarkKind::both: return "both";
  }
  return "unknown";
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  auto num = [&](std::string_view s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
      throw InvalidArgument("bad seed '" + std::string(s) + "' in '" + text + "'");
    return v;
  };
  std::string_view rest(text);
  while (!rest.empty()) {
    const size_t comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
    const size_t dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(num(item));
      continue;
    }
    const std::uint64_t a = num(item.substr(0, dash)), b = num(item.substr(dash + 1));
    if (b < a) throw InvalidArgument("descending seed range '" + std::string(item) + "'");
    if (b - a >= 10000000) throw InvalidArgument("seed range '" + std::string(item) + "' is too long");
    for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
  }
  if (out.empty()) throw InvalidArgument("empty seed list");
  return out;
}

ExperimentConfig parse_config(const Json& j) {
  check_keys(j, "config", {"instance", "algorithm", "run", "output", "sweep"});
  if (!j.contains("instance")) throw ConfigError("config: missing section 'instance'");
  ExperimentConfig c;
  c.instance = parse_instance(j["instance"]);
  if (j.contains("algorithm")) c.algorithm = parse_algorithm(j["algorithm"]);
  if (j.contains("run")) c.run = parse_run(j["run"]);
  if (j.contains("output")) c.output = parse_output(j["output"]);
  if (j.contains("sweep")) c.sweep = parse_sweep(j["sweep"]);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_config(j);
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  Json& inst = j["instance"];
  if (!c.instance.preset.empty()) {
    inst["preset"] = c.instance.preset;
    Json h = Json::object();
    for (const auto& f : kHvacFields) h[f.key] = c.instance.hvac.*(f.member);
    inst["hvac"] = h;
  } else {
    const InstanceConfig& i = c.instance;
    inst["A"] = mat_json(i.A);
    inst["B"] = mat_json(i.B);
    inst["w_bar"] = i.w_bar;
    inst["Dx"] = mat_json(i.Dx);
    inst["dx"] = vec_json(i.dx);
    inst["Du"] = mat_json(i.Du);
    inst["du"] = vec_json(i.du);
    inst["K"] = mat_json(i.K);
    inst["Q"] = mat_json(i.Q);
    inst["R"] = mat_json(i.R);
    if (i.kappa) {
      inst["kappa"] = *i.kappa;
      inst["gamma"] = *i.gamma;
    }
  }
  Json& alg = j["algorithm"];
  alg["select"] = to_string(c.algorithm.select);
  if (c.algorithm.select == Selection::manual) {
    alg["H"] = c.algorithm.H;
    alg["epsilon"] = c.algorithm.epsilon;
    Json s;
    s["schedule"] = to_string(c.algorithm.schedule.kind);
    s["eta0"] = c.algorithm.schedule.eta0;
    if (c.algorithm.schedule.kind == StepSchedule::Kind::floored_inv_sqrt)
      s["floor"] = c.algorithm.schedule.floor;
    alg["stepsize"] = s;
  }
  alg["gf_constant"] = c.algorithm.gf_constant;
  Json& run = j["run"];
  run["T"] = c.run.T;
  run["seeds"] = seeds_text(c.run.seeds);
  run["threads"] = c.run.threads;
  run["benchmark"] = to_string(c.run.benchmark);
  run["grid_per_axis"] = c.run.grid_per_axis;
  run["trace_seeds"] = c.run.trace_seeds;
  j["output"] = {{"dir", c.output.dir}, {"plot_script", c.output.plot_script}};
  if (!c.sweep.empty()) {
    Json& s = j["sweep"];
    if (!c.sweep.epsilon.empty()) s["epsilon"] = c.sweep.epsilon;
    if (!c.sweep.eta0.empty()) s["eta0"] = c.sweep.eta0;
    if (!c.sweep.H.empty()) s["H"] = c.sweep.H;
  }
  return j;
}

std::vector<PresetInfo> preset_list() {
  return {{"hvac",
           "scalar room thermal model in setpoint coordinates; H = 7, epsilon = 0.04, "
           "eta_t = 0.5 max(t+1, 40)^(-1/2), T = 2000, seeds 1-1000, linear benchmark"}};
}

ExperimentConfig preset_config(const std::string& name) {
  if (name != "hvac") throw ConfigError("unknown preset '" + name + "'");
  ExperimentConfig c;
  c.instance.preset = "hvac";
  c.algorithm.H = 7;
  c.algorithm.epsilon = 0.04;
  c.algorithm.schedule = StepSchedule::hvac();
  c.run.T = 2000;
  c.run.seeds = parse_seed_list("1-1000");
  c.run.benchmark = BenchmarkKind::linear;
  c.run.grid_per_axis = 201;
  c.output.dir = "hvac_out";
  return c;
}

}  // namespace ogdbz::cli
