#pragma once

#include "ogdbz/ogd_bz.hpp"
#include "ogdbz/system_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace ogdbz::cli {

using Json = nlohmann::ordered_json;

/// Raised for malformed or inconsistent configuration; the message names the key.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Either the `hvac` preset (with field overrides) or inline matrices.
struct InstanceConfig {
  std::string preset;  // "hvac" or empty for inline data
  HvacConfig hvac;
  Mat A, B, K, Dx, Du, Q, R;
  Vec dx, du;
  double w_bar = 0.0;
  std::optional<double> kappa, gamma;  // certify K with these; tightest certificate otherwise

  bool operator==(const InstanceConfig& o) const;
};

enum class Selection { manual, theorem1, corollary2 };

struct AlgorithmConfig {
  Selection select = Selection::manual;
  int H = 7;
  double epsilon = 0.04;
  StepSchedule schedule = StepSchedule::hvac();
  double gf_constant = 1.0;

  bool operator==(const AlgorithmConfig& o) const;
};

enum class BenchmarkKind { none, linear, fixed, both };

struct RunConfig {
  int T = 2000;
  std::vector<std::uint64_t> seeds{1};
  int threads = 0;  // 0: hardware concurrency
  BenchmarkKind benchmark = BenchmarkKind::linear;
  int grid_per_axis = 201;
  int trace_seeds = 10;  // full traces for the first k seeds; -1 for all

  bool operator==(const RunConfig& o) const = default;
};

struct OutputConfig {
  std::string dir = "ogdbz_out";
  bool plot_script = true;

  bool operator==(const OutputConfig& o) const = default;
};

/// Cartesian grid for `sweep`; an empty axis keeps the algorithm's value.
struct SweepConfig {
  std::vector<double> epsilon;
  std::vector<double> eta0;
  std::vector<int> H;

  bool empty() const { return epsilon.empty() && eta0.empty() && H.empty(); }
  bool operator==(const SweepConfig& o) const = default;
};

struct ExperimentConfig {
  InstanceConfig instance;
  AlgorithmConfig algorithm;
  RunConfig run;
  OutputConfig output;
  SweepConfig sweep;

  bool operator==(const ExperimentConfig& o) const = default;
};

/// Rejects unknown keys and values of the wrong type.
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::string& path);
/// Fully expanded form; parse_config(to_json(c)) == c.
Json to_json(const ExperimentConfig& c);

/// "1-100", "3", "1,4,9" or mixtures such as "1-10,20".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct PresetInfo {
  std::string name;
  std::string description;
};
std::vector<PresetInfo> preset_list();
/// The named preset as a complete config.
ExperimentConfig preset_config(const std::string& name);

const char* to_string(Selection s);
const char* to_string(BenchmarkKind b);

}  // namespace ogdbz::cli
