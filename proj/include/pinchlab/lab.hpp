#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pinchlab/mesh.hpp"

namespace pinchlab {

/// Parameters of one of the built-in surface generators.
struct GeneratorSpec {
  std::string kind = "icosphere";  // icosphere | ellipsoid | torus | perturbed
  double radius = 1.0;
  double a = 1.0, b = 1.0, c = 1.0;
  int subdivisions = 5;
  double length1 = 6.283185307179586, length2 = 6.283185307179586;
  int n1 = 48, n2 = 48;
  double amplitude = 0.1;
  int frequency = 3;
  std::uint64_t seed = 1;

  SimplicialSurface generate() const;
  /// Stable text key, also used for caching.
  std::string key() const;
};

struct ExperimentConfig {
  std::string experiment;
  /// Primary surface for single-surface experiments; families use their own.
  std::optional<GeneratorSpec> mesh;
  std::optional<std::string> mesh_path;
  double solver_tol = 1e-10;
  double solver_shift = -0.01;
  bool oracle_dense = false;
  /// Threshold overrides keyed by check name.
  std::map<std::string, double> tolerances;
  std::uint64_t seed = 1;
  std::string json_out;
  std::string csv_dir;
  /// Directory with the shipped GH examples; empty selects the built-in default.
  std::string data_dir;
};

/// Parses {"experiment": ..., "mesh": {...} | "mesh_path": ..., "solver": {"tol", "shift"},
/// "oracle_dense", "tolerances": {...}, "seed", "json", "csv_dir", "data_dir"}.
/// Throws FormatError on malformed input.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string to_json(const ExperimentConfig& config);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  /// "<=", ">=", "==" or "flag".
  std::string relation;
  bool pass = false;
  std::string detail;
  /// Wall-clock measurement; its value is reported under "timestamp".
  bool timing = false;
};

struct ExperimentReport {
  std::string experiment;
  int criterion = 0;
  bool pass = false;
  std::vector<CheckResult> checks;
  /// Experiment-specific payload (JSON object text).
  std::string data = "{}";
  /// CSV tables keyed by file name.
  std::map<std::string, std::string> tables;
  double elapsed_seconds = 0.0;
};

/// Names of the experiments, in criterion order.
const std::vector<std::string>& experiment_names();
/// 1-based acceptance criterion realized by the experiment; throws on unknown names.
int criterion_of(const std::string& experiment);

/// Runs the experiment; writes the JSON report and CSV tables if requested.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// {"schema": 1, "experiment", "criterion", "pass", "checks", "data", "config", "timestamp"}.
/// Only the "timestamp" object (UTC time and elapsed seconds) varies between identical runs.
std::string report_json(const ExperimentReport& report, const ExperimentConfig& config);

/// Exit status of the experiment runner: 0 pass, 2 failed check, 1 error.
inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFail = 2;
inline constexpr int kExitUsage = 64;

/// Releases the cached surfaces and spectra shared between experiments.
void clear_experiment_cache();

} // namespace pinchlab
