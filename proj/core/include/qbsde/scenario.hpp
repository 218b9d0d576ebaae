#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbsde/bsde.hpp"
#include "qbsde/control.hpp"
#include "qbsde/pde.hpp"

namespace qbsde {

/// Declarative description of one experiment; parsed from JSON.
struct ScenarioConfig {
  std::string name = "custom";
  std::string description;
  std::uint64_t seed = 1;
  double horizon = 1.0;
  std::size_t paths = 1u << 14;
  std::size_t steps = 50;

  std::string gen_family = "pure-quadratic";  // pure-quadratic | entropic-linear-y | affine-y | zero
  double gen_gamma = 1.0;
  double gen_ky = 0.0;
  double gen_a = 0.0;
  double gen_b = 0.0;

  std::string terminal_kind = "identity";  // identity | square | constant
  double terminal_scale = 1.0;
  double terminal_shift = 0.0;

  std::size_t dim = 1;
  double drift_slope = 0.0;
  double sigma = 1.0;

  BasisPlan basis;
  SolverOptions solver;

  double partition_p = 2.0;
  double partition_epsilon = 1.0;
  double uniq_p = 1.5;
  double uniq_epsilon = 1.0;
  double attainment_tol = 0.05;
  std::size_t battery_size = 21;

  bool has_pde = false;
  PdeGrid pde_grid;
  A4Constants a4;
  std::vector<FkProbe> probes;
  double fk_tol = 0.05;

  std::vector<double> ladder_n;

  bool dump_fields = false;
  bool dump_paths = false;
};

ScenarioConfig parse_scenario_config(const std::string& json_text);
std::string scenario_config_to_json(const ScenarioConfig& cfg);

/// Built-in experiment definitions (stable names, stable parameters).
std::vector<ScenarioConfig> list_builtin_scenarios();
ScenarioConfig builtin_scenario(const std::string& name);

/// Concrete model objects resolved from a config.
struct ScenarioModel {
  GeneratorSpec gen;
  SdeSpec sde;
  TerminalFn terminal;                    // of the terminal state vector
  std::function<double(double)> terminal1d;  // scalar restriction (dim == 1)
};
ScenarioModel build_scenario_model(const ScenarioConfig& cfg);

struct ScenarioResult {
  std::string report_json;
  std::vector<std::string> files_written;
  double y0 = 0.0;
  double y0_se = 0.0;
  double sandwich = 0.0;
  double gap0 = 0.0;
  bool comparison_ok = false;
  bool attainment_ok = false;
  bool certified = false;  // all requested certifications passed
  std::size_t battery_admissible = 0;
};

/// Full pipeline: simulate, solve, bound, certify duality, optional PDE and
/// ladder blocks; writes report.json and CSV outputs into out_dir.
/// full_battery enables the >= battery_size control battery (certify mode).
ScenarioResult run_scenario(const ScenarioConfig& cfg, const std::string& out_dir,
                            bool full_battery = false);

/// Randomised dual-side validation for the scenario's driver; writes
/// dual_check.json into out_dir when out_dir is nonempty.
DualSuiteReport dual_check_scenario(const ScenarioConfig& cfg,
                                    const std::string& out_dir);

}  // namespace qbsde
