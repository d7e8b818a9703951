#pragma once

#include "pgdlr/diagnostics.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pgdlr {

inline constexpr const char* kVersion = "0.1.0";

/// Every knob of a batch run. Each field maps to one `section.key` of the
/// INI configuration file (see docs/configuration.md).
struct RunConfig {
  std::string name = "run";

  // [mesh]
  int n_per_side = 16;

  // [samples]
  std::string sample_kind = "monte_carlo";  // monte_carlo | tensor_grid
  std::size_t sample_count = 50;
  std::uint64_t sample_seed = 1;
  std::vector<std::pair<double, double>> bounds = {{-1.0, 1.0}};
  int points_per_axis = 0;

  // [model]
  std::string model = "constant_adr";  // rotating_body | boundary_layer | constant_adr
  double eps = 0.01;
  double eps_fluct = 0.0;  // constant_adr: eps(w) = eps + eps_fluct * w_1
  double bx = 1.0;
  double by = 0.0;
  double c = 0.0;
  double c_fluct = 0.0;  // constant_adr: c(w) = c + c_fluct * w_last
  double f = 0.0;
  double boundary_value = 0.0;

  // [initial]
  std::string initial = "random";  // rotating_body | boundary_layer_snapshot | random
  std::size_t rank = 2;
  double snapshot_tol = 0.0;  // > 0 selects tolerance truncation
  std::uint64_t initial_seed = 1;

  // [scheme]
  std::string scheme = "semi_implicit";
  std::string stabilization = "supg";
  std::string delta_policy = "experiment";  // experiment | coercivity | semi_implicit | constant
  double delta_value = 0.0;
  double dt = 0.01;
  double T = 0.1;
  double max_condition = 1e12;
  double blowup_factor = 1e8;

  // [output]
  std::string output_dir = "out";
  bool tangent_residual = false;
  bool bound_ledger = false;
  std::vector<std::size_t> track_samples;
  std::vector<std::vector<double>> track_points;
  std::vector<std::size_t> dump_samples;
  std::vector<std::vector<double>> dump_points;
  std::vector<double> dump_times;
};

RunConfig read_config(std::istream& in);
RunConfig read_config_file(const std::string& path);
void write_config(std::ostream& out, const RunConfig& cfg);
/// Consistency checks that need no assembly; throws ConfigError.
void check_config(const RunConfig& cfg);

enum class Scale { paper, desk };
Scale parse_scale(const std::string& name);
RunConfig preset_rotating_body(Scale scale);
RunConfig preset_boundary_layer(Scale scale);

/// The headline numbers of a configuration, computed without assembling.
struct PresetEcho {
  std::size_t N_h = 0;
  std::size_t N_C = 0;
  double dt = 0.0;
  double T = 0.0;
  std::string delta;  // policy description
  std::optional<std::size_t> R;
  std::optional<double> snapshot_tol;
};
PresetEcho echo(const RunConfig& cfg);
std::string format_echo(const PresetEcho& e);

// --- builders -------------------------------------------------------------

Mesh build_mesh(const RunConfig& cfg);
SampleSpace build_space(const RunConfig& cfg);
CoefficientModel build_model(const RunConfig& cfg, const SampleSpace& space);
DlrState build_initial_state(const RunConfig& cfg, const Mesh& mesh, const SampleSpace& space, const SpMat& mass);
double estimate_inverse_constant(const Mesh& mesh);
/// delta_K per the configured policy; +inf entries are capped with h_K/4.
std::vector<double> resolve_delta(const RunConfig& cfg, const Mesh& mesh, const ReactionAnalysis& analysis,
                                  double C_I);
bool policy_needs_inverse_constant(const std::string& policy);

/// The three shapes of the rotating-body initial condition.
double slotted_cylinder(Point2 x);
double hump(Point2 x);
double cone(Point2 x);

// --- field dumps ----------------------------------------------------------

/// Header `t R n_per_side N_C`, then the sample indices, then one block of
/// (n+1) rows of (n+1) nodal values per realization.
struct FieldDump {
  double t = 0.0;
  std::size_t R = 0;
  int n_per_side = 0;
  std::size_t N_C = 0;
  std::vector<std::size_t> samples;
  Mat fields;  // N_h x samples.size()
};
void write_field_dump(std::ostream& out, const FieldDump& d);
FieldDump read_field_dump(std::istream& in);

// --- batch run ------------------------------------------------------------

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 1 config, 2 numerical, 3 diagnostic/bound
  std::string message;
  std::optional<std::size_t> failing_step;
  std::vector<StepReport> reports;
  std::vector<BoundLedger> ledgers;
  std::vector<std::size_t> tracked;      // sample indices of md.csv columns
  std::vector<std::vector<double>> md;   // per step, per tracked sample
};

/// Runs the configuration and writes norms.csv, ledger.csv, md.csv, field
/// dumps and run.json into cfg.output_dir. Never throws for run failures;
/// the exit code and manifest carry them.
RunOutcome run_from_config(const RunConfig& cfg);

}  // namespace pgdlr
