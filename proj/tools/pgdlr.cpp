// Command-line front end: solve, preset, check.

#include "pgdlr/checks.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace pgdlr;

namespace {

int report(const RunOutcome& r, const std::string& dir) {
  if (r.exit_code == 0) {
    std::cout << "ok: " << r.reports.size() << " time levels written to " << dir << '\n';
    for (const auto& l : r.ledgers)
      std::cout << "bound " << to_string(l.theorem) << " case " << to_string(l.bound_case) << ": " << l.outcome()
                << '\n';
  } else {
    std::cerr << "error (exit " << r.exit_code << "): " << r.message << '\n';
  }
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SUPG-stabilized dynamical low-rank solver for random advection-diffusion-reaction problems"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  auto* solve = app.add_subcommand("solve", "run a configuration file");
  solve->add_option("--config", config_path, "INI configuration")->required();

  std::string preset_name, scale_name = "desk", out_dir;
  bool run_preset = false;
  auto* preset = app.add_subcommand("preset", "write (and optionally run) a preset configuration");
  preset->add_option("name", preset_name, "rotating-body | boundary-layer")
      ->required()
      ->check(CLI::IsMember({"rotating-body", "boundary-layer"}));
  preset->add_option("--scale", scale_name, "paper | desk")->check(CLI::IsMember({"paper", "desk"}));
  preset->add_option("--out", out_dir, "output directory")->required();
  preset->add_flag("--run", run_preset, "also run the preset");

  std::string suite, work_dir = "check_runs";
  auto* check = app.add_subcommand("check", "built-in verification suites");
  check->add_option("--suite", suite, "coercivity | bounds | oracle")
      ->required()
      ->check(CLI::IsMember({"coercivity", "bounds", "oracle"}));
  check->add_option("--work-dir", work_dir, "directory for the runs of the bounds suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*solve) {
      const RunConfig cfg = read_config_file(config_path);
      return report(run_from_config(cfg), cfg.output_dir);
    }
    if (*preset) {
      const Scale scale = parse_scale(scale_name);
      RunConfig cfg = preset_name == "rotating-body" ? preset_rotating_body(scale) : preset_boundary_layer(scale);
      cfg.output_dir = out_dir;
      std::filesystem::create_directories(out_dir);
      const auto path = std::filesystem::path(out_dir) / "config.ini";
      std::ofstream(path) << [&] {
        std::ostringstream s;
        write_config(s, cfg);
        return s.str();
      }();
      std::cout << cfg.name << ": " << format_echo(echo(cfg)) << '\n' << "config written to " << path.string() << '\n';
      if (run_preset) return report(run_from_config(cfg), cfg.output_dir);
      return 0;
    }
    bool all = true;
    for (const CheckLine& line : run_check_suite(suite, work_dir)) {
      std::cout << (line.pass ? "PASS " : "FAIL ") << line.name << ": " << line.detail << '\n';
      all = all && line.pass;
    }
    return all ? 0 : 3;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const DiagnosticError& e) {
    std::cerr << "diagnostic failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  }
}
