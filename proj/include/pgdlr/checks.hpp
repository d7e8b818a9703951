#pragma once

#include "pgdlr/runner.hpp"

#include <string>
#include <vector>

namespace pgdlr {

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Self-checks behind `pgdlr check`. Run outputs go below `work_dir`.
std::vector<CheckLine> check_coercivity_suite(std::size_t trials = 500);
std::vector<CheckLine> check_bounds_suite(const std::string& work_dir);
std::vector<CheckLine> check_oracle_suite();
/// Dispatch by name (coercivity | bounds | oracle); throws ConfigError otherwise.
std::vector<CheckLine> run_check_suite(const std::string& suite, const std::string& work_dir);

/// Configurations of the bound checks: f = 0, c = 0 and deterministic eps
/// (case ii), constant reaction with forcing (case i) and forcing without
/// reaction (case iii).
RunConfig bound_case_config(BoundCase bound_case, Scheme scheme);

}  // namespace pgdlr
