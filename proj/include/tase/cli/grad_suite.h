#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace tase::cli {

struct SuiteOptions {
  int points = 100;       // random evaluation points per op
  double tol = 1e-4;
  std::string fault;      // primitive whose backward is negated
  std::uint64_t seed = 0;
  std::vector<std::string> only;  // module filter: diff, geometry, tride, grounder
};

struct SuiteEntry {
  std::string module;
  std::string op;
  int points = 0;
  double max_rel_error = 0.0;
  std::size_t excluded = 0;
  bool passed = false;
};

// Central finite differences over every primitive and every loss term.
std::vector<SuiteEntry> gradient_suite(const SuiteOptions& options = {});

nlohmann::json suite_to_json(const std::vector<SuiteEntry>& entries);

}  // namespace tase::cli
