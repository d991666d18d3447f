#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace splatroom {

// Outcome of one oracle comparison. A check passes when its deviation is
// within either the absolute or the relative tolerance.
struct OracleReport {
  std::string name;      // check identifier, e.g. "raster.compositor"
  std::string instance;  // what was compared
  double max_abs = 0.0;
  double max_rel = 0.0;
  double tol_abs = 0.0;
  double tol_rel = 0.0;
  bool passed = false;
};

// Analytic gradients against central finite differences (h = 1e-4): every
// surfel parameter through the rasterizer, each loss w.r.t. its rendered
// maps, and the combined losses through the rasterizer. Tolerances are
// multiplied by tolerance_scale (infinity accepts everything).
std::vector<OracleReport> run_gradient_suite(std::uint64_t seed, double tolerance_scale = 1.0);

// Fast paths against independent brute-force implementations.
std::vector<OracleReport> run_equivalence_suite(std::uint64_t seed, double tolerance_scale = 1.0);

// Where each derived example of the component contract is checked: a check
// name from the suites above, or an acceptance run.
struct CoverageEntry {
  std::string example;
  std::string check;
};
const std::vector<CoverageEntry>& coverage_table();

struct SuiteSummary {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst_abs = 0.0;
  double worst_rel = 0.0;
};
// One summary per check name, in first-appearance order.
std::vector<SuiteSummary> summarize(const std::vector<OracleReport>& reports);

std::string reports_json(const std::vector<OracleReport>& reports);

}  // namespace splatroom
