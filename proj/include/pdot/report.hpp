#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pdot {

// One full-sample objective evaluation along a solver run.
struct TraceEntry {
  std::int64_t step = 0;
  double objective = 0.0;
};

// Common output of the iterative solvers: the value estimate (corrected for
// any cost shift), the objective trace, a quantile-grid dump of the learned
// maps (d = 1), and scalar diagnostics.
struct TransportReport {
  double value = 0.0;
  bool converged = false;
  std::vector<TraceEntry> trace;
  std::vector<std::string> map_header;  // e.g. {"s1","T"} or {"s1","T","Tu","Td","q"}
  Eigen::MatrixXd map_samples;          // one row per grid point, empty if d > 1
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;
  std::int64_t steps_run = 0;
  double wall_seconds = 0.0;
};

}  // namespace pdot
