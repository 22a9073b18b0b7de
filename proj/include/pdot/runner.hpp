#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "pdot/config.hpp"
#include "pdot/report.hpp"

namespace pdot {

struct RunOverrides {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
};

struct RunResult {
  int exit_code = 0;  // 0 converged, 2 flagged non-convergence
  TransportReport report;
  std::string out_dir;
};

// Dispatches the experiment to its solver and writes the artifact files into
// the output directory: trace.csv (step,objective), trace_plot.csv (with the
// step/1e4 plot index), report.txt, diagnostics.txt, plus solver-specific
// CSVs (map.csv, coupling.csv, potentials.csv, scores.csv, scatter files).
// Errors are thrown; flagged non-convergence is exit_code 2 with the partial
// trace already written.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOverrides& ov = {});

}  // namespace pdot
