#pragma once

#include <functional>
#include <string>
#include <vector>

namespace pdot {

// One acceptance criterion outcome.
struct CheckItem {
  std::string name;
  double measured = 0.0;
  double target = 0.0;
  std::string relation;  // human-readable pass condition
  bool passed = false;
  double seconds = 0.0;
};

struct CheckOptions {
  std::string configs_dir = "configs";
  std::string work_dir = "out/check";
};

// Runs a verification suite: "figures" reproduces the bundled experiments
// and compares their values against independent oracles, "properties" runs
// the analytic invariant checks, "all" runs both. Emits one line per item
// through `progress` (may be null) as items finish.
std::vector<CheckItem> run_check(
    const std::string& suite, const CheckOptions& opts,
    const std::function<void(const std::string&)>& progress);

bool all_passed(const std::vector<CheckItem>& items);

std::string format_check_line(const CheckItem& item);

}  // namespace pdot
