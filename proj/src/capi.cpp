#include "pdot.h"

#include <exception>
#include <string>
#include <utility>
#include <vector>

#include "pdot/check.hpp"
#include "pdot/config.hpp"
#include "pdot/lp.hpp"
#include "pdot/measure.hpp"
#include "pdot/report.hpp"
#include "pdot/runner.hpp"

struct pdot_report {
  pdot::TransportReport rep;
  std::vector<std::string> diag_names;  // stable iteration order for accessors
  std::vector<double> diag_values;
};

namespace {

thread_local std::string g_last_error;

pdot_status fail(const char* what) {
  g_last_error = what;
  return PDOT_ERR;
}

pdot_report* wrap(pdot::TransportReport rep) {
  auto* r = new pdot_report;
  r->rep = std::move(rep);
  for (const auto& [k, v] : r->rep.diagnostics) {
    r->diag_names.push_back(k);
    r->diag_values.push_back(v);
  }
  return r;
}

}  // namespace

extern "C" {

const char* pdot_version(void) { return "pdot 1.0.0"; }

const char* pdot_last_error(void) { return g_last_error.c_str(); }

pdot_status pdot_run(const char* config_path, const char* out_dir,
                     int64_t seed_override, int64_t steps_override,
                     pdot_report** out) {
  if (out != nullptr) *out = nullptr;
  if (config_path == nullptr) return fail("pdot_run: config_path is NULL");
  try {
    const pdot::ExperimentConfig cfg = pdot::parse_config_file(config_path);
    pdot::RunOverrides ov;
    if (out_dir != nullptr) ov.out_dir = std::string(out_dir);
    if (seed_override >= 0) ov.seed = static_cast<std::uint64_t>(seed_override);
    if (steps_override >= 0) ov.steps = steps_override;
    pdot::RunResult res = pdot::run_experiment(cfg, ov);
    if (out != nullptr) *out = wrap(std::move(res.report));
    return res.exit_code == 0 ? PDOT_OK : PDOT_NOT_CONVERGED;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

pdot_status pdot_check(const char* suite, const char* configs_dir,
                       const char* work_dir,
                       void (*progress)(const char* line, void* ctx),
                       void* ctx) {
  if (suite == nullptr) return fail("pdot_check: suite is NULL");
  try {
    pdot::CheckOptions opts;
    if (configs_dir != nullptr) opts.configs_dir = configs_dir;
    if (work_dir != nullptr) opts.work_dir = work_dir;
    std::function<void(const std::string&)> cb;
    if (progress != nullptr) {
      cb = [progress, ctx](const std::string& line) {
        progress(line.c_str(), ctx);
      };
    }
    const std::vector<pdot::CheckItem> items = pdot::run_check(suite, opts, cb);
    return pdot::all_passed(items) ? PDOT_OK : PDOT_NOT_CONVERGED;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

pdot_status pdot_oracle_frechet_hoeffding(const char* cost, const char* mu1,
                                          const char* mu2, int n_quad,
                                          double* out) {
  if (cost == nullptr || mu1 == nullptr || mu2 == nullptr || out == nullptr)
    return fail("pdot_oracle_frechet_hoeffding: NULL argument");
  try {
    *out = pdot::frechet_hoeffding_value(pdot::parse_cost(cost),
                                         pdot::parse_measure(mu1),
                                         pdot::parse_measure(mu2), n_quad);
    return PDOT_OK;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

pdot_status pdot_oracle_gaussian_w2(int dim, double var1, double var2,
                                    double* out) {
  if (out == nullptr) return fail("pdot_oracle_gaussian_w2: out is NULL");
  try {
    *out = pdot::gaussian_w2_value(dim, var1, var2);
    return PDOT_OK;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

pdot_status pdot_oracle_lp(const char* cost, const char* mu1, const char* mu2,
                           int n_atoms, int mot, const char* method,
                           double* out) {
  if (cost == nullptr || mu1 == nullptr || mu2 == nullptr ||
      method == nullptr || out == nullptr)
    return fail("pdot_oracle_lp: NULL argument");
  try {
    const pdot::LpInstance inst = pdot::make_lp_instance(
        pdot::parse_measure(mu1), pdot::parse_measure(mu2),
        pdot::parse_cost(cost), n_atoms, mot != 0);
    const std::string m(method);
    pdot::LpMethod lm;
    if (m == "dense_simplex") {
      lm = pdot::LpMethod::dense_simplex;
    } else if (m == "cutting_plane") {
      lm = pdot::LpMethod::cutting_plane;
    } else {
      return fail("pdot_oracle_lp: unknown method");
    }
    *out = pdot::solve_lp(inst, lm).value;
    return PDOT_OK;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

double pdot_report_value(const pdot_report* r) {
  return r == nullptr ? 0.0 : r->rep.value;
}

int pdot_report_converged(const pdot_report* r) {
  return (r != nullptr && r->rep.converged) ? 1 : 0;
}

int64_t pdot_report_steps(const pdot_report* r) {
  return r == nullptr ? 0 : r->rep.steps_run;
}

int64_t pdot_report_trace_size(const pdot_report* r) {
  return r == nullptr ? 0 : static_cast<int64_t>(r->rep.trace.size());
}

pdot_status pdot_report_trace_entry(const pdot_report* r, int64_t idx,
                                    int64_t* step, double* objective) {
  if (r == nullptr || idx < 0 ||
      idx >= static_cast<int64_t>(r->rep.trace.size()))
    return fail("pdot_report_trace_entry: index out of range");
  const auto& e = r->rep.trace[static_cast<std::size_t>(idx)];
  if (step != nullptr) *step = e.step;
  if (objective != nullptr) *objective = e.objective;
  return PDOT_OK;
}

int64_t pdot_report_diagnostic_count(const pdot_report* r) {
  return r == nullptr ? 0 : static_cast<int64_t>(r->diag_names.size());
}

const char* pdot_report_diagnostic_name(const pdot_report* r, int64_t idx) {
  if (r == nullptr || idx < 0 ||
      idx >= static_cast<int64_t>(r->diag_names.size()))
    return nullptr;
  return r->diag_names[static_cast<std::size_t>(idx)].c_str();
}

double pdot_report_diagnostic_value(const pdot_report* r, int64_t idx) {
  if (r == nullptr || idx < 0 ||
      idx >= static_cast<int64_t>(r->diag_values.size()))
    return 0.0;
  return r->diag_values[static_cast<std::size_t>(idx)];
}

int64_t pdot_report_warning_count(const pdot_report* r) {
  return r == nullptr ? 0 : static_cast<int64_t>(r->rep.warnings.size());
}

const char* pdot_report_warning(const pdot_report* r, int64_t idx) {
  if (r == nullptr || idx < 0 ||
      idx >= static_cast<int64_t>(r->rep.warnings.size()))
    return nullptr;
  return r->rep.warnings[static_cast<std::size_t>(idx)].c_str();
}

void pdot_report_free(pdot_report* r) { delete r; }

}  // extern "C"
