/* C interface to the pdot transport solver suite.
 *
 * All functions return a pdot_status; outputs are written through pointers.
 * Reports are opaque handles that must be released with pdot_report_free.
 * On any failure, pdot_last_error() returns a thread-local message. */

#ifndef PDOT_H
#define PDOT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pdot_status {
  PDOT_OK = 0,
  PDOT_ERR = 1,            /* configuration, parameter or IO error */
  PDOT_NOT_CONVERGED = 2,  /* run finished but was flagged non-converged */
} pdot_status;

typedef struct pdot_report pdot_report;

const char* pdot_version(void);

/* Message describing the most recent failure on this thread. */
const char* pdot_last_error(void);

/* Runs the experiment described by a config file. out_dir overrides the
 * config's output directory when non-NULL; seed_override and steps_override
 * apply when >= 0. On PDOT_OK or PDOT_NOT_CONVERGED, *out receives a report
 * handle (may be NULL if the caller passes NULL). */
pdot_status pdot_run(const char* config_path, const char* out_dir,
                     int64_t seed_override, int64_t steps_override,
                     pdot_report** out);

/* Runs a verification suite ("figures", "properties" or "all"), resolving
 * bundled configs in configs_dir and writing run artifacts under work_dir.
 * progress (optional) receives one formatted line per finished item.
 * Returns PDOT_OK when every item passed, PDOT_NOT_CONVERGED otherwise. */
pdot_status pdot_check(const char* suite, const char* configs_dir,
                       const char* work_dir,
                       void (*progress)(const char* line, void* ctx),
                       void* ctx);

/* Closed-form / reference oracles. Measures are spec strings in the config
 * grammar, e.g. "lognormal meanlog=-0.02 varlog=0.04". */
pdot_status pdot_oracle_frechet_hoeffding(const char* cost, const char* mu1,
                                          const char* mu2, int n_quad,
                                          double* out);
pdot_status pdot_oracle_gaussian_w2(int dim, double var1, double var2,
                                    double* out);
/* method: "dense_simplex" or "cutting_plane"; mot nonzero adds the
 * martingale constraints. */
pdot_status pdot_oracle_lp(const char* cost, const char* mu1, const char* mu2,
                           int n_atoms, int mot, const char* method,
                           double* out);

/* Report accessors. */
double pdot_report_value(const pdot_report* r);
int pdot_report_converged(const pdot_report* r);
int64_t pdot_report_steps(const pdot_report* r);
int64_t pdot_report_trace_size(const pdot_report* r);
pdot_status pdot_report_trace_entry(const pdot_report* r, int64_t idx,
                                    int64_t* step, double* objective);
int64_t pdot_report_diagnostic_count(const pdot_report* r);
const char* pdot_report_diagnostic_name(const pdot_report* r, int64_t idx);
double pdot_report_diagnostic_value(const pdot_report* r, int64_t idx);
int64_t pdot_report_warning_count(const pdot_report* r);
const char* pdot_report_warning(const pdot_report* r, int64_t idx);
void pdot_report_free(pdot_report* r);

#ifdef __cplusplus
}
#endif

#endif /* PDOT_H */
