#ifndef RHEC_RHEC_H
#define RHEC_RHEC_H

/*
 * C interface of the receding-horizon estimation and control stack.
 *
 * All objects are opaque handles created by *_new / *_load / rhec_run_scenario
 * and released by the matching *_free. Functions return an rhec_status; on
 * failure rhec_last_error() describes the problem (thread-local).
 *
 * String outputs follow one convention: `needed` receives the full length
 * including the terminating NUL, and at most `cap` bytes are written (always
 * NUL-terminated when cap > 0).
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(RHEC_BUILDING_LIBRARY)
#    define RHEC_API __declspec(dllexport)
#  else
#    define RHEC_API __declspec(dllimport)
#  endif
#else
#  define RHEC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum rhec_status {
  RHEC_OK = 0,
  RHEC_ERR_INVALID_ARGUMENT = 1,
  RHEC_ERR_CONFIG = 2,
  RHEC_ERR_NUMERICAL = 3,
  RHEC_ERR_ACCEPTANCE = 4,
  RHEC_ERR_IO = 5,
  RHEC_ERR_INTERNAL = 6
} rhec_status;

typedef struct rhec_config rhec_config;
typedef struct rhec_run rhec_run;
typedef struct rhec_comparison rhec_comparison;

typedef struct rhec_summary {
  double mean_error;          /* post-transient mean Euclidean error [m] */
  double max_error;           /* [m] */
  int violations;             /* straight-segment samples above the limit */
  double kkt_ctl_median_first;
  double kkt_ctl_median_last;
  double kkt_est_mean;
  double max_abs_omega;       /* [rad/s] */
  double min_arrival_margin;  /* min eigenvalue of W^-1 - H_N; NaN for the EKF */
  double avg_step_us;
  double max_step_us;
  size_t rows;
} rhec_summary;

RHEC_API const char* rhec_version(void);
RHEC_API const char* rhec_last_error(void);
RHEC_API const char* rhec_status_string(rhec_status status);

/* Configuration */
RHEC_API rhec_status rhec_config_new(rhec_config** out);
RHEC_API rhec_status rhec_config_load(const char* path, rhec_config** out);
RHEC_API rhec_status rhec_config_parse(const char* text, rhec_config** out);
RHEC_API rhec_status rhec_config_clone(const rhec_config* cfg, rhec_config** out);
RHEC_API rhec_status rhec_config_set(rhec_config* cfg, const char* key, const char* value);
RHEC_API rhec_status rhec_config_validate(const rhec_config* cfg);
RHEC_API rhec_status rhec_config_hash(const rhec_config* cfg, uint64_t* out);
RHEC_API rhec_status rhec_config_canonical(const rhec_config* cfg, char* buf, size_t cap, size_t* needed);
RHEC_API void rhec_config_free(rhec_config* cfg);

/* Closed-loop runs */
RHEC_API rhec_status rhec_run_scenario(const rhec_config* cfg, rhec_run** out);
RHEC_API rhec_status rhec_run_summary(const rhec_run* run, rhec_summary* out);
RHEC_API rhec_status rhec_run_rows(const rhec_run* run, size_t* out);
/* Copies one CSV column (by header name) into `out`, which must hold rhec_run_rows() values. */
RHEC_API rhec_status rhec_run_column(const rhec_run* run, const char* name, double* out, size_t cap);
RHEC_API rhec_status rhec_run_write_csv(const rhec_run* run, const char* path);
RHEC_API rhec_status rhec_run_write_meta(const rhec_run* run, const char* path);
RHEC_API rhec_status rhec_run_timing_table(const rhec_run* run, char* buf, size_t cap, size_t* needed);
RHEC_API void rhec_run_free(rhec_run* run);

/* Paired multi-seed comparison; seeds first_seed .. first_seed + seeds - 1. */
RHEC_API rhec_status rhec_compare(const rhec_config* const* configs, const char* const* labels, size_t count,
                                  int seeds, uint64_t first_seed, rhec_comparison** out);
RHEC_API rhec_status rhec_comparison_report(const rhec_comparison* cmp, char* buf, size_t cap, size_t* needed);
RHEC_API rhec_status rhec_comparison_breached(const rhec_comparison* cmp, int* out);
RHEC_API void rhec_comparison_free(rhec_comparison* cmp);

/* Oracle self-checks; `failures` receives the number of failed checks. */
RHEC_API rhec_status rhec_selftest(char* buf, size_t cap, size_t* needed, int* failures);

/* Numerical helpers */
RHEC_API rhec_status rhec_integrate_step(const double state[3], double omega, const double params[3], double dt,
                                         double next[3]);
/* Box QP min 0.5 z'Hz + g'z s.t. lb <= z <= ub; H is n x n, row-major. */
RHEC_API rhec_status rhec_solve_box_qp(size_t n, const double* H, const double* g, const double* lb,
                                       const double* ub, double* z);

#ifdef __cplusplus
}
#endif

#endif /* RHEC_RHEC_H */
