#ifndef KMSERIES_H
#define KMSERIES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the first four agree with the CLI exit codes.
typedef enum KmStatus {
  KM_STATUS_OK = 0,
  KM_STATUS_CHECK_FAILED = 1,
  KM_STATUS_INVALID_INPUT = 2,
  KM_STATUS_BUDGET = 3,
  KM_STATUS_NULL_POINTER = 4,
  KM_STATUS_PANIC = 5,
} KmStatus;

// Opaque parsed job.
typedef struct KmJob KmJob;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *km_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *km_last_error(void);

// Parses a JSON job. On success `*out` owns a new job.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum KmStatus km_job_from_json(const char *json, struct KmJob **out);

// Releases a job. NULL is ignored.
//
// # Safety
// `job` must come from [`km_job_from_json`] and not be freed twice.
void km_job_free(struct KmJob *job);

// Dimension of the quadratic space and number of indefinite places.
//
// # Safety
// `job` must be a live job; `dim` and `e` valid pointers.
enum KmStatus km_job_shape(const struct KmJob *job, size_t *dim, size_t *e);

// `R(x, tau)` at `place` for the job's period point and a real vector `x`
// of length `len` in the embedded coordinates.
//
// # Safety
// `job` must be a live job, `x` must point to `len` doubles, `out` valid.
enum KmStatus km_majorant_r(const struct KmJob *job,
                            size_t place,
                            const double *x,
                            size_t len,
                            double *out);

// `f(t) = E_1(t)` for `t > 0`.
//
// # Safety
// `out` must be a valid pointer.
enum KmStatus km_exp_integral_f(double t, double *out);

// Theta coefficients as CSV, the same text as `kmseries theta`.
//
// # Safety
// `job` must be a live job and `out` a valid pointer; free `*out` with
// [`km_string_free`].
enum KmStatus km_theta_csv(const struct KmJob *job, double radius, double epsilon, char **out);

// Runs the check suite and writes its JSON report to `*out`. Returns
// `CheckFailed` (with the report still written) when a check fails.
//
// # Safety
// As for [`km_theta_csv`].
enum KmStatus km_check_json(const struct KmJob *job, uint64_t seed, char **out);

// Releases a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void km_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KMSERIES_H */
