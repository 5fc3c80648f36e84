#ifndef SHOTNOISE_H
#define SHOTNOISE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SHN_ABI_VERSION 1

#define SHN_REJECT_NOISE_FIT_R2 1

#define SHN_REJECT_RESIDUAL_BUDGET (1 << 1)

#define SHN_REJECT_ATTEN_FIT_R2 (1 << 2)

#define SHN_REJECT_FIT_DEGENERATE (1 << 3)

#define SHN_REJECT_SHOT_NONPOSITIVE (1 << 4)

typedef enum ShnStatus {
  SHN_STATUS_OK = 0,
  SHN_STATUS_NULL_POINTER = 1,
  SHN_STATUS_INVALID_ARGUMENT = 2,
  SHN_STATUS_PARSE = 3,
  SHN_STATUS_VALIDATION = 4,
  SHN_STATUS_NUMERIC = 5,
  SHN_STATUS_NOT_SIMULATED = 6,
  SHN_STATUS_BUFFER_TOO_SMALL = 7,
  SHN_STATUS_PANIC = 8,
} ShnStatus;

/**
 * Simulation run: configuration plus, after [`shn_run_simulate`], its
 * analysis.
 */
typedef struct ShnRun ShnRun;

typedef struct ShnQuadratureVerdict {
  bool accepted;
  double r2_noise_signal;
  double r2_signal_atten;
  double max_residual_snu;
  double shot_noise_estimate_v2;
  double excess_noise_slope;
  /**
   * `SHN_REJECT_*` bits.
   */
  uint32_t reject_mask;
} ShnQuadratureVerdict;

typedef struct ShnBlockVerdict {
  bool accepted;
  struct ShnQuadratureVerdict x;
  struct ShnQuadratureVerdict p;
  double shot_noise_relative_discrepancy;
} ShnBlockVerdict;

typedef struct ShnFit {
  double slope;
  double intercept;
  double r_squared;
  double max_abs_residual;
} ShnFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

uint32_t shn_abi_version(void);

/**
 * Length in bytes, without terminator, of this thread's last error message.
 */
size_t shn_last_error_length(void);

/**
 * Copies this thread's last error message into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes; `needed` may be null.
 */
enum ShnStatus shn_last_error_message(char *buf, size_t len, size_t *needed);

/**
 * Creates a run from a TOML configuration string.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum ShnStatus shn_run_new(const char *toml, struct ShnRun **out);

/**
 * Creates a run with the honest 16-level default configuration.
 *
 * # Safety
 * `out` must be writable.
 */
enum ShnStatus shn_run_new_default(struct ShnRun **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from `shn_run_new*` and not be used afterwards.
 */
void shn_run_free(struct ShnRun *run);

/**
 * Replaces the seed and discards any previous result.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum ShnStatus shn_run_set_seed(struct ShnRun *run, uint64_t seed);

/**
 * Replaces the pulses per group and discards any previous result.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum ShnStatus shn_run_set_n_per_group(struct ShnRun *run, uint64_t n);

/**
 * Simulates the block and applies the gate.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum ShnStatus shn_run_simulate(struct ShnRun *run);

/**
 * Gate verdict of the last simulation.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ShnStatus shn_run_verdict(const struct ShnRun *run, struct ShnBlockVerdict *out);

/**
 * Analysis report of the last simulation as JSON. Call with a null `buf`
 * to learn the size through `needed`.
 *
 * # Safety
 * `run` must be a live handle; `buf` must point to `len` writable bytes.
 */
enum ShnStatus shn_run_report_json(const struct ShnRun *run, char *buf, size_t len, size_t *needed);

/**
 * Least-squares line through `n` points.
 *
 * # Safety
 * `xs` and `ys` must each point to `n` doubles; `out` must be writable.
 */
enum ShnStatus shn_fit_affine(const double *xs, const double *ys, size_t n, struct ShnFit *out);

/**
 * `sqrt(2 / n)`.
 */
double shn_estimator_sigma(uint64_t n);

double shn_refer_excess_noise_to_alice(double xi_bob, double length_km, double eta);

double shn_conservative_xi_bob(double measured_slope, double slope_margin, double signal_var_bob);

double shn_modulation_for_snr(double snr_target, double t_channel, double eta, double v_el);

/**
 * Collective key rate in bits per symbol.
 *
 * # Safety
 * `out` must be writable.
 */
enum ShnStatus shn_collective_key_rate(double v_a,
                                       double t_channel,
                                       double eta,
                                       double v_el,
                                       double xi_alice,
                                       double beta,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHOTNOISE_H */
