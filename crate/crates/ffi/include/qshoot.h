#ifndef QSHOOT_H
#define QSHOOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. The numeric values match the command-line exit codes
 * where the two overlap.
 */
typedef enum qs_status {
  QS_STATUS_OK = 0,
  QS_STATUS_INVALID_ARGUMENT = 1,
  QS_STATUS_NO_EIGENVALUE = 2,
  QS_STATUS_PLUGIN = 3,
  QS_STATUS_NUMERICAL = 4,
  QS_STATUS_NULL_POINTER = 5,
  QS_STATUS_BUFFER_TOO_SMALL = 6,
  QS_STATUS_PANIC = 7,
} qs_status;

/**
 * A single-channel radial problem.
 */
typedef struct qs_problem qs_problem;

/**
 * An eigenvalue with its wavefunction, one column per channel.
 */
typedef struct qs_solution qs_solution;

/**
 * Energy scan and bisection settings.
 */
typedef struct qs_config {
  double e_min;
  double e_max;
  double scan_step;
  double bisect_tol;
  size_t max_bisect;
} qs_config;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default scan settings over `[e_min, e_max]`.
 */
struct qs_config qs_config_default(double e_min, double e_max);

/**
 * Message for the most recent failure on this thread, or null after a
 * successful call. Valid until the next call on the same thread.
 */
const char *qs_last_error(void);

/**
 * Cornell potential `a/r + k r` with the default mesh.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum qs_status qs_problem_new_cornell(double a,
                                      double k,
                                      uint32_t l,
                                      double mass,
                                      struct qs_problem **out);

/**
 * Power law `coefficient · r^exponent` with the default mesh.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum qs_status qs_problem_new_power(double coefficient,
                                    double exponent,
                                    uint32_t l,
                                    double mass,
                                    struct qs_problem **out);

/**
 * Potential supplied by a plugin library described by `manifest`.
 * `library` and `function` may be null when the manifest names the library
 * and declares exactly one function.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be valid.
 */
enum qs_status qs_problem_new_plugin(const char *library,
                                     const char *manifest,
                                     const char *function,
                                     uint32_t l,
                                     double mass,
                                     struct qs_problem **out);

/**
 * Replaces the mesh of `problem`.
 *
 * # Safety
 * `problem` must be a live handle from a `qs_problem_new_*` call.
 */
enum qs_status qs_problem_set_mesh(struct qs_problem *problem,
                                   double r_min,
                                   double r_max,
                                   size_t points);

/**
 * Resets the mesh of `problem` to the default for its potential.
 *
 * # Safety
 * `problem` must be a live handle.
 */
enum qs_status qs_problem_use_default_mesh(struct qs_problem *problem);

/**
 * # Safety
 * `problem` must be null or a live handle; it is invalid afterwards.
 */
void qs_problem_free(struct qs_problem *problem);

/**
 * Bound state with `n` nodes.
 *
 * # Safety
 * `problem` and `config` must be valid; `out` must be writable.
 */
enum qs_status qs_solve(const struct qs_problem *problem,
                        const struct qs_config *config,
                        size_t n,
                        struct qs_solution **out);

/**
 * Bound state `n` of the two-channel logarithmic hybrid potential on the
 * mesh `(r_min, r_max, points)`.
 *
 * # Safety
 * `config` must be valid; `out` must be writable.
 */
enum qs_status qs_solve_hybrid_log(double a0,
                                   double b0,
                                   double a1,
                                   double b1,
                                   uint32_t l,
                                   double mass,
                                   double r_min,
                                   double r_max,
                                   size_t points,
                                   const struct qs_config *config,
                                   size_t n,
                                   struct qs_solution **out);

/**
 * Eigenvalue, or NaN for a null handle.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
double qs_solution_energy(const struct qs_solution *solution);

/**
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t qs_solution_nodes(const struct qs_solution *solution);

/**
 * Number of mesh points, or 0 for a null handle.
 *
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t qs_solution_len(const struct qs_solution *solution);

/**
 * # Safety
 * `solution` must be null or a live handle.
 */
size_t qs_solution_channels(const struct qs_solution *solution);

/**
 * Copies the mesh radii into `buf`, which must hold `qs_solution_len`
 * values.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum qs_status qs_solution_radii(const struct qs_solution *solution, double *buf, size_t len);

/**
 * Copies channel `channel` of the normalized wavefunction into `buf`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum qs_status qs_solution_values(const struct qs_solution *solution,
                                  size_t channel,
                                  double *buf,
                                  size_t len);

/**
 * Copies the channel mixing vector, `qs_solution_channels` values.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum qs_status qs_solution_mixing(const struct qs_solution *solution, double *buf, size_t len);

/**
 * # Safety
 * `solution` must be null or a live handle; it is invalid afterwards.
 */
void qs_solution_free(struct qs_solution *solution);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSHOOT_H */
