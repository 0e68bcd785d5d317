#ifndef LIENAV_H
#define LIENAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LienavStatus {
  LIENAV_STATUS_OK = 0,
  LIENAV_STATUS_NULL_POINTER = 1,
  LIENAV_STATUS_INVALID_ARGUMENT = 2,
  LIENAV_STATUS_DIMENSION_MISMATCH = 3,
  LIENAV_STATUS_SCHEMA = 4,
  LIENAV_STATUS_INFEASIBLE = 5,
  LIENAV_STATUS_RANK_DEFICIENT = 6,
  LIENAV_STATUS_BOUNDARY_SINGULARITY = 7,
  LIENAV_STATUS_COLLISION = 8,
  LIENAV_STATUS_INVALID_FREQUENCIES = 9,
  LIENAV_STATUS_UNKNOWN_BUILTIN = 10,
  LIENAV_STATUS_BUFFER_TOO_SMALL = 11,
  LIENAV_STATUS_IO = 12,
  LIENAV_STATUS_PANIC = 13,
} LienavStatus;

typedef enum LienavTermination {
  LIENAV_TERMINATION_CONVERGED = 0,
  LIENAV_TERMINATION_HORIZON_EXHAUSTED = 1,
  LIENAV_TERMINATION_COLLISION = 2,
  LIENAV_TERMINATION_RANK_FAILURE = 3,
} LienavTermination;

// Opaque scenario handle.
typedef struct LienavScenario LienavScenario;

// Opaque trajectory handle.
typedef struct LienavTrajectory LienavTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *lienav_last_error(void);

// Creates a builtin scenario (`"rigid-body"` or `"rolling-disc"`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum LienavStatus lienav_scenario_builtin(const char *name, struct LienavScenario **out);

// Parses a scenario TOML document.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum LienavStatus lienav_scenario_from_toml(const char *text, struct LienavScenario **out);

// Serializes a scenario to TOML. Release the string with [`lienav_string_free`].
//
// # Safety
// `sc` must come from this library and `out` must be a valid pointer.
enum LienavStatus lienav_scenario_to_toml(const struct LienavScenario *sc, char **out);

// # Safety
// `s` must be null or a string returned by this library, freed at most once.
void lienav_string_free(char *s);

// # Safety
// `sc` must be null or a handle from this library, freed at most once.
void lienav_scenario_free(struct LienavScenario *sc);

// State dimension `n`, or 0 for a null handle.
//
// # Safety
// `sc` must be null or a live handle.
uintptr_t lienav_scenario_state_dim(const struct LienavScenario *sc);

// Input dimension `m`, or 0 for a null handle.
//
// # Safety
// `sc` must be null or a live handle.
uintptr_t lienav_scenario_input_dim(const struct LienavScenario *sc);

// Overrides epoch length, gain and horizon. Non-positive values are rejected.
//
// # Safety
// `sc` must be a live handle.
enum LienavStatus lienav_scenario_set_params(struct LienavScenario *sc,
                                             double epsilon,
                                             double gamma,
                                             double t_max);

// Navigation function value at `x` (length `n`).
//
// # Safety
// `x` must point to `n` doubles and `out` to one.
enum LienavStatus lienav_potential_value(const struct LienavScenario *sc,
                                         const double *x,
                                         uintptr_t n,
                                         double *out);

// `∇P(x)` into `out` (capacity `out_len ≥ n`).
//
// # Safety
// `x` must point to `n` doubles and `out` to `out_len` doubles.
enum LienavStatus lienav_potential_gradient(const struct LienavScenario *sc,
                                            const double *x,
                                            uintptr_t n,
                                            double *out,
                                            uintptr_t out_len);

// Coefficients `a(x)` solving `F(x)·a = −γ∇P(x)`, in basis order (`n` values).
//
// # Safety
// `x` must point to `n` doubles and `out` to `out_len` doubles.
enum LienavStatus lienav_coefficients(const struct LienavScenario *sc,
                                      const double *x,
                                      uintptr_t n,
                                      double *out,
                                      uintptr_t out_len);

// Control `u(t)` for the epoch whose held state is `x_hold` (`m` values).
//
// # Safety
// `x_hold` must point to `n` doubles and `out` to `out_len` doubles.
enum LienavStatus lienav_control(const struct LienavScenario *sc,
                                 double t,
                                 const double *x_hold,
                                 uintptr_t n,
                                 double *out,
                                 uintptr_t out_len);

// Runs the closed loop. Collisions and rank failures are reported through
// [`lienav_trajectory_termination`], not as errors.
//
// # Safety
// `sc` must be a live handle and `out` a valid pointer.
enum LienavStatus lienav_simulate(const struct LienavScenario *sc, struct LienavTrajectory **out);

// # Safety
// `t` must be null or a handle from this library, freed at most once.
void lienav_trajectory_free(struct LienavTrajectory *t);

// Number of recorded samples, or 0 for a null handle.
//
// # Safety
// `t` must be null or a live handle.
uintptr_t lienav_trajectory_len(const struct LienavTrajectory *t);

// Number of epochs executed, or 0 for a null handle.
//
// # Safety
// `t` must be null or a live handle.
uintptr_t lienav_trajectory_epochs(const struct LienavTrajectory *t);

// # Safety
// `t` must be a live handle and `out` a valid pointer.
enum LienavStatus lienav_trajectory_termination(const struct LienavTrajectory *t,
                                                enum LienavTermination *out);

// Minimum free-space margin over the fine grid and final distance to the target.
//
// # Safety
// `t` must be a live handle; the out pointers must be valid.
enum LienavStatus lienav_trajectory_summary(const struct LienavTrajectory *t,
                                            double *min_margin,
                                            double *final_distance);

// Sample times (`len` values).
//
// # Safety
// `out` must point to `out_len` doubles.
enum LienavStatus lienav_trajectory_times(const struct LienavTrajectory *t,
                                          double *out,
                                          uintptr_t out_len);

// States, row-major (`len × n` values).
//
// # Safety
// `out` must point to `out_len` doubles.
enum LienavStatus lienav_trajectory_states(const struct LienavTrajectory *t,
                                           double *out,
                                           uintptr_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIENAV_H */
