#ifndef MULTILRSGA_H
#define MULTILRSGA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MlStatus {
  ML_STATUS_OK = 0,
  ML_STATUS_NULL_POINTER = 1,
  ML_STATUS_INVALID_ARGUMENT = 2,
  ML_STATUS_UNKNOWN_GAME = 3,
  ML_STATUS_SHAPE_MISMATCH = 4,
  ML_STATUS_NUMERICAL = 5,
  ML_STATUS_NO_CONVERGENCE = 6,
  ML_STATUS_PANIC = 7,
} MlStatus;

typedef enum MlSecantInit {
  ML_SECANT_INIT_ZERO = 0,
  ML_SECANT_INIT_FINITE_DIFFERENCE = 1,
  ML_SECANT_INIT_ANALYTIC = 2,
  ML_SECANT_INIT_RANDOM = 3,
} MlSecantInit;

typedef enum MlSolverKind {
  ML_SOLVER_KIND_MULTI_LRSGA = 0,
  ML_SOLVER_KIND_GRADIENT_DESCENT = 1,
  ML_SOLVER_KIND_EXACT_SGA = 2,
} MlSolverKind;

typedef enum MlTraceStatus {
  ML_TRACE_STATUS_CONVERGED = 0,
  ML_TRACE_STATUS_MAX_ITER = 1,
  ML_TRACE_STATUS_DIVERGED = 2,
} MlTraceStatus;

// Opaque game handle.
typedef struct MlGame MlGame;

// Opaque solver trace handle.
typedef struct MlTrace MlTrace;

// Solver settings. Obtain defaults from [`ml_solver_config_default`].
typedef struct MlSolverConfig {
  double eta;
  double tau;
  size_t max_iter;
  double residual_tol;
  enum MlSecantInit secant_init;
  uint64_t secant_seed;
  double secant_scale;
  size_t record_every;
} MlSolverConfig;

typedef struct MlFrozenMap {
  double jacobian_norm;
  double spectral_radius;
  double lf_estimate;
  double step_condition_lhs;
  bool contractive;
  bool step_condition_holds;
} MlFrozenMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *ml_last_error_message(void);

// Creates a built-in game by name: `"paper3"` or `"bilinear"` (which uses
// `coupling`). Use [`ml_game_random_quadratic`] for random quadratic games.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum MlStatus ml_game_builtin(const char *name, double coupling, struct MlGame **out);

// Seeded random quadratic game with the given block sizes.
//
// # Safety
// `dims` must point to `players` values and `out` must be valid.
enum MlStatus ml_game_random_quadratic(const size_t *dims,
                                       size_t players,
                                       uint64_t seed,
                                       double margin,
                                       struct MlGame **out);

// Releases a game. Null is ignored.
//
// # Safety
// `game` must come from an `ml_game_*` constructor and not be used again.
void ml_game_free(struct MlGame *game);

// Total number of coordinates `d`.
//
// # Safety
// `game` must be a live handle; `out` must be valid.
enum MlStatus ml_game_dim(const struct MlGame *game, size_t *out);

// Number of players.
//
// # Safety
// `game` must be a live handle; `out` must be valid.
enum MlStatus ml_game_players(const struct MlGame *game, size_t *out);

// Copies the game's default start point into `out[0..len]`.
//
// # Safety
// `game` must be a live handle; `out` must hold `len` doubles.
enum MlStatus ml_game_default_start(const struct MlGame *game, double *out, size_t len);

// Game gradient `F(w)`.
//
// # Safety
// `w` and `out` must each hold `len` doubles, with `len` the game dimension.
enum MlStatus ml_game_gradient(const struct MlGame *game, const double *w, size_t len, double *out);

// Default settings for a solver: `eta = 0.001`, `tau = 1` (0 for gradient
// descent), 50000 iterations, tolerance `1e-6`, random secant init.
struct MlSolverConfig ml_solver_config_default(enum MlSolverKind kind);

// Runs a solver. `w0` may be null to use the game's default start.
// Divergence is not an error; query [`ml_trace_status`].
//
// # Safety
// `game` must be a live handle, `config` and `out` valid pointers, and `w0`
// null or pointing to `len` doubles.
enum MlStatus ml_solve(const struct MlGame *game,
                       enum MlSolverKind kind,
                       const struct MlSolverConfig *config,
                       const double *w0,
                       size_t len,
                       struct MlTrace **out);

// Releases a trace. Null is ignored.
//
// # Safety
// `trace` must come from [`ml_solve`] and not be used again.
void ml_trace_free(struct MlTrace *trace);

// # Safety
// `trace` must be a live handle; `out` must be valid.
enum MlStatus ml_trace_status(const struct MlTrace *trace, enum MlTraceStatus *out);

// Number of steps taken.
//
// # Safety
// `trace` must be a live handle; `out` must be valid.
enum MlStatus ml_trace_iterations(const struct MlTrace *trace, size_t *out);

// Number of recorded iterates (the length of the residual series).
//
// # Safety
// `trace` must be a live handle; `out` must be valid.
enum MlStatus ml_trace_len(const struct MlTrace *trace, size_t *out);

// Copies the recorded residuals into `out[0..len]`; `len` must equal
// [`ml_trace_len`].
//
// # Safety
// `trace` must be a live handle; `out` must hold `len` doubles.
enum MlStatus ml_trace_residuals(const struct MlTrace *trace, double *out, size_t len);

// Copies the final iterate into `out[0..len]`; `len` is the game dimension.
//
// # Safety
// `trace` must be a live handle; `out` must hold `len` doubles.
enum MlStatus ml_trace_final_point(const struct MlTrace *trace, double *out, size_t len);

// Frozen-map contraction diagnostics at the game's known equilibrium, with
// `L_F` sampled from 100 seeded points in the unit ball.
//
// # Safety
// `game` must be a live handle; `out` must be valid.
enum MlStatus ml_frozen_map(const struct MlGame *game,
                            double eta,
                            double tau,
                            struct MlFrozenMap *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTILRSGA_H */
