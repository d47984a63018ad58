/* C interface of the federated game simulator. Generated by cbindgen; do not edit. */

#ifndef FEDGAME_H
#define FEDGAME_H

/* This file is auto-generated from the fedgame-ffi crate. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible API call.
typedef enum FgStatus {
  // The call succeeded.
  FG_STATUS_OK = 0,
  // Malformed config file or invalid argument values.
  FG_STATUS_CONFIG = 1,
  // Corpus or dataset files missing, unreadable, or corrupt.
  FG_STATUS_DATA = 2,
  // The run required convergence but hit its round limit.
  FG_STATUS_DID_NOT_CONVERGE = 3,
  // A required pointer argument was null.
  FG_STATUS_NULL_ARGUMENT = 4,
  // An index argument was out of range.
  FG_STATUS_OUT_OF_RANGE = 5,
  // An internal invariant failed (a bug); details via fg_last_error.
  FG_STATUS_PANIC = 6,
} FgStatus;

// A parsed run config plus its loaded base corpus. Reusable across seeds.
typedef struct FgExperiment FgExperiment;

// One finished training run.
typedef struct FgRun FgRun;

// Shape summary of one seed's federated dataset.
typedef struct FgDatasetStats {
  uint32_t clients;
  uint64_t train_rows;
  uint64_t test_rows;
  uint64_t input_dim;
  uint32_t classes;
} FgDatasetStats;

// One evaluated round of a finished run.
typedef struct FgTraceRow {
  // 1-based round index.
  uint64_t round;
  // 0 = representation round, 1 = predictor round, 2 = baseline round.
  int32_t phase;
  // Pooled train accuracy of the evaluation ensemble.
  double train_acc;
  // Held-out test accuracy of the evaluation ensemble.
  double test_acc;
  // Cumulative server-orchestrated communication rounds.
  uint64_t comm_rounds;
  // Cumulative client predictor updates.
  uint64_t client_updates;
} FgTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the underlying library, as a static string.
const char *fg_version(void);

// Message for the most recent failure on this thread; empty after success.
// The pointer stays valid until the next API call on the same thread.
const char *fg_last_error(void);

// Release a string returned by an `fg_*` call (e.g. `fg_run_trace_csv`).
// Null is accepted and ignored.
//
// # Safety
// `s` must be null or a pointer previously returned by this library with
// ownership passed to the caller, not yet freed.
void fg_string_free(char *s);

// Parse the run config at `config_path` and load the base corpus from
// `data_dir` (synthesizing and caching it there if absent). `full_scale`
// zero runs at the reduced desk scale, nonzero at full scale. On success
// stores a new handle in `*out`; free it with `fg_experiment_free`.
//
// # Safety
// `config_path` and `data_dir` must be NUL-terminated strings; `out` must
// be a valid pointer.
enum FgStatus fg_experiment_load(const char *config_path,
                                 const char *data_dir,
                                 int32_t full_scale,
                                 struct FgExperiment **out);

// Release an experiment handle. Null is accepted and ignored.
//
// # Safety
// `exp` must be null or an unfreed handle from `fg_experiment_load`.
void fg_experiment_free(struct FgExperiment *exp);

// Materialize the seed-specific federated dataset and report its shape.
//
// # Safety
// `exp` must be a live handle from `fg_experiment_load`; `out` must be a
// valid pointer.
enum FgStatus fg_experiment_dataset_stats(const struct FgExperiment *exp,
                                          uint64_t seed,
                                          struct FgDatasetStats *out);

// Run the experiment with `seed`: derive the per-seed dataset, train to
// termination, and store a result handle in `*out` (free it with
// `fg_run_free`).
//
// # Safety
// `exp` must be a live handle from `fg_experiment_load`; `out` must be a
// valid pointer.
enum FgStatus fg_experiment_run(const struct FgExperiment *exp, uint64_t seed, struct FgRun **out);

// Release a run handle. Null is accepted and ignored.
//
// # Safety
// `run` must be null or an unfreed handle from `fg_experiment_run`.
void fg_run_free(struct FgRun *run);

// Train accuracy of the final model state; NaN if `run` is null.
//
// # Safety
// `run` must be null or a live handle from `fg_experiment_run`.
double fg_run_terminal_train_acc(const struct FgRun *run);

// Test accuracy of the final model state; NaN if `run` is null.
//
// # Safety
// `run` must be null or a live handle from `fg_experiment_run`.
double fg_run_terminal_test_acc(const struct FgRun *run);

// Total server-orchestrated communication rounds; 0 if `run` is null.
//
// # Safety
// `run` must be null or a live handle from `fg_experiment_run`.
uint64_t fg_run_comm_rounds(const struct FgRun *run);

// Total client predictor updates; 0 if `run` is null.
//
// # Safety
// `run` must be null or a live handle from `fg_experiment_run`.
uint64_t fg_run_client_updates(const struct FgRun *run);

// 1 when the stop rule ended the run before the round limit, else 0.
//
// # Safety
// `run` must be null or a live handle from `fg_experiment_run`.
int32_t fg_run_terminated_early(const struct FgRun *run);

// First round where the stop rule fired, or -1 when it never did.
//
// # Safety
// `run` must be null or a live handle from `fg_experiment_run`.
int64_t fg_run_rounds_to_equilibrium(const struct FgRun *run);

// Number of evaluated rounds in the trace; 0 if `run` is null.
//
// # Safety
// `run` must be null or a live handle from `fg_experiment_run`.
size_t fg_run_trace_len(const struct FgRun *run);

// Copy trace entry `index` into `*out`.
//
// # Safety
// `run` must be a live handle from `fg_experiment_run`; `out` must be a
// valid pointer.
enum FgStatus fg_run_trace_row(const struct FgRun *run, size_t index, struct FgTraceRow *out);

// Render the run's trace as CSV (same format the CLI writes). The returned
// string is owned by the caller: release it with `fg_string_free`.
//
// # Safety
// `run` must be a live handle from `fg_experiment_run`; `out` must be a
// valid pointer.
enum FgStatus fg_run_trace_csv(const struct FgRun *run, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDGAME_H */
