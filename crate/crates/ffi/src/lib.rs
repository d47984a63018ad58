//! C ABI for the federated game simulator.
//!
//! The surface is handle-based: `fg_experiment_load` parses a run config and
//! loads (or synthesizes) the base corpus once, `fg_experiment_run` derives
//! the per-seed federated dataset and executes the full training run, and the
//! `FgRun` accessors expose terminal metrics plus the per-round trace. All
//! handles are opaque; free them with the matching `fg_*_free`.
//!
//! Conventions:
//! - Every fallible call returns an [`FgStatus`]; `FG_STATUS_OK` is zero.
//! - On failure, `fg_last_error()` returns a UTF-8 message that stays valid
//!   until the next API call on the same thread.
//! - Strings returned as `char*` (other than `fg_version`/`fg_last_error`)
//!   are owned by the caller and must be released with `fg_string_free`.
//! - All entry points catch panics and convert them to `FG_STATUS_PANIC`;
//!   unwinding never crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use fedgame::config::RunConfig;
use fedgame::data::synth::ensure_corpus;
use fedgame::data::{BaseCorpus, FederatedDataset, Scale};
use fedgame::game::{run_experiment, ExperimentResult};
use fedgame::metrics::Phase;
use fedgame::runner::trace_csv;
use fedgame::Error;

/// Result of every fallible API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FgStatus {
    /// The call succeeded.
    FgStatusOk = 0,
    /// Malformed config file or invalid argument values.
    FgStatusConfig = 1,
    /// Corpus or dataset files missing, unreadable, or corrupt.
    FgStatusData = 2,
    /// The run required convergence but hit its round limit.
    FgStatusDidNotConverge = 3,
    /// A required pointer argument was null.
    FgStatusNullArgument = 4,
    /// An index argument was out of range.
    FgStatusOutOfRange = 5,
    /// An internal invariant failed (a bug); details via fg_last_error.
    FgStatusPanic = 6,
}

/// One evaluated round of a finished run.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FgTraceRow {
    /// 1-based round index.
    pub round: u64,
    /// 0 = representation round, 1 = predictor round, 2 = baseline round.
    pub phase: i32,
    /// Pooled train accuracy of the evaluation ensemble.
    pub train_acc: f64,
    /// Held-out test accuracy of the evaluation ensemble.
    pub test_acc: f64,
    /// Cumulative server-orchestrated communication rounds.
    pub comm_rounds: u64,
    /// Cumulative client predictor updates.
    pub client_updates: u64,
}

/// Shape summary of one seed's federated dataset.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct FgDatasetStats {
    pub clients: u32,
    pub train_rows: u64,
    pub test_rows: u64,
    pub input_dim: u64,
    pub classes: u32,
}

/// A parsed run config plus its loaded base corpus. Reusable across seeds.
pub struct FgExperiment {
    config: RunConfig,
    corpus: BaseCorpus,
    scale: Scale,
}

/// One finished training run.
pub struct FgRun {
    result: ExperimentResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::default();
    });
}

fn status_of(err: &Error) -> FgStatus {
    match err {
        Error::Config { .. }
        | Error::ConfigGeneral(_)
        | Error::InvalidArgument(_)
        | Error::Shape(_)
        | Error::NonFinite(_) => FgStatus::FgStatusConfig,
        Error::Data { .. } | Error::DataGeneral(_) | Error::Io { .. } => FgStatus::FgStatusData,
        Error::DidNotConverge(_) => FgStatus::FgStatusDidNotConverge,
    }
}

/// Run `f` with panics converted to `FgStatusPanic` and the thread-local
/// error message kept in sync with the outcome.
fn guarded(f: impl FnOnce() -> Result<FgStatus, Error>) -> FgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            clear_last_error();
            status
        }
        Ok(Err(err)) => {
            set_last_error(&err.to_string());
            status_of(&err)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(&format!("internal panic: {msg}"));
            FgStatus::FgStatusPanic
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn cstr_arg(ptr: *const c_char, name: &str) -> Result<String, Error> {
    if ptr.is_null() {
        return Err(Error::InvalidArgument(format!("{name} must not be null")));
    }
    let s = unsafe { CStr::from_ptr(ptr) };
    s.to_str()
        .map(str::to_owned)
        .map_err(|_| Error::InvalidArgument(format!("{name} is not valid UTF-8")))
}

fn null_argument(name: &str) -> FgStatus {
    set_last_error(&format!("{name} must not be null"));
    FgStatus::FgStatusNullArgument
}

/// Version of the underlying library, as a static string.
#[no_mangle]
pub extern "C" fn fg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread; empty after success.
/// The pointer stays valid until the next API call on the same thread.
#[no_mangle]
pub extern "C" fn fg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by an `fg_*` call (e.g. `fg_run_trace_csv`).
/// Null is accepted and ignored.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library with
/// ownership passed to the caller, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Parse the run config at `config_path` and load the base corpus from
/// `data_dir` (synthesizing and caching it there if absent). `full_scale`
/// zero runs at the reduced desk scale, nonzero at full scale. On success
/// stores a new handle in `*out`; free it with `fg_experiment_free`.
///
/// # Safety
/// `config_path` and `data_dir` must be NUL-terminated strings; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fg_experiment_load(
    config_path: *const c_char,
    data_dir: *const c_char,
    full_scale: i32,
    out: *mut *mut FgExperiment,
) -> FgStatus {
    if out.is_null() {
        return null_argument("out");
    }
    if config_path.is_null() {
        return null_argument("config_path");
    }
    if data_dir.is_null() {
        return null_argument("data_dir");
    }
    guarded(|| {
        let config_path = unsafe { cstr_arg(config_path, "config_path") }?;
        let data_dir = unsafe { cstr_arg(data_dir, "data_dir") }?;
        let config = RunConfig::from_file(&config_path)?;
        let (corpus, _) = ensure_corpus(
            &PathBuf::from(data_dir),
            config.dataset.base,
            fedgame::runner::CORPUS_SEED,
        )?;
        let scale = if full_scale != 0 { Scale::Full } else { Scale::Desk };
        let handle = Box::new(FgExperiment { config, corpus, scale });
        unsafe { out.write(Box::into_raw(handle)) };
        Ok(FgStatus::FgStatusOk)
    })
}

/// Release an experiment handle. Null is accepted and ignored.
///
/// # Safety
/// `exp` must be null or an unfreed handle from `fg_experiment_load`.
#[no_mangle]
pub unsafe extern "C" fn fg_experiment_free(exp: *mut FgExperiment) {
    if !exp.is_null() {
        drop(unsafe { Box::from_raw(exp) });
    }
}

fn dataset_for_seed(exp: &FgExperiment, seed: u64) -> Result<FederatedDataset, Error> {
    Ok(fedgame::data::build_federated_dataset_stages(
        &exp.config.dataset,
        &exp.corpus,
        seed,
        exp.scale,
    )?
    .0)
}

/// Materialize the seed-specific federated dataset and report its shape.
///
/// # Safety
/// `exp` must be a live handle from `fg_experiment_load`; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fg_experiment_dataset_stats(
    exp: *const FgExperiment,
    seed: u64,
    out: *mut FgDatasetStats,
) -> FgStatus {
    if exp.is_null() {
        return null_argument("exp");
    }
    if out.is_null() {
        return null_argument("out");
    }
    guarded(|| {
        let exp = unsafe { &*exp };
        let data = dataset_for_seed(exp, seed)?;
        unsafe {
            out.write(FgDatasetStats {
                clients: data.n_clients() as u32,
                train_rows: data.total_train() as u64,
                test_rows: data.test.n() as u64,
                input_dim: data.test.dim() as u64,
                classes: data.classes as u32,
            });
        }
        Ok(FgStatus::FgStatusOk)
    })
}

/// Run the experiment with `seed`: derive the per-seed dataset, train to
/// termination, and store a result handle in `*out` (free it with
/// `fg_run_free`).
///
/// # Safety
/// `exp` must be a live handle from `fg_experiment_load`; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fg_experiment_run(
    exp: *const FgExperiment,
    seed: u64,
    out: *mut *mut FgRun,
) -> FgStatus {
    if exp.is_null() {
        return null_argument("exp");
    }
    if out.is_null() {
        return null_argument("out");
    }
    guarded(|| {
        let exp = unsafe { &*exp };
        let data = dataset_for_seed(exp, seed)?;
        let result = run_experiment(&exp.config.game, &data, seed)?;
        if exp.config.game.require_convergence && result.rounds_to_equilibrium.is_none() {
            return Err(fedgame::Error::DidNotConverge(format!("seed {seed}")));
        }
        unsafe { out.write(Box::into_raw(Box::new(FgRun { result }))) };
        Ok(FgStatus::FgStatusOk)
    })
}

/// Release a run handle. Null is accepted and ignored.
///
/// # Safety
/// `run` must be null or an unfreed handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_free(run: *mut FgRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// # Safety
/// Caller contract of the accessor functions: `run` must be a live handle.
unsafe fn run_ref<'a>(run: *const FgRun) -> Option<&'a FgRun> {
    if run.is_null() {
        None
    } else {
        Some(unsafe { &*run })
    }
}

/// Train accuracy of the final model state; NaN if `run` is null.
///
/// # Safety
/// `run` must be null or a live handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_terminal_train_acc(run: *const FgRun) -> f64 {
    unsafe { run_ref(run) }.map_or(f64::NAN, |r| r.result.terminal_train_acc)
}

/// Test accuracy of the final model state; NaN if `run` is null.
///
/// # Safety
/// `run` must be null or a live handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_terminal_test_acc(run: *const FgRun) -> f64 {
    unsafe { run_ref(run) }.map_or(f64::NAN, |r| r.result.terminal_test_acc)
}

/// Total server-orchestrated communication rounds; 0 if `run` is null.
///
/// # Safety
/// `run` must be null or a live handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_comm_rounds(run: *const FgRun) -> u64 {
    unsafe { run_ref(run) }.map_or(0, |r| r.result.comm_rounds)
}

/// Total client predictor updates; 0 if `run` is null.
///
/// # Safety
/// `run` must be null or a live handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_client_updates(run: *const FgRun) -> u64 {
    unsafe { run_ref(run) }.map_or(0, |r| r.result.client_updates)
}

/// 1 when the stop rule ended the run before the round limit, else 0.
///
/// # Safety
/// `run` must be null or a live handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_terminated_early(run: *const FgRun) -> i32 {
    unsafe { run_ref(run) }.map_or(0, |r| i32::from(r.result.terminated_early))
}

/// First round where the stop rule fired, or -1 when it never did.
///
/// # Safety
/// `run` must be null or a live handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_rounds_to_equilibrium(run: *const FgRun) -> i64 {
    unsafe { run_ref(run) }
        .and_then(|r| r.result.rounds_to_equilibrium)
        .map_or(-1, |r| r as i64)
}

/// Number of evaluated rounds in the trace; 0 if `run` is null.
///
/// # Safety
/// `run` must be null or a live handle from `fg_experiment_run`.
#[no_mangle]
pub unsafe extern "C" fn fg_run_trace_len(run: *const FgRun) -> usize {
    unsafe { run_ref(run) }.map_or(0, |r| r.result.trace.len())
}

/// Copy trace entry `index` into `*out`.
///
/// # Safety
/// `run` must be a live handle from `fg_experiment_run`; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fg_run_trace_row(
    run: *const FgRun,
    index: usize,
    out: *mut FgTraceRow,
) -> FgStatus {
    if run.is_null() {
        return null_argument("run");
    }
    if out.is_null() {
        return null_argument("out");
    }
    guarded(|| {
        let run = unsafe { &*run };
        let rec = run.result.trace.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "trace index {index} out of range (len {})",
                run.result.trace.len()
            ))
        });
        let rec = match rec {
            Ok(rec) => rec,
            Err(err) => {
                set_last_error(&err.to_string());
                return Ok(FgStatus::FgStatusOutOfRange);
            }
        };
        let phase = match rec.phase {
            Phase::Phi => 0,
            Phase::Predictor => 1,
            Phase::Baseline => 2,
        };
        unsafe {
            out.write(FgTraceRow {
                round: rec.round as u64,
                phase,
                train_acc: rec.train_acc,
                test_acc: rec.test_acc,
                comm_rounds: rec.comm_rounds,
                client_updates: rec.client_updates,
            });
        }
        Ok(FgStatus::FgStatusOk)
    })
}

/// Render the run's trace as CSV (same format the CLI writes). The returned
/// string is owned by the caller: release it with `fg_string_free`.
///
/// # Safety
/// `run` must be a live handle from `fg_experiment_run`; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fg_run_trace_csv(run: *const FgRun, out: *mut *mut c_char) -> FgStatus {
    if run.is_null() {
        return null_argument("run");
    }
    if out.is_null() {
        return null_argument("out");
    }
    guarded(|| {
        let run = unsafe { &*run };
        let csv = trace_csv(&run.result.trace);
        let cstring = CString::new(csv)
            .map_err(|_| Error::InvalidArgument("trace contained a NUL byte".into()))?;
        unsafe { out.write(cstring.into_raw()) };
        Ok(FgStatus::FgStatusOk)
    })
}
