//! C interface to the riskq toolkit.
//!
//! Every fallible function returns a `RiskqStatus`. On failure the message is
//! available from `riskq_last_error` on the same thread until the next failing
//! call. Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use riskq::experiment::{
    evaluate_saved, run_experiment, ExperimentConfig, ExperimentKind, PolicyFile, ORACLE_TOL,
};
use riskq::gridworld::GridWorld;
use riskq::mdp::ExplicitPolicy;
use riskq::oracle::{max_value_policy, min_risk_policy, ExactEvaluation};
use riskq::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiskqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    ModelVersion = 4,
    DimensionMismatch = 5,
    Infeasible = 6,
    OutOfRange = 7,
    BufferTooSmall = 8,
    Io = 9,
    Numerical = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiskqObjective {
    /// Least probability of reaching an error state, ties broken by value.
    MinRisk = 0,
    /// Greatest discounted value, ties broken by risk.
    MaxValue = 1,
}

/// Experiment configuration.
pub struct RiskqConfig(ExperimentConfig);

/// Exact policy and its evaluation on a grid world.
pub struct RiskqExact {
    world: GridWorld,
    policy: ExplicitPolicy,
    eval: ExactEvaluation,
}

/// Policy loaded from a saved model file.
pub struct RiskqModel(PolicyFile);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RiskqStatus {
    match e {
        Error::Config { .. } => RiskqStatus::Config,
        Error::ModelVersion(_) => RiskqStatus::ModelVersion,
        Error::DimensionMismatch { .. } => RiskqStatus::DimensionMismatch,
        Error::Io(_) | Error::Csv(_) => RiskqStatus::Io,
        Error::Json(_) => RiskqStatus::Config,
        _ => RiskqStatus::Numerical,
    }
}

struct Failure(RiskqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RiskqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RiskqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            RiskqStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RiskqStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RiskqStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn riskq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn riskq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in settings for `experiment` (`gridworld`, `tank-y-clc`,
/// `tank-y-olc` or `tank-yc-clc`).
///
/// # Safety
/// `experiment` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn riskq_config_preset(
    experiment: *const c_char,
    out: *mut *mut RiskqConfig,
) -> RiskqStatus {
    guard(|| {
        let kind: ExperimentKind = text(experiment, "experiment")?.parse()?;
        put(out, boxed(RiskqConfig(ExperimentConfig::preset(kind))), "out")
    })
}

/// Parses a TOML configuration layered over the preset of its experiment.
/// `experiment` may be null when the TOML names the experiment itself.
///
/// # Safety
/// `toml` must be a NUL-terminated string, `experiment` null or
/// NUL-terminated, and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn riskq_config_from_toml(
    toml: *const c_char,
    experiment: *const c_char,
    out: *mut *mut RiskqConfig,
) -> RiskqStatus {
    guard(|| {
        let kind = if experiment.is_null() {
            None
        } else {
            Some(text(experiment, "experiment")?.parse()?)
        };
        let cfg = ExperimentConfig::from_toml_str(text(toml, "toml")?, kind)?;
        cfg.validate()?;
        put(out, boxed(RiskqConfig(cfg)), "out")
    })
}

/// Overrides the seed.
///
/// # Safety
/// `config` must come from a `riskq_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn riskq_config_set_seed(config: *mut RiskqConfig, seed: u64) -> RiskqStatus {
    guard(|| {
        config.as_mut().ok_or_else(|| null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// Writes the 16-digit configuration hash and a terminating NUL into `buf`,
/// which must hold at least 17 bytes.
///
/// # Safety
/// `config` must be a live handle and `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn riskq_config_hash(
    config: *const RiskqConfig,
    buf: *mut c_char,
    len: usize,
) -> RiskqStatus {
    guard(|| {
        let hash = handle(config, "config")?.0.hash()?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len <= hash.len() {
            return Err(Failure(
                RiskqStatus::BufferTooSmall,
                format!("need {} bytes", hash.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(hash.as_ptr().cast(), buf, hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn riskq_config_free(config: *mut RiskqConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the configured experiment and writes its artifacts to `out_dir`.
/// When no ξ meets the risk bound the status is `Infeasible` and
/// `min_risk` (if not null) receives the smallest risk estimate.
///
/// # Safety
/// `config` must be a live handle, `out_dir` NUL-terminated and `min_risk`
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn riskq_run(
    config: *const RiskqConfig,
    out_dir: *const c_char,
    min_risk: *mut f64,
) -> RiskqStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        let summary = run_experiment(cfg, Path::new(text(out_dir, "out_dir")?))?;
        match summary.infeasible {
            Some(r) => {
                if !min_risk.is_null() {
                    min_risk.write(r);
                }
                Err(Failure(
                    RiskqStatus::Infeasible,
                    format!("minimum risk estimate {r:.4} exceeds omega {}", cfg.xi.omega),
                ))
            }
            None => Ok(()),
        }
    })
}

/// Solves the grid world of `config` exactly for `objective`.
///
/// # Safety
/// `config` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn riskq_exact_solve(
    config: *const RiskqConfig,
    objective: RiskqObjective,
    out: *mut *mut RiskqExact,
) -> RiskqStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        if cfg.experiment != ExperimentKind::Gridworld {
            return Err(Error::config("experiment", "exact solutions need the finite grid world").into());
        }
        cfg.validate()?;
        let world = GridWorld::new(cfg.grid.clone())?;
        let gamma = cfg.learning.gamma;
        let (policy, eval) = match objective {
            RiskqObjective::MinRisk => min_risk_policy(world.mdp(), gamma, ORACLE_TOL)?,
            RiskqObjective::MaxValue => max_value_policy(world.mdp(), gamma, ORACLE_TOL)?,
        };
        put(out, boxed(RiskqExact { world, policy, eval }), "out")
    })
}

/// Number of states including the absorbing state, which is the last one.
///
/// # Safety
/// `exact` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn riskq_exact_num_states(exact: *const RiskqExact) -> usize {
    exact.as_ref().map_or(0, |e| e.world.num_states())
}

/// Cell, action, value and probability of reaching an error state for
/// `state`. The absorbing state has no cell and reports `OutOfRange`.
///
/// # Safety
/// `exact` must be a live handle and all outputs writable.
#[no_mangle]
pub unsafe extern "C" fn riskq_exact_state(
    exact: *const RiskqExact,
    state: usize,
    x: *mut usize,
    y: *mut usize,
    action: *mut usize,
    value: *mut f64,
    risk: *mut f64,
) -> RiskqStatus {
    guard(|| {
        let e = handle(exact, "exact")?;
        let Some((cx, cy)) = e.world.spec().cell(state) else {
            return Err(Failure(
                RiskqStatus::OutOfRange,
                format!("state {state} is not a grid cell"),
            ));
        };
        put(x, cx, "x")?;
        put(y, cy, "y")?;
        put(action, e.policy.actions[state], "action")?;
        put(value, e.eval.values[state], "value")?;
        put(risk, e.eval.risks[state], "risk")
    })
}

/// Value and risk averaged over the start distribution.
///
/// # Safety
/// `exact` must be a live handle and both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn riskq_exact_aggregate(
    exact: *const RiskqExact,
    value: *mut f64,
    risk: *mut f64,
) -> RiskqStatus {
    guard(|| {
        let e = handle(exact, "exact")?;
        let start = e.world.mdp().start();
        put(value, e.eval.aggregate_value(start), "value")?;
        put(risk, e.eval.aggregate_risk(start), "risk")
    })
}

/// # Safety
/// `exact` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn riskq_exact_free(exact: *mut RiskqExact) {
    if !exact.is_null() {
        drop(Box::from_raw(exact));
    }
}

/// Parses a saved model (the JSON written next to the experiment artifacts).
///
/// # Safety
/// `json` must be NUL-terminated and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn riskq_model_load(json: *const c_char, out: *mut *mut RiskqModel) -> RiskqStatus {
    guard(|| {
        let file = PolicyFile::from_json(text(json, "json")?)?;
        put(out, boxed(RiskqModel(file)), "out")
    })
}

/// The ξ the model was selected at, or NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn riskq_model_xi(model: *const RiskqModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.xi)
}

/// Monte Carlo value and risk of the greedy policy over the start
/// distribution. `half_width` outputs may be null.
///
/// # Safety
/// `model` must be a live handle, `value` and `risk` writable, and the
/// half-width pointers null or writable.
#[no_mangle]
pub unsafe extern "C" fn riskq_model_evaluate(
    model: *const RiskqModel,
    episodes: usize,
    seed: u64,
    value: *mut f64,
    value_half_width: *mut f64,
    risk: *mut f64,
    risk_half_width: *mut f64,
) -> RiskqStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if episodes == 0 {
            return Err(Error::config("episodes", "must be positive").into());
        }
        let ev = evaluate_saved(&m.0, episodes, seed)?;
        put(value, ev.value.mean, "value")?;
        put(risk, ev.risk.mean, "risk")?;
        if !value_half_width.is_null() {
            value_half_width.write(ev.value.half_width);
        }
        if !risk_half_width.is_null() {
            risk_half_width.write(ev.risk.half_width);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn riskq_model_free(model: *mut RiskqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
