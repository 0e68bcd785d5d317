//! C ABI over `lienav`.
//!
//! Objects are opaque heap handles released with their `_free` function.
//! Every fallible call returns a [`LienavStatus`]; on failure the message is
//! available from [`lienav_last_error`] on the same thread. Panics are caught
//! at the boundary and reported as `LIENAV_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lienav::control::{coefficients, eval_control};
use lienav::potential::Potential;
use lienav::scenarios::{self, Scenario};
use lienav::sim::{Termination, Trajectory};
use lienav::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LienavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Schema = 4,
    Infeasible = 5,
    RankDeficient = 6,
    BoundarySingularity = 7,
    Collision = 8,
    InvalidFrequencies = 9,
    UnknownBuiltin = 10,
    BufferTooSmall = 11,
    Io = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LienavTermination {
    Converged = 0,
    HorizonExhausted = 1,
    Collision = 2,
    RankFailure = 3,
}

/// Opaque scenario handle.
pub struct LienavScenario(Scenario);

/// Opaque trajectory handle.
pub struct LienavTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LienavStatus {
    match e {
        Error::DimensionMismatch { .. } => LienavStatus::DimensionMismatch,
        Error::Schema(_) | Error::Expression(_) | Error::InvalidBasis(_) => LienavStatus::Schema,
        Error::Infeasible(_) | Error::OutsideFreeSpace { .. } => LienavStatus::Infeasible,
        Error::RankDeficient { .. } => LienavStatus::RankDeficient,
        Error::BoundarySingularity { .. } => LienavStatus::BoundarySingularity,
        Error::Collision { .. } => LienavStatus::Collision,
        Error::InvalidFrequencies(_) | Error::AssignmentFailed { .. } => LienavStatus::InvalidFrequencies,
        Error::UnknownBuiltin(_) => LienavStatus::UnknownBuiltin,
        Error::Io(_) => LienavStatus::Io,
        _ => LienavStatus::InvalidArgument,
    }
}

struct Fail(LienavStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LienavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LienavStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LienavStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LienavStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(LienavStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < needed {
        return Err(Fail(
            LienavStatus::BufferTooSmall,
            format!("{what} holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn scenario<'a>(p: *const LienavScenario) -> Result<&'a Scenario, Fail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("scenario"))
}

unsafe fn trajectory<'a>(p: *const LienavTrajectory) -> Result<&'a Trajectory, Fail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("trajectory"))
}

fn check_dim(sc: &Scenario, len: usize) -> Result<(), Fail> {
    let n = sc.system.state_dim();
    if len != n {
        return Err(Error::DimensionMismatch {
            context: "state".into(),
            expected: n,
            found: len,
        }
        .into());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lienav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a builtin scenario (`"rigid-body"` or `"rolling-disc"`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lienav_scenario_builtin(name: *const c_char, out: *mut *mut LienavScenario) -> LienavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = scenarios::builtin_scenario(str_arg(name, "name")?)?;
        *out = Box::into_raw(Box::new(LienavScenario(sc)));
        Ok(())
    })
}

/// Parses a scenario TOML document.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lienav_scenario_from_toml(text: *const c_char, out: *mut *mut LienavScenario) -> LienavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = scenarios::load_scenario(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(LienavScenario(sc)));
        Ok(())
    })
}

/// Serializes a scenario to TOML. Release the string with [`lienav_string_free`].
///
/// # Safety
/// `sc` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lienav_scenario_to_toml(sc: *const LienavScenario, out: *mut *mut c_char) -> LienavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = scenarios::save_scenario(scenario(sc)?)?;
        let c = CString::new(text).map_err(|_| Fail(LienavStatus::Schema, "document contains NUL".into()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lienav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `sc` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lienav_scenario_free(sc: *mut LienavScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// State dimension `n`, or 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lienav_scenario_state_dim(sc: *const LienavScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.0.system.state_dim())
}

/// Input dimension `m`, or 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lienav_scenario_input_dim(sc: *const LienavScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.0.system.input_dim())
}

/// Overrides epoch length, gain and horizon. Non-positive values are rejected.
///
/// # Safety
/// `sc` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lienav_scenario_set_params(
    sc: *mut LienavScenario,
    epsilon: f64,
    gamma: f64,
    t_max: f64,
) -> LienavStatus {
    guard(|| {
        let s = &mut sc.as_mut().ok_or_else(|| null("scenario"))?.0;
        let params = lienav::control::ControlParams::new(epsilon, gamma)?;
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Fail(
                LienavStatus::InvalidArgument,
                format!("t_max must be positive, got {t_max}"),
            ));
        }
        s.params = params;
        s.sim.t_max = t_max;
        Ok(())
    })
}

/// Navigation function value at `x` (length `n`).
///
/// # Safety
/// `x` must point to `n` doubles and `out` to one.
#[no_mangle]
pub unsafe extern "C" fn lienav_potential_value(
    sc: *const LienavScenario,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> LienavStatus {
    guard(|| {
        let s = scenario(sc)?;
        check_dim(s, n)?;
        let x = slice_arg(x, n, "x")?;
        let o = out_slice(out, 1, 1, "out")?;
        o[0] = s.potential.value(x)?;
        Ok(())
    })
}

/// `∇P(x)` into `out` (capacity `out_len ≥ n`).
///
/// # Safety
/// `x` must point to `n` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lienav_potential_gradient(
    sc: *const LienavScenario,
    x: *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> LienavStatus {
    guard(|| {
        let s = scenario(sc)?;
        check_dim(s, n)?;
        let x = slice_arg(x, n, "x")?;
        let o = out_slice(out, out_len, n, "out")?;
        o.copy_from_slice(s.potential.gradient(x)?.as_slice());
        Ok(())
    })
}

/// Coefficients `a(x)` solving `F(x)·a = −γ∇P(x)`, in basis order (`n` values).
///
/// # Safety
/// `x` must point to `n` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lienav_coefficients(
    sc: *const LienavScenario,
    x: *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> LienavStatus {
    guard(|| {
        let s = scenario(sc)?;
        check_dim(s, n)?;
        let x = slice_arg(x, n, "x")?;
        let o = out_slice(out, out_len, n, "out")?;
        let c = coefficients(&s.system, &s.basis, &s.potential, s.params.gamma, x)?;
        o.copy_from_slice(c.a.as_slice());
        Ok(())
    })
}

/// Control `u(t)` for the epoch whose held state is `x_hold` (`m` values).
///
/// # Safety
/// `x_hold` must point to `n` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lienav_control(
    sc: *const LienavScenario,
    t: f64,
    x_hold: *const f64,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> LienavStatus {
    guard(|| {
        let s = scenario(sc)?;
        check_dim(s, n)?;
        let x = slice_arg(x_hold, n, "x_hold")?;
        let m = s.system.input_dim();
        let o = out_slice(out, out_len, m, "out")?;
        let u = eval_control(&s.system, &s.basis, &s.potential, &s.frequencies, &s.params, t, x)?;
        o.copy_from_slice(u.as_slice());
        Ok(())
    })
}

/// Runs the closed loop. Collisions and rank failures are reported through
/// [`lienav_trajectory_termination`], not as errors.
///
/// # Safety
/// `sc` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lienav_simulate(sc: *const LienavScenario, out: *mut *mut LienavTrajectory) -> LienavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = scenario(sc)?.simulate()?;
        *out = Box::into_raw(Box::new(LienavTrajectory(t)));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lienav_trajectory_free(t: *mut LienavTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of recorded samples, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lienav_trajectory_len(t: *const LienavTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// Number of epochs executed, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lienav_trajectory_epochs(t: *const LienavTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.0.epochs.len())
}

/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lienav_trajectory_termination(
    t: *const LienavTrajectory,
    out: *mut LienavTermination,
) -> LienavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = match trajectory(t)?.termination {
            Termination::Converged => LienavTermination::Converged,
            Termination::HorizonExhausted => LienavTermination::HorizonExhausted,
            Termination::Collision { .. } => LienavTermination::Collision,
            Termination::RankFailure { .. } => LienavTermination::RankFailure,
        };
        Ok(())
    })
}

/// Minimum free-space margin over the fine grid and final distance to the target.
///
/// # Safety
/// `t` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lienav_trajectory_summary(
    t: *const LienavTrajectory,
    min_margin: *mut f64,
    final_distance: *mut f64,
) -> LienavStatus {
    guard(|| {
        let t = trajectory(t)?;
        out_slice(min_margin, 1, 1, "min_margin")?[0] = t.min_margin;
        out_slice(final_distance, 1, 1, "final_distance")?[0] = t.final_distance();
        Ok(())
    })
}

/// Sample times (`len` values).
///
/// # Safety
/// `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lienav_trajectory_times(
    t: *const LienavTrajectory,
    out: *mut f64,
    out_len: usize,
) -> LienavStatus {
    guard(|| {
        let t = trajectory(t)?;
        out_slice(out, out_len, t.len(), "out")?.copy_from_slice(&t.times);
        Ok(())
    })
}

/// States, row-major (`len × n` values).
///
/// # Safety
/// `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lienav_trajectory_states(
    t: *const LienavTrajectory,
    out: *mut f64,
    out_len: usize,
) -> LienavStatus {
    guard(|| {
        let t = trajectory(t)?;
        let n = t.states.first().map_or(0, |s| s.len());
        let o = out_slice(out, out_len, t.len() * n, "out")?;
        for (row, x) in o.chunks_exact_mut(n.max(1)).zip(&t.states) {
            row.copy_from_slice(x);
        }
        Ok(())
    })
}
