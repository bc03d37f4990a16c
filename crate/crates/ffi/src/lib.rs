//! C ABI over the `multilrsga` solvers.
//!
//! Games and traces are opaque handles created by `ml_*` constructors and
//! released with the matching `*_free` function. Every fallible call returns
//! an [`MlStatus`]; on failure, [`ml_last_error_message`] describes the error
//! for the calling thread. Panics never cross the boundary.
//!
//! Arrays are passed as pointer plus length. Output arrays must hold exactly
//! the number of elements reported by the corresponding size query.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use multilrsga::experiments::{bilinear_game, paper_game, random_quadratic_game, BenchmarkGame};
use multilrsga::secant::{SecantInit, DEFAULT_RANDOM_SCALE};
use multilrsga::solvers::{
    frozen_map_analysis, run_solver, LipschitzEstimate, SolverConfig, SolverKind, SolverTrace, Status,
};
use multilrsga::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownGame = 3,
    ShapeMismatch = 4,
    Numerical = 5,
    NoConvergence = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlSolverKind {
    MultiLrsga = 0,
    GradientDescent = 1,
    ExactSga = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlSecantInit {
    Zero = 0,
    FiniteDifference = 1,
    Analytic = 2,
    Random = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlTraceStatus {
    Converged = 0,
    MaxIter = 1,
    Diverged = 2,
}

/// Solver settings. Obtain defaults from [`ml_solver_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlSolverConfig {
    pub eta: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub residual_tol: f64,
    pub secant_init: MlSecantInit,
    pub secant_seed: u64,
    pub secant_scale: f64,
    pub record_every: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MlFrozenMap {
    pub jacobian_norm: f64,
    pub spectral_radius: f64,
    pub lf_estimate: f64,
    pub step_condition_lhs: f64,
    pub contractive: bool,
    pub step_condition_holds: bool,
}

/// Opaque game handle.
pub struct MlGame {
    inner: BenchmarkGame,
}

/// Opaque solver trace handle.
pub struct MlTrace {
    inner: SolverTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownGame(_) => MlStatus::UnknownGame,
            Error::Shape(_) | Error::IndexOutOfRange { .. } => MlStatus::ShapeMismatch,
            Error::NonFinite(_) => MlStatus::Numerical,
            Error::NoConvergence { .. } => MlStatus::NoConvergence,
            Error::AtIteration { source, .. } if matches!(**source, Error::NonFinite(_)) => MlStatus::Numerical,
            _ => MlStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MlStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MlStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn game_ref<'a>(g: *const MlGame) -> Result<&'a BenchmarkGame, Failure> {
    g.as_ref().map(|g| &g.inner).ok_or_else(|| null("game"))
}

unsafe fn trace_ref<'a>(t: *const MlTrace) -> Result<&'a SolverTrace, Failure> {
    t.as_ref().map(|t| &t.inner).ok_or_else(|| null("trace"))
}

fn copy_out(src: &[f64], dst: &mut [f64], what: &str) -> Result<(), Failure> {
    if src.len() != dst.len() {
        return Err(Failure(
            MlStatus::ShapeMismatch,
            format!("{what}: buffer holds {} values, expected {}", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ml_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a built-in game by name: `"paper3"` or `"bilinear"` (which uses
/// `coupling`). Use [`ml_game_random_quadratic`] for random quadratic games.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ml_game_builtin(name: *const c_char, coupling: f64, out: *mut *mut MlGame) -> MlStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Failure(MlStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let inner = match name {
            "paper3" => paper_game(),
            "bilinear" => {
                if !coupling.is_finite() {
                    return Err(Failure(MlStatus::InvalidArgument, "coupling must be finite".into()));
                }
                bilinear_game(coupling)
            }
            other => return Err(Error::UnknownGame(other.to_string()).into()),
        };
        *out = Box::into_raw(Box::new(MlGame { inner }));
        Ok(())
    })
}

/// Seeded random quadratic game with the given block sizes.
///
/// # Safety
/// `dims` must point to `players` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_game_random_quadratic(
    dims: *const usize,
    players: usize,
    seed: u64,
    margin: f64,
    out: *mut *mut MlGame,
) -> MlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dims = slice(dims, players, "dims")?;
        let inner = random_quadratic_game(dims, seed, margin)?;
        *out = Box::into_raw(Box::new(MlGame { inner }));
        Ok(())
    })
}

/// Releases a game. Null is ignored.
///
/// # Safety
/// `game` must come from an `ml_game_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ml_game_free(game: *mut MlGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Total number of coordinates `d`.
///
/// # Safety
/// `game` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_game_dim(game: *const MlGame, out: *mut usize) -> MlStatus {
    guard(|| {
        let g = game_ref(game)?;
        *out.as_mut().ok_or_else(|| null("out"))? = g.game.dim();
        Ok(())
    })
}

/// Number of players.
///
/// # Safety
/// `game` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_game_players(game: *const MlGame, out: *mut usize) -> MlStatus {
    guard(|| {
        let g = game_ref(game)?;
        *out.as_mut().ok_or_else(|| null("out"))? = g.game.players();
        Ok(())
    })
}

/// Copies the game's default start point into `out[0..len]`.
///
/// # Safety
/// `game` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_game_default_start(game: *const MlGame, out: *mut f64, len: usize) -> MlStatus {
    guard(|| {
        let g = game_ref(game)?;
        let w0 = g
            .default_start
            .as_ref()
            .ok_or_else(|| Failure(MlStatus::InvalidArgument, format!("game {} has no default start", g.name)))?;
        copy_out(w0.values(), slice_mut(out, len, "out")?, "start")
    })
}

/// Game gradient `F(w)`.
///
/// # Safety
/// `w` and `out` must each hold `len` doubles, with `len` the game dimension.
#[no_mangle]
pub unsafe extern "C" fn ml_game_gradient(game: *const MlGame, w: *const f64, len: usize, out: *mut f64) -> MlStatus {
    guard(|| {
        let g = game_ref(game)?;
        let p = g.game.point(slice(w, len, "w")?.to_vec())?;
        let grad = g.game.gradient(&p)?;
        copy_out(&grad, slice_mut(out, len, "out")?, "gradient")
    })
}

fn kind_of(k: MlSolverKind) -> SolverKind {
    match k {
        MlSolverKind::MultiLrsga => SolverKind::MultiLrsga,
        MlSolverKind::GradientDescent => SolverKind::GradientDescent,
        MlSolverKind::ExactSga => SolverKind::ExactSga,
    }
}

/// Default settings for a solver: `eta = 0.001`, `tau = 1` (0 for gradient
/// descent), 50000 iterations, tolerance `1e-6`, random secant init.
#[no_mangle]
pub extern "C" fn ml_solver_config_default(kind: MlSolverKind) -> MlSolverConfig {
    let base = SolverConfig::new(0.001, if kind == MlSolverKind::GradientDescent { 0.0 } else { 1.0 });
    MlSolverConfig {
        eta: base.eta,
        tau: base.tau,
        max_iter: base.max_iter,
        residual_tol: base.residual_tol,
        secant_init: MlSecantInit::Random,
        secant_seed: 0,
        secant_scale: DEFAULT_RANDOM_SCALE,
        record_every: base.record_every,
    }
}

fn solver_config(c: &MlSolverConfig) -> SolverConfig {
    let init = match c.secant_init {
        MlSecantInit::Zero => SecantInit::Zero,
        MlSecantInit::FiniteDifference => SecantInit::FiniteDifference,
        MlSecantInit::Analytic => SecantInit::Analytic,
        MlSecantInit::Random => SecantInit::Random { seed: c.secant_seed, scale: c.secant_scale },
    };
    SolverConfig::new(c.eta, c.tau)
        .with_max_iter(c.max_iter)
        .with_residual_tol(c.residual_tol)
        .with_secant_init(init)
        .with_record_every(c.record_every)
}

/// Runs a solver. `w0` may be null to use the game's default start.
/// Divergence is not an error; query [`ml_trace_status`].
///
/// # Safety
/// `game` must be a live handle, `config` and `out` valid pointers, and `w0`
/// null or pointing to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_solve(
    game: *const MlGame,
    kind: MlSolverKind,
    config: *const MlSolverConfig,
    w0: *const f64,
    len: usize,
    out: *mut *mut MlTrace,
) -> MlStatus {
    guard(|| {
        let g = game_ref(game)?;
        let cfg = solver_config(config.as_ref().ok_or_else(|| null("config"))?);
        if out.is_null() {
            return Err(null("out"));
        }
        let start = if w0.is_null() {
            g.default_start
                .clone()
                .ok_or_else(|| Failure(MlStatus::InvalidArgument, format!("game {} has no default start", g.name)))?
        } else {
            g.game.point(slice(w0, len, "w0")?.to_vec())?
        };
        let trace = run_solver(kind_of(kind), &g.game, &start, &cfg)?;
        *out = Box::into_raw(Box::new(MlTrace { inner: trace }));
        Ok(())
    })
}

/// Releases a trace. Null is ignored.
///
/// # Safety
/// `trace` must come from [`ml_solve`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn ml_trace_free(trace: *mut MlTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_trace_status(trace: *const MlTrace, out: *mut MlTraceStatus) -> MlStatus {
    guard(|| {
        let t = trace_ref(trace)?;
        *out.as_mut().ok_or_else(|| null("out"))? = match t.status {
            Status::Converged => MlTraceStatus::Converged,
            Status::MaxIter => MlTraceStatus::MaxIter,
            Status::Diverged => MlTraceStatus::Diverged,
        };
        Ok(())
    })
}

/// Number of steps taken.
///
/// # Safety
/// `trace` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_trace_iterations(trace: *const MlTrace, out: *mut usize) -> MlStatus {
    guard(|| {
        let t = trace_ref(trace)?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.iterations;
        Ok(())
    })
}

/// Number of recorded iterates (the length of the residual series).
///
/// # Safety
/// `trace` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_trace_len(trace: *const MlTrace, out: *mut usize) -> MlStatus {
    guard(|| {
        let t = trace_ref(trace)?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.records.len();
        Ok(())
    })
}

/// Copies the recorded residuals into `out[0..len]`; `len` must equal
/// [`ml_trace_len`].
///
/// # Safety
/// `trace` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_trace_residuals(trace: *const MlTrace, out: *mut f64, len: usize) -> MlStatus {
    guard(|| {
        let t = trace_ref(trace)?;
        copy_out(&t.residuals(), slice_mut(out, len, "out")?, "residuals")
    })
}

/// Copies the final iterate into `out[0..len]`; `len` is the game dimension.
///
/// # Safety
/// `trace` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ml_trace_final_point(trace: *const MlTrace, out: *mut f64, len: usize) -> MlStatus {
    guard(|| {
        let t = trace_ref(trace)?;
        copy_out(t.final_point.values(), slice_mut(out, len, "out")?, "final point")
    })
}

/// Frozen-map contraction diagnostics at the game's known equilibrium, with
/// `L_F` sampled from 100 seeded points in the unit ball.
///
/// # Safety
/// `game` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ml_frozen_map(game: *const MlGame, eta: f64, tau: f64, out: *mut MlFrozenMap) -> MlStatus {
    guard(|| {
        let g = game_ref(game)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let w_star = g
            .known_equilibrium
            .as_ref()
            .ok_or_else(|| Failure(MlStatus::InvalidArgument, format!("game {} has no known equilibrium", g.name)))?;
        let r = frozen_map_analysis(&g.game, w_star, eta, tau, &LipschitzEstimate::default())?;
        *out = MlFrozenMap {
            jacobian_norm: r.jacobian_norm,
            spectral_radius: r.spectral_radius,
            lf_estimate: r.lf_estimate,
            step_condition_lhs: r.step_condition_lhs,
            contractive: r.contractive,
            step_condition_holds: r.step_condition_holds,
        };
        Ok(())
    })
}
