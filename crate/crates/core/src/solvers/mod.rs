//! Iterative equilibrium solvers.
//!
//! All three solvers share the update `w_{k+1} = w_k − η (I − τ C_k) F(w_k)`
//! and differ only in the skew operator `C_k`:
//!
//! | solver                         | `C_k`                                  |
//! |--------------------------------|----------------------------------------|
//! | [`run_gradient_descent`]       | none (`w − ηF`)                        |
//! | [`run_exact_sga`]              | exact `A(w_k)`                         |
//! | [`run_multilrsga`]             | secant `Â_k`, Broyden-updated each step |
//!
//! The game gradient is evaluated once per iterate; the value at `w_{k+1}`
//! feeds both the Broyden update and the next step.

mod diagnostics;
mod trace;

pub use diagnostics::{
    estimate_linear_rate, fit_linear_rate, frozen_map_analysis, frozen_map_jacobian, sign_changes, FrozenMapReport,
    LipschitzEstimate, RateFit, DEFAULT_LF_RADIUS, DEFAULT_LF_SAMPLES,
};
pub use trace::{SolverKind, SolverTrace, Status, TraceRecord};

use serde::{Deserialize, Serialize};

use crate::correction::SkewCorrection;
use crate::error::{Error, Result};
use crate::game::{block_norms, DerivativeMode, Game, JointPoint};
use crate::numerics::{norm2, DenseMatrix};
use crate::secant::{default_skip_tol, SecantInit, SecantState};

/// Residual above which a run is declared diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Main step size `η`.
    pub eta: f64,
    /// Weight `τ` of the skew correction. Ignored by gradient descent.
    pub tau: f64,
    pub max_iter: usize,
    pub residual_tol: f64,
    pub secant_init: SecantInit,
    /// Broyden skip threshold; `None` uses [`default_skip_tol`].
    pub skip_tol: Option<f64>,
    pub record_every: usize,
    /// Equilibrium to measure skew and secant errors against, if known.
    pub reference: Option<Vec<f64>>,
    /// Source of second derivatives for exact SGA and reference errors;
    /// `None` picks the game's preferred mode.
    pub derivative_mode: Option<DerivativeMode>,
}

impl SolverConfig {
    pub fn new(eta: f64, tau: f64) -> Self {
        Self {
            eta,
            tau,
            max_iter: 50_000,
            residual_tol: 1e-6,
            secant_init: SecantInit::default(),
            skip_tol: None,
            record_every: 1,
            reference: None,
            derivative_mode: None,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn with_secant_init(mut self, init: SecantInit) -> Self {
        self.secant_init = init;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn with_reference(mut self, w_star: Vec<f64>) -> Self {
        self.reference = Some(w_star);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be a finite value > 0, got {}", self.eta));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be a finite value >= 0, got {}", self.tau));
        }
        if !(self.residual_tol > 0.0) {
            return bad(format!("residual_tol must be > 0, got {}", self.residual_tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        if let Some(t) = self.skip_tol {
            if !(t >= 0.0) {
                return bad(format!("skip_tol must be >= 0, got {t}"));
            }
        }
        Ok(())
    }

    fn mode(&self, game: &Game) -> DerivativeMode {
        self.derivative_mode.unwrap_or_else(|| game.preferred_derivative_mode())
    }
}

/// One MultiLRSGA/SGA step in matrix form: `w − η (I − τ C) g`.
pub fn step_matrix_form(w: &[f64], g: &[f64], skew: &DenseMatrix, eta: f64, tau: f64) -> Vec<f64> {
    let cg = skew.mul_vec(g);
    w.iter().zip(g).zip(&cg).map(|((&wp, &gp), &cp)| wp - eta * (gp - tau * cp)).collect()
}

/// The same step written per player, straight from the secant matrices:
///
/// `x_i − η ∇_i f_i + (ητ/2) Σ_{j≠i} ([M_i]_j − [M_j]_iᵀ) ∇_j f_j`.
pub fn step_component_form(w: &[f64], g: &[f64], state: &SecantState, eta: f64, tau: f64) -> Vec<f64> {
    let layout = state.layout();
    let mut out = w.to_vec();
    for i in 0..layout.players() {
        let ri = layout.range(i);
        let mut corr = vec![0.0; ri.len()];
        for j in (0..layout.players()).filter(|&j| j != i) {
            let rj = layout.range(j);
            let gj = &g[rj.clone()];
            for (a, p) in ri.clone().enumerate() {
                let mut acc = 0.0;
                for (b, q) in rj.clone().enumerate() {
                    acc += (state.matrix(i)[(a, q)] - state.matrix(j)[(b, p)]) * gj[b];
                }
                corr[a] += acc;
            }
        }
        for (a, p) in ri.enumerate() {
            out[p] = w[p] - eta * g[p] + 0.5 * eta * tau * corr[a];
        }
    }
    out
}

enum Rule<'a> {
    Gradient,
    Exact { game: &'a Game, mode: DerivativeMode },
    Secant { state: SecantState, skip_tol: Option<f64>, skipped: usize },
}

impl Rule<'_> {
    fn skew(&self, w: &[f64]) -> Result<Option<DenseMatrix>> {
        Ok(match self {
            Rule::Gradient => None,
            Rule::Exact { game, mode } => {
                let h = game.hessian_slice(w, *mode)?;
                Some(SkewCorrection::from_hessian(&h).into_full())
            }
            Rule::Secant { state, .. } => Some(SkewCorrection::from_secant(state).into_full()),
        })
    }

    fn step(&self, w: &[f64], g: &[f64], eta: f64, tau: f64) -> Result<Vec<f64>> {
        Ok(match self.skew(w)? {
            None => w.iter().zip(g).map(|(&wp, &gp)| wp - eta * gp).collect(),
            Some(c) => step_matrix_form(w, g, &c, eta, tau),
        })
    }

    /// Broyden update for the secant rule; `Some(skipped)` when one was
    /// attempted.
    fn observe(&mut self, w_old: &[f64], w_new: &[f64], g_old: &[f64], g_new: &[f64]) -> Result<Option<bool>> {
        if let Rule::Secant { state, skip_tol, skipped } = self {
            let tol = skip_tol.unwrap_or_else(|| default_skip_tol(w_old));
            let skip = state.update_with_gradients(w_old, w_new, g_old, g_new, tol)?;
            if skip {
                *skipped += 1;
            }
            return Ok(Some(skip));
        }
        Ok(None)
    }

    fn secant(&self) -> Option<&SecantState> {
        match self {
            Rule::Secant { state, .. } => Some(state),
            _ => None,
        }
    }
}

struct Reference {
    skew: DenseMatrix,
    jacobians: Vec<DenseMatrix>,
}

fn reference(game: &Game, cfg: &SolverConfig) -> Result<Option<Reference>> {
    let Some(w_star) = &cfg.reference else {
        return Ok(None);
    };
    let w_star = game.point(w_star.clone())?;
    let h = game.hessian(&w_star, cfg.mode(game))?;
    let jacobians = (0..game.players()).map(|i| h.player_rows(i)).collect();
    Ok(Some(Reference { skew: SkewCorrection::from_hessian(&h).into_full(), jacobians }))
}

/// One accepted step, as seen by an observer passed to [`run_solver_observed`].
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// Index of the new iterate.
    pub k: usize,
    pub w_old: &'a [f64],
    pub w_new: &'a [f64],
    pub grad_old: &'a [f64],
    pub grad_new: &'a [f64],
    /// Secant state before and after the Broyden update (MultiLRSGA only).
    pub secant_before: Option<&'a SecantState>,
    pub secant_after: Option<&'a SecantState>,
    /// Whether the Broyden update was skipped (MultiLRSGA only).
    pub update_skipped: Option<bool>,
}

pub type StepObserver<'o> = &'o mut dyn FnMut(&StepEvent<'_>);

fn run(
    game: &Game,
    w0: &JointPoint,
    cfg: &SolverConfig,
    kind: SolverKind,
    mut observer: Option<StepObserver<'_>>,
) -> Result<SolverTrace> {
    cfg.validate()?;
    if w0.layout() != game.layout() {
        return Err(Error::Shape("start point does not match the game layout".into()));
    }
    let mut rule = match kind {
        SolverKind::GradientDescent => Rule::Gradient,
        SolverKind::ExactSga => Rule::Exact { game, mode: cfg.mode(game) },
        SolverKind::MultiLrsga => {
            Rule::Secant { state: SecantState::init(game, w0, &cfg.secant_init)?, skip_tol: cfg.skip_tol, skipped: 0 }
        }
    };
    let reference = reference(game, cfg)?;
    let layout = game.layout();

    let record = |k: usize, w: &[f64], residual: f64, rule: &Rule| -> Result<TraceRecord> {
        let mut rec =
            TraceRecord { k, residual, block_norms: block_norms(layout, w), skew_error: None, secant_errors: None };
        if let Some(r) = &reference {
            if let Some(c) = rule.skew(w)? {
                rec.skew_error = Some(crate::numerics::spectral_norm_default(&c.sub(&r.skew)?)?);
            }
            if let Rule::Secant { state, .. } = rule {
                rec.secant_errors = Some(state.errors_against(&r.jacobians)?);
            }
        }
        Ok(rec)
    };

    let mut w = w0.values().to_vec();
    let mut g = game.gradient_slice(&w).map_err(|e| e.at_iteration(0))?;
    let mut residual = norm2(&g);
    let mut records = vec![record(0, &w, residual, &rule).map_err(|e| e.at_iteration(0))?];
    let mut status = Status::MaxIter;
    let mut iterations = 0;

    if residual <= cfg.residual_tol {
        status = Status::Converged;
    } else {
        for k in 0..cfg.max_iter {
            let w_new = rule.step(&w, &g, cfg.eta, cfg.tau).map_err(|e| e.at_iteration(k))?;
            if w_new.iter().any(|v| !v.is_finite()) {
                status = Status::Diverged;
                break;
            }
            let g_new = game.gradient_slice(&w_new).map_err(|e| e.at_iteration(k + 1))?;
            let before = match (&observer, rule.secant()) {
                (Some(_), Some(st)) => Some(st.clone()),
                _ => None,
            };
            let update_skipped = rule.observe(&w, &w_new, &g, &g_new).map_err(|e| e.at_iteration(k + 1))?;
            if let Some(obs) = observer.as_mut() {
                obs(&StepEvent {
                    k: k + 1,
                    w_old: &w,
                    w_new: &w_new,
                    grad_old: &g,
                    grad_new: &g_new,
                    secant_before: before.as_ref(),
                    secant_after: rule.secant(),
                    update_skipped,
                });
            }
            w = w_new;
            g = g_new;
            residual = norm2(&g);
            iterations = k + 1;

            if !residual.is_finite() {
                status = Status::Diverged;
                break;
            }
            let done = residual <= cfg.residual_tol || residual > DIVERGENCE_THRESHOLD;
            if done || iterations % cfg.record_every == 0 || iterations == cfg.max_iter {
                records.push(record(iterations, &w, residual, &rule).map_err(|e| e.at_iteration(iterations))?);
            }
            if residual > DIVERGENCE_THRESHOLD {
                status = Status::Diverged;
                break;
            }
            if residual <= cfg.residual_tol {
                status = Status::Converged;
                break;
            }
        }
    }

    let (final_secant, skipped_updates) = match rule {
        Rule::Secant { state, skipped, .. } => (Some(state), skipped),
        _ => (None, 0),
    };
    Ok(SolverTrace {
        solver: kind,
        records,
        status,
        iterations,
        final_residual: residual,
        final_point: game.point(w)?,
        final_secant,
        skipped_updates,
    })
}

/// MultiLRSGA: `w_{k+1} = w_k − η (I − τ Â_k) F(w_k)` with `Â_k` built from
/// Broyden secant matrices updated after every step.
pub fn run_multilrsga(game: &Game, w0: &JointPoint, cfg: &SolverConfig) -> Result<SolverTrace> {
    run(game, w0, cfg, SolverKind::MultiLrsga, None)
}

/// Simultaneous gradient descent on the game gradient, `w_{k+1} = w_k − η F(w_k)`.
pub fn run_gradient_descent(game: &Game, w0: &JointPoint, cfg: &SolverConfig) -> Result<SolverTrace> {
    run(game, w0, cfg, SolverKind::GradientDescent, None)
}

/// SGA with the exact skew part: `w_{k+1} = w_k − η (I − τ A(w_k)) F(w_k)`.
pub fn run_exact_sga(game: &Game, w0: &JointPoint, cfg: &SolverConfig) -> Result<SolverTrace> {
    run(game, w0, cfg, SolverKind::ExactSga, None)
}

pub fn run_solver(kind: SolverKind, game: &Game, w0: &JointPoint, cfg: &SolverConfig) -> Result<SolverTrace> {
    run(game, w0, cfg, kind, None)
}

/// [`run_solver`] with a callback invoked after every step.
pub fn run_solver_observed(
    kind: SolverKind,
    game: &Game,
    w0: &JointPoint,
    cfg: &SolverConfig,
    observer: StepObserver<'_>,
) -> Result<SolverTrace> {
    run(game, w0, cfg, kind, Some(observer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::BlockLayout;

    fn bilinear() -> Game {
        Game::builder(BlockLayout::new(vec![1, 1]).unwrap())
            .player_with_gradient(|w| w[0] * w[1], |w| vec![w[1]])
            .with_jacobian(|_| DenseMatrix::from_rows(&[&[0.0, 1.0]]))
            .player_with_gradient(|w| -w[0] * w[1], |w| vec![-w[0]])
            .with_jacobian(|_| DenseMatrix::from_rows(&[&[-1.0, 0.0]]))
            .build()
            .unwrap()
    }

    #[test]
    fn starting_at_equilibrium_converges_immediately() {
        let g = bilinear();
        let w = g.point(vec![0.0, 0.0]).unwrap();
        let cfg = SolverConfig::new(0.1, 1.0);
        for kind in [SolverKind::MultiLrsga, SolverKind::GradientDescent, SolverKind::ExactSga] {
            let t = run_solver(kind, &g, &w, &cfg).unwrap();
            assert_eq!(t.status, Status::Converged);
            assert_eq!(t.iterations, 0);
            assert_eq!(t.final_point, w);
        }
    }

    #[test]
    fn bilinear_exact_secant_single_step() {
        let g = bilinear();
        let (eta, tau) = (0.1, 0.7);
        let w = g.point(vec![1.0, 0.0]).unwrap();
        let cfg = SolverConfig::new(eta, tau).with_secant_init(SecantInit::Analytic).with_max_iter(1);
        let t = run_multilrsga(&g, &w, &cfg).unwrap();
        let got = t.final_point.values();
        assert!((got[0] - (1.0 - eta * tau)).abs() < 1e-15);
        assert!((got[1] - eta).abs() < 1e-15);
        assert_eq!(t.status, Status::MaxIter);
    }

    #[test]
    fn gd_diverges_on_bilinear() {
        let g = bilinear();
        let w = g.point(vec![1.0, 0.0]).unwrap();
        let cfg = SolverConfig::new(0.5, 0.0).with_max_iter(1_000_000);
        let t = run_gradient_descent(&g, &w, &cfg).unwrap();
        assert_eq!(t.status, Status::Diverged);
        assert!(t.records.iter().all(|r| r.residual.is_finite()));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 1.0).validate().is_err());
        assert!(SolverConfig::new(0.1, -1.0).validate().is_err());
        assert!(SolverConfig::new(0.1, 1.0).with_max_iter(0).validate().is_err());
        assert!(SolverConfig::new(0.1, 1.0).with_residual_tol(0.0).validate().is_err());
        assert!(SolverConfig::new(0.1, 1.0).with_record_every(0).validate().is_err());
        assert!(SolverConfig::new(0.1, 1.0).validate().is_ok());
    }

    #[test]
    fn record_every_keeps_last_iterate() {
        let g = bilinear();
        let w = g.point(vec![1.0, 0.5]).unwrap();
        let cfg =
            SolverConfig::new(0.05, 1.0).with_secant_init(SecantInit::Analytic).with_record_every(7).with_max_iter(100);
        let t = run_multilrsga(&g, &w, &cfg).unwrap();
        let ks: Vec<usize> = t.records.iter().map(|r| r.k).collect();
        assert!(ks.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(*ks.last().unwrap(), t.iterations);
        assert!(ks.iter().all(|&k| k % 7 == 0 || k == t.iterations));
    }

    #[test]
    fn reference_tracking_fills_errors() {
        let g = bilinear();
        let w = g.point(vec![1.0, 0.5]).unwrap();
        let cfg = SolverConfig::new(0.05, 1.0)
            .with_secant_init(SecantInit::Zero)
            .with_reference(vec![0.0, 0.0])
            .with_max_iter(5);
        let t = run_multilrsga(&g, &w, &cfg).unwrap();
        let first = &t.records[0];
        assert!((first.skew_error.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(first.secant_errors.as_ref().unwrap().len(), 2);
        let gd = run_gradient_descent(&g, &w, &cfg).unwrap();
        assert!(gd.records[0].skew_error.is_none());
    }
}
