//! Local-convergence diagnostics: frozen-map contraction, the step-size
//! condition, and empirical rate fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correction::SkewCorrection;
use crate::error::{Error, Result};
use crate::game::{DerivativeMode, Game, JointPoint};
use crate::numerics::{norm2, spectral_norm_default, spectral_radius, DenseMatrix};

use super::trace::SolverTrace;

pub const DEFAULT_LF_RADIUS: f64 = 1.0;
pub const DEFAULT_LF_SAMPLES: usize = 100;

/// Stationarity required of the point handed to [`frozen_map_analysis`].
const STATIONARY_TOL: f64 = 1e-8;

/// Source of the Lipschitz constant `L_F` of the game gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LipschitzEstimate {
    Given {
        value: f64,
    },
    /// `max ‖H(w)‖₂` over `samples` seeded points drawn uniformly from the
    /// ball of the given radius around `w*` (plus `w*` itself).
    Sampled {
        radius: f64,
        samples: usize,
        seed: u64,
    },
}

impl Default for LipschitzEstimate {
    fn default() -> Self {
        LipschitzEstimate::Sampled { radius: DEFAULT_LF_RADIUS, samples: DEFAULT_LF_SAMPLES, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenMapReport {
    pub eta: f64,
    pub tau: f64,
    pub players: usize,
    /// `‖DT*(w*)‖₂` with `DT* = I − η (I − τ A(w*)) H(w*)`.
    pub jacobian_norm: f64,
    pub spectral_radius: f64,
    pub lf_estimate: f64,
    /// `η · τ · (h − 1) · L_F`.
    pub step_condition_lhs: f64,
    /// `jacobian_norm < 1`.
    pub contractive: bool,
    /// `step_condition_lhs < 1`.
    pub step_condition_holds: bool,
}

/// `I − η (I − τ A) H` for a given Hessian.
pub fn frozen_map_jacobian(h: &DenseMatrix, a: &DenseMatrix, eta: f64, tau: f64) -> Result<DenseMatrix> {
    let d = h.rows();
    let precond = DenseMatrix::identity(d).sub(&a.scale(tau))?;
    DenseMatrix::identity(d).sub(&precond.matmul(h)?.scale(eta))
}

fn sample_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let u: Vec<f64> = center.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if norm2(&u) <= 1.0 {
            return center.iter().zip(&u).map(|(c, x)| c + radius * x).collect();
        }
    }
}

fn estimate_lf(game: &Game, w_star: &JointPoint, mode: DerivativeMode, est: &LipschitzEstimate) -> Result<f64> {
    match *est {
        LipschitzEstimate::Given { value } => {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument(format!("L_F must be finite and >= 0, got {value}")));
            }
            Ok(value)
        }
        LipschitzEstimate::Sampled { radius, samples, seed } => {
            if !(radius >= 0.0 && radius.is_finite()) {
                return Err(Error::InvalidArgument(format!("sampling radius must be >= 0, got {radius}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut best = spectral_norm_default(game.hessian(w_star, mode)?.full())?;
            for _ in 0..samples {
                let p = sample_ball(&mut rng, w_star.values(), radius);
                let h = game.hessian_slice(&p, mode)?;
                best = best.max(spectral_norm_default(h.full())?);
            }
            Ok(best)
        }
    }
}

/// Linearization of the frozen reference map `T*(w) = w − η (I − τ A(w*)) F(w)`
/// at `w*`, plus the step-size condition `η τ (h − 1) L_F < 1`.
pub fn frozen_map_analysis(
    game: &Game,
    w_star: &JointPoint,
    eta: f64,
    tau: f64,
    lf: &LipschitzEstimate,
) -> Result<FrozenMapReport> {
    let residual = norm2(&game.gradient(w_star)?);
    if residual > STATIONARY_TOL {
        return Err(Error::Precondition(format!("w* is not stationary: ‖F(w*)‖ = {residual:e} > {STATIONARY_TOL:e}")));
    }
    if !(eta >= 0.0 && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta and tau must be >= 0, got {eta}, {tau}")));
    }
    let mode = game.preferred_derivative_mode();
    let h = game.hessian(w_star, mode)?;
    let a = SkewCorrection::from_hessian(&h);
    let dt = frozen_map_jacobian(h.full(), a.full(), eta, tau)?;
    let jacobian_norm = spectral_norm_default(&dt)?;
    let lf_estimate = estimate_lf(game, w_star, mode, lf)?;
    let players = game.players();
    let step_condition_lhs = eta * tau * (players as f64 - 1.0) * lf_estimate;
    Ok(FrozenMapReport {
        eta,
        tau,
        players,
        jacobian_norm,
        spectral_radius: spectral_radius(&dt)?,
        lf_estimate,
        step_condition_lhs,
        contractive: jacobian_norm < 1.0,
        step_condition_holds: step_condition_lhs < 1.0,
    })
}

/// Least-squares fit of `log r_k ≈ a + b k`; `q_hat = exp(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub q_hat: f64,
    pub r_squared: f64,
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

const MIN_FIT_POINTS: usize = 10;

pub fn fit_linear_rate(ks: &[usize], residuals: &[f64]) -> Result<RateFit> {
    if ks.len() != residuals.len() {
        return Err(Error::Shape("iteration and residual series differ in length".into()));
    }
    if ks.len() < MIN_FIT_POINTS {
        return Err(Error::Precondition(format!("rate fit needs at least {MIN_FIT_POINTS} points, got {}", ks.len())));
    }
    if let Some(bad) = residuals.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::Precondition(format!("rate fit needs positive finite residuals, found {bad}")));
    }
    let n = ks.len() as f64;
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ym) * (y - ym)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("rate fit needs distinct iteration indices".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit { q_hat: slope.exp(), r_squared, slope, intercept, points: ks.len() })
}

/// Fits the geometric decay of the recorded residuals with `k ≥ burn_in`.
pub fn estimate_linear_rate(trace: &SolverTrace, burn_in: usize) -> Result<RateFit> {
    let (ks, rs): (Vec<usize>, Vec<f64>) =
        trace.records.iter().filter(|r| r.k >= burn_in).map(|r| (r.k, r.residual)).unzip();
    fit_linear_rate(&ks, &rs)
}

/// Number of sign changes between successive differences of `series`,
/// ignoring the first `burn_in` entries and zero differences.
pub fn sign_changes(series: &[f64], burn_in: usize) -> usize {
    let tail = series.get(burn_in..).unwrap_or(&[]);
    let mut last = 0i8;
    let mut changes = 0;
    for pair in tail.windows(2) {
        let d = pair[1] - pair[0];
        let s = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            continue;
        };
        if last != 0 && s != last {
            changes += 1;
        }
        last = s;
    }
    changes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::BlockLayout;

    #[test]
    fn geometric_trace_fit() {
        let ks: Vec<usize> = (0..40).collect();
        let rs: Vec<f64> = ks.iter().map(|&k| 0.5f64.powi(k as i32)).collect();
        let fit = fit_linear_rate(&ks, &rs).unwrap();
        assert!((fit.q_hat - 0.5).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_fit() {
        let ks: Vec<usize> = (0..20).collect();
        let fit = fit_linear_rate(&ks, &[3.0; 20]).unwrap();
        assert_eq!(fit.q_hat, 1.0);
    }

    #[test]
    fn fit_rejects_short_or_nonpositive() {
        assert!(fit_linear_rate(&[0, 1, 2], &[1.0, 0.5, 0.25]).is_err());
        let ks: Vec<usize> = (0..12).collect();
        let mut rs = vec![1.0; 12];
        rs[5] = 0.0;
        assert!(fit_linear_rate(&ks, &rs).is_err());
    }

    #[test]
    fn sign_change_counting() {
        assert_eq!(sign_changes(&[5.0, 4.0, 3.0, 2.0], 0), 0);
        assert_eq!(sign_changes(&[1.0, 2.0, 1.0, 2.0, 1.0], 0), 3);
        assert_eq!(sign_changes(&[1.0, 2.0, 1.0, 2.0, 1.0], 2), 1);
        assert_eq!(sign_changes(&[1.0, 1.0, 2.0, 2.0, 1.0], 0), 1);
        assert_eq!(sign_changes(&[1.0], 5), 0);
    }

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
    fn zero_step_is_identity() {
        let g = bilinear();
        let w = g.point(vec![0.0, 0.0]).unwrap();
        let rep = frozen_map_analysis(&g, &w, 0.0, 1.0, &LipschitzEstimate::Given { value: 1.0 }).unwrap();
        assert!((rep.jacobian_norm - 1.0).abs() < 1e-12);
        assert!(!rep.contractive);
        let small = frozen_map_analysis(&g, &w, 1e-3, 1.0, &LipschitzEstimate::Given { value: 1.0 }).unwrap();
        assert!(small.jacobian_norm < 1.0 && small.jacobian_norm > 0.99);
    }

    #[test]
    fn bilinear_frozen_map_by_characteristic_polynomial() {
        // DT = I − η(I − τA)A with A = [[0,1],[-1,0]]: A² = −I so
        // DT = (1 − ητ) I − η A, eigenvalues (1 − ητ) ± iη.
        let (eta, tau): (f64, f64) = (0.1, 1.0);
        let dt = [[1.0 - eta * tau, -eta], [eta, 1.0 - eta * tau]];
        let tr = dt[0][0] + dt[1][1];
        let det = dt[0][0] * dt[1][1] - dt[0][1] * dt[1][0];
        // complex pair: |λ|² = det when tr² < 4 det
        assert!(tr * tr < 4.0 * det);
        let oracle_radius = det.sqrt();

        let g = bilinear();
        let w = g.point(vec![0.0, 0.0]).unwrap();
        let rep = frozen_map_analysis(&g, &w, eta, tau, &LipschitzEstimate::default()).unwrap();
        assert!((rep.spectral_radius - oracle_radius).abs() < 1e-12);
        assert!(rep.spectral_radius < 1.0);
        // DT is a scaled rotation, so its norm equals its radius
        assert!((rep.jacobian_norm - oracle_radius).abs() < 1e-9);
        assert!(rep.contractive);
        assert!((rep.lf_estimate - 1.0).abs() < 1e-9);
        assert!((rep.step_condition_lhs - eta * tau).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_stationary_point() {
        let g = bilinear();
        let w = g.point(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            frozen_map_analysis(&g, &w, 0.1, 1.0, &LipschitzEstimate::default()),
            Err(Error::Precondition(_))
        ));
    }
}
