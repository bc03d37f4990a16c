//! Block antisymmetric corrections.
//!
//! [`SkewCorrection`] holds either the exact antisymmetric part `A(w)` of the
//! game Hessian or its secant approximation `Â` assembled from the block
//! columns of the per-player Broyden matrices:
//!
//! ```text
//! Â_ii = 0,   Â_ij = ½([M_i]_j − [M_j]_iᵀ)   (i ≠ j)
//! ```
//!
//! Only the upper blocks are computed; the lower blocks are written as their
//! negated transposes, so `Â + Âᵀ = 0` holds bitwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{sa_decompose, DerivativeMode, Game, GameHessian, JointPoint};
use crate::numerics::{spectral_norm_default, BlockLayout, DenseMatrix};
use crate::secant::SecantState;

#[derive(Debug, Clone, PartialEq)]
pub struct SkewCorrection {
    layout: BlockLayout,
    full: DenseMatrix,
}

impl SkewCorrection {
    pub fn zeros(layout: BlockLayout) -> Self {
        let d = layout.total();
        Self { layout, full: DenseMatrix::zeros(d, d) }
    }

    /// `Â` from the secant state.
    pub fn from_secant(state: &SecantState) -> Self {
        Self::from_jacobian_rows(state.layout(), state.matrices())
    }

    /// Same construction from any per-player `d_i × d` row blocks.
    pub fn from_jacobian_rows(layout: &BlockLayout, rows: &[DenseMatrix]) -> Self {
        let d = layout.total();
        let h = layout.players();
        let mut full = DenseMatrix::zeros(d, d);
        for i in 0..h {
            let ri = layout.range(i);
            for j in (i + 1)..h {
                let rj = layout.range(j);
                for (a, p) in ri.clone().enumerate() {
                    for (b, q) in rj.clone().enumerate() {
                        // [M_i]_j (a, b) and [M_j]_iᵀ (a, b) = [M_j]_i (b, a)
                        let v = 0.5 * (rows[i][(a, q)] - rows[j][(b, p)]);
                        full[(p, q)] = v;
                        full[(q, p)] = -v;
                    }
                }
            }
        }
        Self { layout: layout.clone(), full }
    }

    /// Exact `A(w)` with `A_ij = ½(H_ij − H_jiᵀ)` and `A_ii = 0`.
    pub fn exact(game: &Game, w: &JointPoint, mode: DerivativeMode) -> Result<Self> {
        Ok(Self::from_hessian(&game.hessian(w, mode)?))
    }

    /// Antisymmetric part of an assembled Hessian with its diagonal blocks
    /// cleared. Those blocks are `½(H_ii − H_iiᵀ)`, zero for true Hessians
    /// and rounding noise for finite-difference ones.
    pub fn from_hessian(h: &GameHessian) -> Self {
        let layout = h.layout().clone();
        let mut full = sa_decompose(h).antisymmetric;
        for i in 0..layout.players() {
            for p in layout.range(i) {
                for q in layout.range(i) {
                    full[(p, q)] = 0.0;
                }
            }
        }
        Self { layout, full }
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn full(&self) -> &DenseMatrix {
        &self.full
    }

    pub fn into_full(self) -> DenseMatrix {
        self.full
    }

    pub fn block(&self, i: usize, j: usize) -> Result<DenseMatrix> {
        crate::numerics::block_get(&self.full, &self.layout, i, j)
    }

    /// `Â v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.full.mul_vec(v)
    }

    /// `‖self − other‖₂`.
    pub fn error_against(&self, other: &SkewCorrection) -> Result<f64> {
        skew_error(self, other)
    }
}

/// `‖approx − exact‖₂`.
pub fn skew_error(approx: &SkewCorrection, exact: &SkewCorrection) -> Result<f64> {
    if approx.layout != exact.layout {
        return Err(Error::Shape(format!(
            "skew corrections have different layouts: {:?} vs {:?}",
            approx.layout.dims(),
            exact.layout.dims()
        )));
    }
    spectral_norm_default(&approx.full.sub(&exact.full)?)
}

/// Parameters of the randomized skew-error bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewBoundTrialConfig {
    pub trials: usize,
    pub seed: u64,
    pub players: Vec<usize>,
    pub dims: Vec<usize>,
    pub deltas: Vec<f64>,
}

impl Default for SkewBoundTrialConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0x1e44a,
            players: vec![2, 3, 4, 5],
            dims: vec![1, 2, 3],
            deltas: vec![0.01, 0.1, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewBoundTrial {
    pub players: usize,
    pub dims: Vec<usize>,
    /// Largest per-player secant error `max_i ‖M_i − J_i‖₂`.
    pub delta: f64,
    /// `‖Â − A‖₂`.
    pub skew_error: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewBoundSummary {
    pub trials: usize,
    pub passed: usize,
    pub two_player_trials: usize,
    pub two_player_passed: usize,
    /// Largest `skew_error / ((h−1)·delta)` observed.
    pub max_ratio: f64,
}

/// Slack added to the `(h−1)·δ` bound.
pub const SKEW_BOUND_SLACK: f64 = 1e-12;

/// Draws one random instance: exact Jacobian rows `J_i` (own blocks
/// symmetric), perturbations of spectral norm `delta`, and compares the
/// secant-built correction against the exact one.
pub fn skew_bound_trial(rng: &mut impl Rng, players: usize, dims: Vec<usize>, delta: f64) -> Result<SkewBoundTrial> {
    let layout = BlockLayout::new(dims.clone())?;
    let d = layout.total();
    let mut exact_full = DenseMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    for i in 0..players {
        for p in layout.range(i) {
            for q in layout.range(i) {
                if q > p {
                    exact_full[(q, p)] = exact_full[(p, q)];
                }
            }
        }
    }
    let hessian = GameHessian::new(layout.clone(), exact_full)?;
    let mut secant_rows = Vec::with_capacity(players);
    let mut measured = 0.0f64;
    for i in 0..players {
        let ji = hessian.player_rows(i);
        let raw = DenseMatrix::from_fn(layout.dim(i), d, |_, _| rng.gen_range(-1.0..1.0));
        let n = spectral_norm_default(&raw)?;
        let pert = raw.scale(delta / n);
        let mi = ji.add(&pert)?;
        measured = measured.max(spectral_norm_default(&mi.sub(&ji)?)?);
        secant_rows.push(mi);
    }
    let approx = SkewCorrection::from_jacobian_rows(&layout, &secant_rows);
    let exact = SkewCorrection::from_hessian(&hessian);
    let err = skew_error(&approx, &exact)?;
    let bound = (players as f64 - 1.0) * measured;
    Ok(SkewBoundTrial {
        players,
        dims,
        delta: measured,
        skew_error: err,
        bound,
        passed: err <= bound + SKEW_BOUND_SLACK,
    })
}

/// Runs `cfg.trials` seeded instances of [`skew_bound_trial`].
pub fn run_skew_bound_trials(cfg: &SkewBoundTrialConfig) -> Result<(SkewBoundSummary, Vec<SkewBoundTrial>)> {
    if cfg.players.is_empty() || cfg.dims.is_empty() || cfg.deltas.is_empty() {
        return Err(Error::InvalidArgument("skew-bound trial grids must be nonempty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        // cycle h so every player count is covered evenly
        let h = cfg.players[t % cfg.players.len()];
        let dims: Vec<usize> = (0..h).map(|_| cfg.dims[rng.gen_range(0..cfg.dims.len())]).collect();
        let delta = cfg.deltas[rng.gen_range(0..cfg.deltas.len())];
        trials.push(skew_bound_trial(&mut rng, h, dims, delta)?);
    }
    let summary = SkewBoundSummary {
        trials: trials.len(),
        passed: trials.iter().filter(|t| t.passed).count(),
        two_player_trials: trials.iter().filter(|t| t.players == 2).count(),
        two_player_passed: trials
            .iter()
            .filter(|t| t.players == 2 && t.skew_error <= t.delta + SKEW_BOUND_SLACK)
            .count(),
        max_ratio: trials.iter().filter(|t| t.bound > 0.0).map(|t| t.skew_error / t.bound).fold(0.0, f64::max),
    };
    Ok((summary, trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_scalar_players() {
        let layout = BlockLayout::new(vec![1, 1]).unwrap();
        let (a, b, c, d) = (0.3, -1.2, 0.8, 2.5);
        let st = SecantState::from_matrices(
            layout,
            vec![DenseMatrix::from_rows(&[&[a, b]]), DenseMatrix::from_rows(&[&[c, d]])],
        )
        .unwrap();
        let ahat = SkewCorrection::from_secant(&st);
        let expect = DenseMatrix::from_rows(&[&[0.0, (b - c) / 2.0], &[(c - b) / 2.0, 0.0]]);
        assert_eq!(ahat.full(), &expect);
    }

    #[test]
    fn zero_state_gives_zero() {
        let st = SecantState::zeros(BlockLayout::new(vec![2, 1, 3]).unwrap());
        assert_eq!(SkewCorrection::from_secant(&st).full().max_abs(), 0.0);
    }

    #[test]
    fn exact_bilinear_blocks_reproduce_a() {
        let layout = BlockLayout::new(vec![1, 1]).unwrap();
        let st = SecantState::from_matrices(
            layout,
            vec![DenseMatrix::from_rows(&[&[0.0, 1.0]]), DenseMatrix::from_rows(&[&[-1.0, 0.0]])],
        )
        .unwrap();
        let ahat = SkewCorrection::from_secant(&st);
        assert_eq!(ahat.full(), &DenseMatrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]));
    }

    #[test]
    fn exactly_antisymmetric_with_zero_diagonal_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let layout = BlockLayout::new(vec![2, 3, 1]).unwrap();
        let rows: Vec<DenseMatrix> =
            (0..3).map(|i| DenseMatrix::from_fn(layout.dim(i), 6, |_, _| rng.gen_range(-5.0..5.0))).collect();
        let ahat = SkewCorrection::from_jacobian_rows(&layout, &rows);
        let f = ahat.full();
        assert_eq!(f.add(&f.transpose()).unwrap().max_abs(), 0.0);
        for i in 0..3 {
            assert_eq!(ahat.block(i, i).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn potential_game_has_zero_exact_skew() {
        let layout = BlockLayout::new(vec![1, 2]).unwrap();
        let g = Game::potential(layout, |w| w[0] * w[1] * w[2] + w[0].exp());
        let w = g.point(vec![0.1, 0.2, -0.3]).unwrap();
        let a = SkewCorrection::exact(&g, &w, DerivativeMode::FiniteDifference { step: 1e-4 }).unwrap();
        assert!(a.full().max_abs() < 1e-6);
    }

    #[test]
    fn skew_error_basics() {
        let layout = BlockLayout::new(vec![1, 1]).unwrap();
        let z = SkewCorrection::zeros(layout);
        assert_eq!(skew_error(&z, &z).unwrap(), 0.0);
        let other = SkewCorrection::zeros(BlockLayout::new(vec![2]).unwrap());
        assert!(skew_error(&z, &other).is_err());
    }

    #[test]
    fn skew_bound_trials_small_run() {
        let cfg = SkewBoundTrialConfig { trials: 60, ..Default::default() };
        let (summary, trials) = run_skew_bound_trials(&cfg).unwrap();
        assert_eq!(summary.passed, 60);
        assert_eq!(summary.two_player_passed, summary.two_player_trials);
        assert!(summary.max_ratio <= 1.0);
        assert!(trials.iter().all(|t| t.delta > 0.0));
    }
}
