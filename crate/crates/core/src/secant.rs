//! Per-player Broyden approximations of the gradient Jacobians.
//!
//! Player `i` keeps `M_i ∈ R^{d_i × d}` approximating `D(∇_{x_i} f_i)`. After
//! each step `s = w_new − w_old` with observed gradient change `y_i` the
//! matrix receives the least-change rank-one correction that enforces the
//! secant condition `M_i s = y_i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{DerivativeMode, Game, JointPoint, DEFAULT_HESSIAN_FD_STEP};
use crate::numerics::{block_column, dot, norm2, spectral_norm_default, BlockLayout, DenseMatrix};

/// Half-width of the uniform distribution used for random mixed blocks.
pub const DEFAULT_RANDOM_SCALE: f64 = 0.1;

/// Steps shorter than this leave the secant matrices untouched.
pub fn default_skip_tol(w_old: &[f64]) -> f64 {
    1e-14 * (1.0 + norm2(w_old))
}

/// How the secant matrices are seeded before the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SecantInit {
    /// All matrices zero.
    Zero,
    /// Central-difference Jacobians at the start point.
    FiniteDifference,
    /// The game's analytic Jacobians at the start point.
    Analytic,
    /// Own-block (diagonal) blocks from finite differences, mixed blocks drawn
    /// i.i.d. uniform on `[-scale, scale]`.
    Random { seed: u64, scale: f64 },
}

impl Default for SecantInit {
    fn default() -> Self {
        SecantInit::Random { seed: 0, scale: DEFAULT_RANDOM_SCALE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecantState {
    layout: BlockLayout,
    matrices: Vec<DenseMatrix>,
    last_update_skipped: bool,
}

impl SecantState {
    pub fn zeros(layout: BlockLayout) -> Self {
        let d = layout.total();
        let matrices = layout.dims().iter().map(|&di| DenseMatrix::zeros(di, d)).collect();
        Self { layout, matrices, last_update_skipped: false }
    }

    pub fn from_matrices(layout: BlockLayout, matrices: Vec<DenseMatrix>) -> Result<Self> {
        if matrices.len() != layout.players() {
            return Err(Error::Shape(format!("{} secant matrices for {} players", matrices.len(), layout.players())));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.shape() != (layout.dim(i), layout.total()) {
                return Err(Error::Shape(format!(
                    "secant matrix {i} has shape {:?}, expected {:?}",
                    m.shape(),
                    (layout.dim(i), layout.total())
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("secant matrix {i}")));
            }
        }
        Ok(Self { layout, matrices, last_update_skipped: false })
    }

    pub fn init(game: &Game, w0: &JointPoint, strategy: &SecantInit) -> Result<Self> {
        let layout = game.layout().clone();
        if w0.layout() != &layout {
            return Err(Error::Shape("start point does not match the game layout".into()));
        }
        let fd = DerivativeMode::FiniteDifference { step: DEFAULT_HESSIAN_FD_STEP };
        let w = w0.values();
        let matrices = match strategy {
            SecantInit::Zero => return Ok(Self::zeros(layout)),
            SecantInit::FiniteDifference => {
                (0..layout.players()).map(|i| game.player_jacobian(i, w, fd)).collect::<Result<Vec<_>>>()?
            }
            SecantInit::Analytic => (0..layout.players())
                .map(|i| game.player_jacobian(i, w, DerivativeMode::Analytic))
                .collect::<Result<Vec<_>>>()?,
            &SecantInit::Random { seed, scale } => {
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidArgument(format!("random secant scale must be > 0, got {scale}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::with_capacity(layout.players());
                for i in 0..layout.players() {
                    let exact = game.player_jacobian(i, w, fd)?;
                    let own = layout.range(i);
                    let m = DenseMatrix::from_fn(layout.dim(i), layout.total(), |r, c| {
                        if own.contains(&c) {
                            exact[(r, c)]
                        } else {
                            rng.gen_range(-scale..=scale)
                        }
                    });
                    out.push(m);
                }
                out
            }
        };
        Self::from_matrices(layout, matrices)
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, player: usize) -> &DenseMatrix {
        &self.matrices[player]
    }

    /// Whether the most recent update was skipped for a degenerate step.
    pub fn last_update_skipped(&self) -> bool {
        self.last_update_skipped
    }

    /// Block column `[M_i]_j ∈ R^{d_i × d_j}`, the approximation of
    /// `∇²_{x_i x_j} f_i`.
    pub fn block(&self, i: usize, j: usize) -> Result<DenseMatrix> {
        self.layout.check_player(i)?;
        block_column(&self.matrices[i], &self.layout, j)
    }

    /// Broyden update from two points, evaluating the player gradients at
    /// both.
    pub fn broyden_update(
        &mut self,
        game: &Game,
        w_old: &JointPoint,
        w_new: &JointPoint,
        skip_tol: f64,
    ) -> Result<bool> {
        let g_old = game.gradient(w_old)?;
        let g_new = game.gradient(w_new)?;
        self.update_with_gradients(w_old.values(), w_new.values(), &g_old, &g_new, skip_tol)
    }

    /// Broyden update from cached game gradients at both points. Returns
    /// `true` when the step was too short and the update skipped.
    ///
    /// `M_i ← M_i + (y_i − M_i s) sᵀ / ‖s‖²` for every player.
    pub fn update_with_gradients(
        &mut self,
        w_old: &[f64],
        w_new: &[f64],
        grad_old: &[f64],
        grad_new: &[f64],
        skip_tol: f64,
    ) -> Result<bool> {
        let d = self.layout.total();
        if w_old.len() != d || w_new.len() != d || grad_old.len() != d || grad_new.len() != d {
            return Err(Error::Shape("Broyden update inputs must all have length d".into()));
        }
        let s: Vec<f64> = w_new.iter().zip(w_old).map(|(a, b)| a - b).collect();
        let ss = dot(&s, &s);
        if ss.sqrt() <= skip_tol {
            self.last_update_skipped = true;
            return Ok(true);
        }
        for (i, m) in self.matrices.iter_mut().enumerate() {
            let r = self.layout.range(i);
            let ms = m.mul_vec(&s);
            let resid: Vec<f64> = r.clone().zip(&ms).map(|(q, msq)| (grad_new[q] - grad_old[q]) - msq).collect();
            m.rank_one_update(1.0 / ss, &resid, &s);
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("secant matrix {i} after update")));
            }
        }
        self.last_update_skipped = false;
        Ok(false)
    }

    /// `‖M_i − D(∇_{x_i} f_i)(w_ref)‖₂` for every player, with reference
    /// Jacobians from the game's preferred derivative mode.
    pub fn secant_error(&self, game: &Game, w_ref: &JointPoint) -> Result<Vec<f64>> {
        let mode = game.preferred_derivative_mode();
        let jac = (0..self.layout.players())
            .map(|i| game.player_jacobian(i, w_ref.values(), mode))
            .collect::<Result<Vec<_>>>()?;
        self.errors_against(&jac)
    }

    /// Spectral-norm distance of each `M_i` to a given reference Jacobian.
    pub fn errors_against(&self, jacobians: &[DenseMatrix]) -> Result<Vec<f64>> {
        if jacobians.len() != self.matrices.len() {
            return Err(Error::Shape("one reference Jacobian per player required".into()));
        }
        self.matrices.iter().zip(jacobians).map(|(m, j)| spectral_norm_default(&m.sub(j)?)).collect()
    }
}
