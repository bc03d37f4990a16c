//! h-player differentiable games.
//!
//! A [`Game`] is a list of players, each owning a block of the joint strategy
//! vector and an objective `f_i(w)` it minimizes over its own block. The
//! stacked own-block gradients form the game gradient `F(w)`, and its
//! Jacobian is the (generally nonsymmetric) game Hessian `H(w)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{block_get, norm2, BlockLayout, DenseMatrix};

pub type ObjectiveFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Own-block gradient `∇_{x_i} f_i(w)`, length `d_i`.
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Jacobian of the own-block gradient with respect to the whole of `w`,
/// shape `d_i × d`. Its block columns are the mixed blocks `∇²_{x_i x_j} f_i`.
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> DenseMatrix + Send + Sync>;

/// Relative step for the central-difference Hessian when none is given.
pub const DEFAULT_HESSIAN_FD_STEP: f64 = 1e-5;

/// Central-difference step used to synthesize a missing gradient.
fn gradient_fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// A point of the joint strategy space together with its block structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    layout: BlockLayout,
    values: Vec<f64>,
}

impl JointPoint {
    pub fn new(layout: BlockLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::Shape(format!(
                "point has {} coordinates, layout expects {}",
                values.len(),
                layout.total()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("joint point coordinate {p}")));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: BlockLayout) -> Self {
        let values = vec![0.0; layout.total()];
        Self { layout, values }
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn block(&self, player: usize) -> &[f64] {
        &self.values[self.layout.range(player)]
    }

    /// Euclidean norm of every player's block.
    pub fn block_norms(&self) -> Vec<f64> {
        block_norms(&self.layout, &self.values)
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }
}

pub(crate) fn block_norms(layout: &BlockLayout, v: &[f64]) -> Vec<f64> {
    (0..layout.players()).map(|i| norm2(&v[layout.range(i)])).collect()
}

/// How second derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Use the per-player Jacobian evaluators supplied with the game.
    Analytic,
    /// Central differences of the player gradients. The step for coordinate
    /// `q` is `step · max(1, |w_q|)`.
    FiniteDifference { step: f64 },
}

#[derive(Clone)]
struct Player {
    objective: ObjectiveFn,
    gradient: Option<GradientFn>,
    jacobian: Option<JacobianFn>,
}

/// An h-player differentiable game.
///
/// Evaluators must be pure; a `Game` is cheap to clone and can be shared
/// across threads.
#[derive(Clone)]
pub struct Game {
    layout: BlockLayout,
    players: Vec<Player>,
}

impl fmt::Debug for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Game")
            .field("layout", &self.layout.dims())
            .field("analytic_gradients", &self.players.iter().map(|p| p.gradient.is_some()).collect::<Vec<_>>())
            .field("analytic_jacobians", &self.has_analytic_jacobians())
            .finish()
    }
}

pub struct GameBuilder {
    layout: BlockLayout,
    players: Vec<Player>,
}

impl GameBuilder {
    /// Adds the next player with only an objective; its gradient is
    /// synthesized by central differences.
    pub fn player(mut self, objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.players.push(Player { objective: Arc::new(objective), gradient: None, jacobian: None });
        self
    }

    /// Adds the next player with an analytic own-block gradient.
    pub fn player_with_gradient(
        mut self,
        objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.players.push(Player {
            objective: Arc::new(objective),
            gradient: Some(Arc::new(gradient)),
            jacobian: None,
        });
        self
    }

    /// Attaches an analytic `d_i × d` Jacobian of the gradient to the most
    /// recently added player.
    pub fn with_jacobian(mut self, jacobian: impl Fn(&[f64]) -> DenseMatrix + Send + Sync + 'static) -> Self {
        if let Some(p) = self.players.last_mut() {
            p.jacobian = Some(Arc::new(jacobian));
        }
        self
    }

    pub fn build(self) -> Result<Game> {
        if self.players.len() != self.layout.players() {
            return Err(Error::InvalidArgument(format!(
                "layout has {} players but {} objectives were given",
                self.layout.players(),
                self.players.len()
            )));
        }
        Ok(Game { layout: self.layout, players: self.players })
    }
}

impl Game {
    pub fn builder(layout: BlockLayout) -> GameBuilder {
        GameBuilder { layout, players: Vec::new() }
    }

    /// Every player minimizes the same potential `phi`.
    pub fn potential(layout: BlockLayout, phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        let phi: ObjectiveFn = Arc::new(phi);
        let players =
            (0..layout.players()).map(|_| Player { objective: phi.clone(), gradient: None, jacobian: None }).collect();
        Self { layout, players }
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn players(&self) -> usize {
        self.layout.players()
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.players.iter().all(|p| p.jacobian.is_some())
    }

    /// Analytic second derivatives when every player has them, finite
    /// differences otherwise.
    pub fn preferred_derivative_mode(&self) -> DerivativeMode {
        if self.has_analytic_jacobians() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::FiniteDifference { step: DEFAULT_HESSIAN_FD_STEP }
        }
    }

    pub fn point(&self, values: Vec<f64>) -> Result<JointPoint> {
        JointPoint::new(self.layout.clone(), values)
    }

    fn check_point(&self, w: &JointPoint) -> Result<()> {
        if w.layout() != &self.layout {
            return Err(Error::Shape(format!(
                "point layout {:?} does not match game layout {:?}",
                w.layout().dims(),
                self.layout.dims()
            )));
        }
        Ok(())
    }

    pub fn objective(&self, player: usize, w: &[f64]) -> Result<f64> {
        self.layout.check_player(player)?;
        Ok((self.players[player].objective)(w))
    }

    /// `∇_{x_i} f_i(w)`, validated for length and finiteness.
    pub fn player_gradient(&self, player: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.layout.check_player(player)?;
        let p = &self.players[player];
        let g = match &p.gradient {
            Some(grad) => grad(w),
            None => self.fd_own_gradient(player, w),
        };
        if g.len() != self.layout.dim(player) {
            return Err(Error::Shape(format!(
                "player {player} gradient has length {}, expected {}",
                g.len(),
                self.layout.dim(player)
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of player {player}")));
        }
        Ok(g)
    }

    fn fd_own_gradient(&self, player: usize, w: &[f64]) -> Vec<f64> {
        let f = &self.players[player].objective;
        let mut x = w.to_vec();
        self.layout
            .range(player)
            .map(|q| {
                let orig = x[q];
                let h = gradient_fd_step(orig);
                x[q] = orig + h;
                let up = f(&x);
                x[q] = orig - h;
                let down = f(&x);
                x[q] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// The game gradient `F(w)`: all own-block gradients stacked.
    pub fn gradient(&self, w: &JointPoint) -> Result<Vec<f64>> {
        self.check_point(w)?;
        self.gradient_slice(w.values())
    }

    pub(crate) fn gradient_slice(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.players() {
            out.extend(self.player_gradient(i, w)?);
        }
        Ok(out)
    }

    /// `D(∇_{x_i} f_i)(w)`, shape `d_i × d`.
    pub fn player_jacobian(&self, player: usize, w: &[f64], mode: DerivativeMode) -> Result<DenseMatrix> {
        self.layout.check_player(player)?;
        let d = self.dim();
        let di = self.layout.dim(player);
        match mode {
            DerivativeMode::Analytic => {
                let jac = self.players[player].jacobian.as_ref().ok_or(Error::MissingSecondDerivatives(player))?;
                let m = jac(w);
                if m.shape() != (di, d) {
                    return Err(Error::Shape(format!(
                        "player {player} Jacobian has shape {:?}, expected {:?}",
                        m.shape(),
                        (di, d)
                    )));
                }
                if !m.is_finite() {
                    return Err(Error::NonFinite(format!("Jacobian of player {player}")));
                }
                Ok(m)
            }
            DerivativeMode::FiniteDifference { step } => {
                if !(step > 0.0) {
                    return Err(Error::InvalidArgument(format!("finite-difference step must be > 0, got {step}")));
                }
                let mut m = DenseMatrix::zeros(di, d);
                let mut x = w.to_vec();
                for q in 0..d {
                    let orig = x[q];
                    let h = step * orig.abs().max(1.0);
                    x[q] = orig + h;
                    let up = self.player_gradient(player, &x)?;
                    x[q] = orig - h;
                    let down = self.player_gradient(player, &x)?;
                    x[q] = orig;
                    for r in 0..di {
                        m[(r, q)] = (up[r] - down[r]) / (2.0 * h);
                    }
                }
                Ok(m)
            }
        }
    }

    /// The game Hessian `H(w) = DF(w)`.
    pub fn hessian(&self, w: &JointPoint, mode: DerivativeMode) -> Result<GameHessian> {
        self.check_point(w)?;
        self.hessian_slice(w.values(), mode)
    }

    pub(crate) fn hessian_slice(&self, w: &[f64], mode: DerivativeMode) -> Result<GameHessian> {
        let d = self.dim();
        let mut full = DenseMatrix::zeros(d, d);
        for i in 0..self.players() {
            let rows = self.player_jacobian(i, w, mode)?;
            full.set_submatrix(self.layout.offset(i), 0, &rows);
        }
        Ok(GameHessian { layout: self.layout.clone(), full })
    }

    /// First-order stationarity `‖F(w)‖₂ ≤ tol`, plus the smallest eigenvalue
    /// of each own-block Hessian `∇²_{x_i x_i} f_i(w)` for the second-order
    /// condition.
    pub fn check_first_order(&self, w: &JointPoint, tol: f64) -> Result<FirstOrderReport> {
        let g = self.gradient(w)?;
        let residual = norm2(&g);
        let min_own_eigenvalues = self.hessian(w, self.preferred_derivative_mode()).ok().map(|h| {
            (0..self.players())
                .map(|i| {
                    let b = h.block(i, i);
                    let sym = b.add(&b.transpose()).expect("square").scale(0.5);
                    sym.to_nalgebra().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
                })
                .collect()
        });
        Ok(FirstOrderReport { residual, stationary: residual <= tol, min_own_eigenvalues })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstOrderReport {
    pub residual: f64,
    pub stationary: bool,
    /// `None` when second derivatives could not be evaluated.
    pub min_own_eigenvalues: Option<Vec<f64>>,
}

impl FirstOrderReport {
    /// Every own-block Hessian is positive semidefinite up to `tol`.
    pub fn second_order_ok(&self, tol: f64) -> Option<bool> {
        self.min_own_eigenvalues.as_ref().map(|eigs| eigs.iter().all(|&e| e >= -tol))
    }
}

/// `H(w)` with block access `H_{ij} = ∇²_{x_i x_j} f_i(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameHessian {
    layout: BlockLayout,
    full: DenseMatrix,
}

impl GameHessian {
    pub fn new(layout: BlockLayout, full: DenseMatrix) -> Result<Self> {
        let d = layout.total();
        if full.shape() != (d, d) {
            return Err(Error::Shape(format!("Hessian must be {d}x{d}, got {:?}", full.shape())));
        }
        Ok(Self { layout, full })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn full(&self) -> &DenseMatrix {
        &self.full
    }

    pub fn block(&self, i: usize, j: usize) -> DenseMatrix {
        block_get(&self.full, &self.layout, i, j).expect("indices checked by caller")
    }

    /// Rows of player `i`, i.e. `D(∇_{x_i} f_i)`.
    pub fn player_rows(&self, i: usize) -> DenseMatrix {
        let r = self.layout.range(i);
        self.full.submatrix(r.start, 0, r.len(), self.layout.total())
    }
}

/// Symmetric/antisymmetric split of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SaDecomposition {
    pub symmetric: DenseMatrix,
    pub antisymmetric: DenseMatrix,
}

/// `S = ½(H + Hᵀ)`, `A = ½(H − Hᵀ)`.
///
/// Each off-diagonal pair is computed once and written to both positions, so
/// `S = Sᵀ` and `A = −Aᵀ` hold exactly.
pub fn sa_decompose(h: &GameHessian) -> SaDecomposition {
    let m = h.full();
    let d = m.rows();
    let mut s = DenseMatrix::zeros(d, d);
    let mut a = DenseMatrix::zeros(d, d);
    for p in 0..d {
        s[(p, p)] = m[(p, p)];
        for q in (p + 1)..d {
            let sym = 0.5 * (m[(p, q)] + m[(q, p)]);
            let skew = 0.5 * (m[(p, q)] - m[(q, p)]);
            s[(p, q)] = sym;
            s[(q, p)] = sym;
            a[(p, q)] = skew;
            a[(q, p)] = -skew;
        }
    }
    SaDecomposition { symmetric: s, antisymmetric: a }
}
