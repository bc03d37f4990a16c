//! Built-in benchmark games and side-by-side solver comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Game, JointPoint};
use crate::numerics::{BlockLayout, DenseMatrix};
use crate::solvers::{estimate_linear_rate, run_solver, sign_changes, RateFit, SolverConfig, SolverKind, SolverTrace};

/// Burn-in used for rate fits and the oscillation proxy unless configured.
pub const DEFAULT_BURN_IN: usize = 100;

#[derive(Debug, Clone)]
pub struct BenchmarkGame {
    pub name: String,
    pub game: Game,
    pub known_equilibrium: Option<JointPoint>,
    pub default_start: Option<JointPoint>,
    pub note: String,
}

#[inline]
fn sech2(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

/// The three-player tanh-coupled game.
///
/// Player 1 owns `(x1, x2)`, player 2 owns `y`, player 3 owns `z`:
///
/// ```text
/// f1 = ½(x1² + x2²) + x1 tanh y + 0.9 x2 tanh z
/// f2 = ½ y² − y tanh x1 + 0.8 y tanh z
/// f3 = ½ z² − 0.9 z tanh x2 − 0.8 z tanh y
/// ```
pub fn paper_game() -> BenchmarkGame {
    let layout = BlockLayout::new(vec![2, 1, 1]).expect("static layout");
    let game = Game::builder(layout.clone())
        .player_with_gradient(
            |w| 0.5 * (w[0] * w[0] + w[1] * w[1]) + w[0] * w[2].tanh() + 0.9 * w[1] * w[3].tanh(),
            |w| vec![w[0] + w[2].tanh(), w[1] + 0.9 * w[3].tanh()],
        )
        .with_jacobian(|w| {
            DenseMatrix::from_rows(&[&[1.0, 0.0, sech2(w[2]), 0.0], &[0.0, 1.0, 0.0, 0.9 * sech2(w[3])]])
        })
        .player_with_gradient(
            |w| 0.5 * w[2] * w[2] - w[2] * w[0].tanh() + 0.8 * w[2] * w[3].tanh(),
            |w| vec![w[2] - w[0].tanh() + 0.8 * w[3].tanh()],
        )
        .with_jacobian(|w| DenseMatrix::from_rows(&[&[-sech2(w[0]), 0.0, 1.0, 0.8 * sech2(w[3])]]))
        .player_with_gradient(
            |w| 0.5 * w[3] * w[3] - 0.9 * w[3] * w[1].tanh() - 0.8 * w[3] * w[2].tanh(),
            |w| vec![w[3] - 0.9 * w[1].tanh() - 0.8 * w[2].tanh()],
        )
        .with_jacobian(|w| DenseMatrix::from_rows(&[&[0.0, -0.9 * sech2(w[1]), -0.8 * sech2(w[2]), 1.0]]))
        .build()
        .expect("three players");
    BenchmarkGame {
        name: "paper3".into(),
        known_equilibrium: Some(JointPoint::zeros(layout.clone())),
        default_start: Some(JointPoint::new(layout, vec![1.0, -0.8, 0.9, -0.7]).expect("finite")),
        game,
        note: "three tanh-coupled players, layout (2,1,1), equilibrium at the origin".into(),
    }
}

/// `f1 = c·x·y`, `f2 = −c·x·y`: a purely rotational game.
pub fn bilinear_game(coupling: f64) -> BenchmarkGame {
    let c = coupling;
    let layout = BlockLayout::new(vec![1, 1]).expect("static layout");
    let game = Game::builder(layout.clone())
        .player_with_gradient(move |w| c * w[0] * w[1], move |w| vec![c * w[1]])
        .with_jacobian(move |_| DenseMatrix::from_rows(&[&[0.0, c]]))
        .player_with_gradient(move |w| -c * w[0] * w[1], move |w| vec![-c * w[0]])
        .with_jacobian(move |_| DenseMatrix::from_rows(&[&[-c, 0.0]]))
        .build()
        .expect("two players");
    BenchmarkGame {
        name: "bilinear".into(),
        known_equilibrium: Some(JointPoint::zeros(layout.clone())),
        default_start: Some(JointPoint::new(layout, vec![1.0, 1.0]).expect("finite")),
        game,
        note: format!("bilinear zero-sum game with coupling {c}"),
    }
}

/// Smallest singular value below which a generated quadratic game is
/// rejected as singular.
const SINGULAR_TOL: f64 = 1e-8;
const MAX_REGENERATIONS: u64 = 64;

/// `f_i = ½ x_iᵀ P_i x_i + x_iᵀ Σ_{j≠i} B_ij x_j` with `P_i ⪰ margin·I`.
///
/// The game Hessian is constant. If the drawn Hessian is numerically
/// singular the next seed is tried; the seed actually used is reported in
/// the note.
pub fn random_quadratic_game(dims: &[usize], seed: u64, stability_margin: f64) -> Result<BenchmarkGame> {
    if !(stability_margin > 0.0) {
        return Err(Error::InvalidArgument(format!("stability margin must be > 0, got {stability_margin}")));
    }
    let layout = BlockLayout::new(dims.to_vec())?;
    let d = layout.total();
    for attempt in 0..MAX_REGENERATIONS {
        let used = seed.wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(used);
        let mut h = DenseMatrix::zeros(d, d);
        for i in 0..layout.players() {
            let di = layout.dim(i);
            let g = DenseMatrix::from_fn(di, di, |_, _| rng.gen_range(-1.0..1.0));
            let p = g
                .matmul(&g.transpose())?
                .scale(1.0 / di as f64)
                .add(&DenseMatrix::identity(di).scale(stability_margin))?;
            h.set_submatrix(layout.offset(i), layout.offset(i), &p);
            for j in (0..layout.players()).filter(|&j| j != i) {
                let b = DenseMatrix::from_fn(di, layout.dim(j), |_, _| rng.gen_range(-1.0..1.0));
                h.set_submatrix(layout.offset(i), layout.offset(j), &b);
            }
        }
        let smallest = h.to_nalgebra().singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
        if smallest <= SINGULAR_TOL {
            continue;
        }
        let start: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let game = linear_gradient_game(&layout, &h)?;
        let mut note = format!("random quadratic game, dims {dims:?}, seed {used}");
        if used != seed {
            note.push_str(&format!(" (regenerated from seed {seed}: singular Hessian)"));
        }
        return Ok(BenchmarkGame {
            name: "randquad".into(),
            game,
            known_equilibrium: Some(JointPoint::zeros(layout.clone())),
            default_start: Some(JointPoint::new(layout, start)?),
            note,
        });
    }
    Err(Error::InvalidArgument(format!("no nonsingular quadratic game within {MAX_REGENERATIONS} seeds from {seed}")))
}

/// A game whose stacked gradient is `F(w) = H w`, with objectives
/// `f_i = ½ x_iᵀ H_ii x_i + x_iᵀ Σ_{j≠i} H_ij x_j`. Own blocks of `H` must be
/// symmetric for the objectives to match the gradients.
pub fn linear_gradient_game(layout: &BlockLayout, h: &DenseMatrix) -> Result<Game> {
    let d = layout.total();
    if h.shape() != (d, d) {
        return Err(Error::Shape(format!("Hessian must be {d}x{d}, got {:?}", h.shape())));
    }
    let mut b = Game::builder(layout.clone());
    for i in 0..layout.players() {
        let range = layout.range(i);
        let rows = h.submatrix(range.start, 0, range.len(), d);
        let own = h.submatrix(range.start, range.start, range.len(), range.len());
        let r_obj = range.clone();
        let rows_obj = rows.clone();
        let rows_grad = rows.clone();
        b = b
            .player_with_gradient(
                move |w| {
                    let x = &w[r_obj.clone()];
                    let full = rows_obj.mul_vec(w);
                    let own_part = own.mul_vec(x);
                    // xᵀ(H_i w) counts the own block fully; remove half of it.
                    crate::numerics::dot(x, &full) - 0.5 * crate::numerics::dot(x, &own_part)
                },
                move |w| rows_grad.mul_vec(w),
            )
            .with_jacobian(move |_| rows.clone());
    }
    b.build()
}

/// Which built-in game to construct, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GameSpec {
    #[serde(rename = "paper3")]
    Paper3,
    Bilinear {
        coupling: f64,
    },
    #[serde(rename = "randquad")]
    RandQuad {
        dims: Vec<usize>,
        seed: u64,
        margin: f64,
    },
}

impl GameSpec {
    pub fn build(&self) -> Result<BenchmarkGame> {
        match self {
            GameSpec::Paper3 => Ok(paper_game()),
            GameSpec::Bilinear { coupling } => Ok(bilinear_game(*coupling)),
            GameSpec::RandQuad { dims, seed, margin } => random_quadratic_game(dims, *seed, *margin),
        }
    }
}

/// Registered game names with a one-line description.
pub const REGISTRY: [(&str, &str); 3] = [
    ("paper3", "three tanh-coupled players, layout (2,1,1), equilibrium 0"),
    ("bilinear", "two-player bilinear zero-sum game f1 = c·x·y, f2 = −c·x·y (param: coupling)"),
    ("randquad", "seeded random quadratic game (params: dims, seed, margin)"),
];

#[derive(Debug, Clone)]
pub struct ComparisonLeg {
    pub kind: SolverKind,
    pub config: SolverConfig,
    pub trace: SolverTrace,
    pub rate: std::result::Result<RateFit, String>,
    pub iterations_to_tol: Option<usize>,
    /// Sign changes of successive residual differences after burn-in.
    pub oscillations: usize,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub game: String,
    pub start: JointPoint,
    pub burn_in: usize,
    pub legs: Vec<ComparisonLeg>,
}

impl ComparisonReport {
    pub fn leg(&self, kind: SolverKind) -> Option<&ComparisonLeg> {
        self.legs.iter().find(|l| l.kind == kind)
    }
}

/// Runs every `(solver, config)` leg from the same start point. Legs run on
/// separate threads; divergence is reported through each trace's status.
pub fn compare(
    bg: &BenchmarkGame,
    w0: &JointPoint,
    legs: &[(SolverKind, SolverConfig)],
    burn_in: usize,
) -> Result<ComparisonReport> {
    if let Some((_, first)) = legs.first() {
        for (kind, cfg) in legs {
            if cfg.residual_tol != first.residual_tol || cfg.max_iter != first.max_iter {
                return Err(Error::InvalidArgument(format!(
                    "solver {kind} does not share residual_tol/max_iter with the other legs"
                )));
            }
        }
    }
    let results: Vec<Result<SolverTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            legs.iter().map(|(kind, cfg)| scope.spawn(move || run_solver(*kind, &bg.game, w0, cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(legs.len());
    for ((kind, cfg), trace) in legs.iter().zip(results) {
        let trace = trace?;
        let rate = estimate_linear_rate(&trace, burn_in).map_err(|e| e.to_string());
        out.push(ComparisonLeg {
            kind: *kind,
            config: cfg.clone(),
            iterations_to_tol: trace.iterations_to(cfg.residual_tol),
            oscillations: sign_changes(&trace.residuals(), burn_in),
            rate,
            trace,
        });
    }
    Ok(ComparisonReport { game: bg.name.clone(), start: w0.clone(), burn_in, legs: out })
}

/// MultiLRSGA against gradient descent, and optionally exact SGA, from the
/// game's default start.
pub fn compare_solvers(
    bg: &BenchmarkGame,
    cfg_multi: &SolverConfig,
    cfg_gd: &SolverConfig,
    cfg_sga: Option<&SolverConfig>,
) -> Result<ComparisonReport> {
    let w0 = bg
        .default_start
        .clone()
        .ok_or_else(|| Error::InvalidArgument(format!("game {} has no default start", bg.name)))?;
    let mut legs = vec![(SolverKind::MultiLrsga, cfg_multi.clone()), (SolverKind::GradientDescent, cfg_gd.clone())];
    if let Some(c) = cfg_sga {
        legs.push((SolverKind::ExactSga, c.clone()));
    }
    compare(bg, &w0, &legs, DEFAULT_BURN_IN)
}
