#![allow(dead_code)]

use multilrsga::experiments::{bilinear_game, linear_gradient_game, paper_game, random_quadratic_game, BenchmarkGame};
use multilrsga::game::Game;
use multilrsga::numerics::{BlockLayout, DenseMatrix};
use multilrsga::secant::SecantState;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every registered game, with a few random quadratic instances.
pub fn builtin_games() -> Vec<BenchmarkGame> {
    let mut v = vec![paper_game(), bilinear_game(1.0), bilinear_game(-2.5)];
    for (seed, dims) in [(0u64, vec![1, 1, 1]), (5, vec![2, 1, 2, 1]), (11, vec![3, 2])] {
        v.push(random_quadratic_game(&dims, seed, 0.5).unwrap());
    }
    v
}

/// Largest gap between each player's own gradient and a central difference
/// of its objective, relative to `max(1, |g|)`.
pub fn gradient_fd_gap(game: &Game, w: &[f64]) -> f64 {
    let layout = game.layout();
    let mut worst = 0.0f64;
    for i in 0..layout.players() {
        let g = game.player_gradient(i, w).unwrap();
        for (a, q) in layout.range(i).enumerate() {
            let h = 1e-5 * w[q].abs().max(1.0);
            let mut x = w.to_vec();
            x[q] = w[q] + h;
            let up = game.objective(i, &x).unwrap();
            x[q] = w[q] - h;
            let down = game.objective(i, &x).unwrap();
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - g[a]).abs() / g[a].abs().max(1.0));
        }
    }
    worst
}

pub fn random_dims(rng: &mut impl Rng, players: usize, max_dim: usize) -> Vec<usize> {
    (0..players).map(|_| rng.gen_range(1..=max_dim)).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Random game with constant Hessian `H`; own blocks are symmetrized.
pub fn random_linear_game(rng: &mut impl Rng, dims: &[usize]) -> (Game, DenseMatrix) {
    let layout = BlockLayout::new(dims.to_vec()).unwrap();
    let d = layout.total();
    let mut h = random_matrix(rng, d, d, 1.0);
    for i in 0..layout.players() {
        for p in layout.range(i) {
            for q in layout.range(i) {
                if q > p {
                    h[(q, p)] = h[(p, q)];
                }
            }
        }
    }
    (linear_gradient_game(&layout, &h).unwrap(), h)
}

pub fn random_secant(rng: &mut impl Rng, layout: &BlockLayout, scale: f64) -> SecantState {
    let d = layout.total();
    let ms = (0..layout.players()).map(|i| random_matrix(rng, layout.dim(i), d, scale)).collect();
    SecantState::from_matrices(layout.clone(), ms).unwrap()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Checks the secant condition and the rank of the update for one
/// non-skipped Broyden step. Returns a description of the first violation.
pub fn check_broyden_step(
    before: &SecantState,
    after: &SecantState,
    w_old: &[f64],
    w_new: &[f64],
    g_old: &[f64],
    g_new: &[f64],
) -> Result<(), String> {
    let layout = before.layout();
    let s: Vec<f64> = w_new.iter().zip(w_old).map(|(a, b)| a - b).collect();
    for i in 0..layout.players() {
        let r = layout.range(i);
        let y: Vec<f64> = r.clone().map(|q| g_new[q] - g_old[q]).collect();
        let ms = after.matrix(i).mul_vec(&s);
        let gap = ms.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gap > 1e-12 * ny.max(1.0) {
            return Err(format!("player {i}: ‖M s − y‖ = {gap:e}, ‖y‖ = {ny:e}"));
        }
        let diff = after.matrix(i).sub(before.matrix(i)).unwrap();
        let sv = singular_values(&diff);
        let scale = before.matrix(i).frobenius_norm() + after.matrix(i).frobenius_norm();
        if sv.len() > 1 && sv[1] > 1e-12 * scale.max(1.0) {
            return Err(format!("player {i}: second singular value of update {:e}", sv[1]));
        }
    }
    Ok(())
}
