//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use multilrsga::correction::{run_skew_bound_trials, SkewBoundTrialConfig, SkewCorrection};
use multilrsga::experiments::{bilinear_game, compare_solvers, paper_game, random_quadratic_game, DEFAULT_BURN_IN};
use multilrsga::game::{Game, JointPoint};
use multilrsga::numerics::BlockLayout;
use multilrsga::secant::SecantInit;
use multilrsga::solvers::{
    estimate_linear_rate, frozen_map_analysis, run_multilrsga, run_solver, run_solver_observed, step_component_form,
    step_matrix_form, LipschitzEstimate, SolverConfig, SolverKind, SolverTrace, Status,
};
use rand::Rng;

const ETA: f64 = 0.001;
const TAU: f64 = 1.0;
const TOL: f64 = 1e-6;
const BUDGET: usize = 50_000;
const SECANT_SEED: u64 = 42;
const EXACT: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct PaperRuns {
    multi: SolverTrace,
    gd: SolverTrace,
    multi_tol: Option<usize>,
    gd_tol: Option<usize>,
    multi_osc: usize,
    gd_osc: usize,
    seconds: f64,
}

fn paper_configs() -> (SolverConfig, SolverConfig) {
    let multi = SolverConfig::new(ETA, TAU)
        .with_max_iter(BUDGET)
        .with_residual_tol(TOL)
        .with_secant_init(SecantInit::Random { seed: SECANT_SEED, scale: 0.1 });
    let gd = SolverConfig::new(ETA, 0.0).with_max_iter(BUDGET).with_residual_tol(TOL);
    (multi, gd)
}

fn paper_runs() -> PaperRuns {
    let bg = paper_game();
    assert_eq!(bg.default_start.as_ref().unwrap().values(), &[1.0, -0.8, 0.9, -0.7]);
    let (multi, gd) = paper_configs();
    let t0 = Instant::now();
    let rep = compare_solvers(&bg, &multi, &gd, None).unwrap();
    let seconds = t0.elapsed().as_secs_f64();
    let m = rep.leg(SolverKind::MultiLrsga).unwrap();
    let g = rep.leg(SolverKind::GradientDescent).unwrap();
    PaperRuns {
        multi: m.trace.clone(),
        gd: g.trace.clone(),
        multi_tol: m.iterations_to_tol,
        gd_tol: g.iterations_to_tol,
        multi_osc: m.oscillations,
        gd_osc: g.oscillations,
        seconds,
    }
}

fn c1_reproduction(r: &PaperRuns) -> Outcome {
    check(
        r.multi.status == Status::Converged
            && r.gd.status == Status::Converged
            && r.multi.final_residual <= TOL
            && r.gd.final_residual <= TOL
            && r.seconds < 5.0,
        format!(
            "multilrsga {} in {} iters, gd {} in {} iters, both runs {:.2}s",
            r.multi.status, r.multi.iterations, r.gd.status, r.gd.iterations, r.seconds
        ),
    )
}

fn c2_relative(r: &PaperRuns) -> Outcome {
    let faster = matches!((r.multi_tol, r.gd_tol), (Some(m), Some(g)) if m <= g);
    let smoother = r.multi_osc < r.gd_osc;
    check(
        faster && smoother,
        format!(
            "iterations to tol {:?} vs {:?} (no more: {faster}); sign changes after burn-in {} vs {} (fewer: {smoother})",
            r.multi_tol, r.gd_tol, r.multi_osc, r.gd_osc
        ),
    )
}

fn c3_skew_bound() -> Outcome {
    let cfg = SkewBoundTrialConfig::default();
    assert_eq!(cfg.trials, 1000);
    assert_eq!(cfg.players, vec![2, 3, 4, 5]);
    let (s, _) = run_skew_bound_trials(&cfg).unwrap();
    check(
        s.passed == 1000 && s.two_player_passed == s.two_player_trials && s.two_player_trials > 0,
        format!(
            "{}/{} within (h-1)·δ, h=2: {}/{} within δ, max ratio {:.4}",
            s.passed, s.trials, s.two_player_passed, s.two_player_trials, s.max_ratio
        ),
    )
}

fn observe_secant(game: &Game, w0: &JointPoint, cfg: &SolverConfig, label: &str) -> Result<usize, String> {
    let mut checked = 0;
    let mut failure = None;
    run_solver_observed(SolverKind::MultiLrsga, game, w0, cfg, &mut |ev| {
        if ev.update_skipped == Some(false) && failure.is_none() {
            let (b, a) = (ev.secant_before.unwrap(), ev.secant_after.unwrap());
            if let Err(e) = check_broyden_step(b, a, ev.w_old, ev.w_new, ev.grad_old, ev.grad_new) {
                failure = Some(format!("{label} step {}: {e}", ev.k));
            }
            checked += 1;
        }
    })
    .map_err(|e| e.to_string())?;
    failure.map_or(Ok(checked), Err)
}

fn c4_secant_condition() -> Outcome {
    let mut total = 0;
    let bg = paper_game();
    let (multi, _) = paper_configs();
    total += observe_secant(&bg.game, bg.default_start.as_ref().unwrap(), &multi, "paper3")?;
    let bg = bilinear_game(1.0);
    let cfg = SolverConfig::new(0.1, 1.0).with_residual_tol(1e-10).with_secant_init(SecantInit::Zero);
    total += observe_secant(&bg.game, bg.default_start.as_ref().unwrap(), &cfg, "bilinear")?;
    for seed in 0..10 {
        let bg = random_quadratic_game(&[2, 1, 2, 1], seed, 1.5).unwrap();
        let cfg = SolverConfig::new(0.05, 0.5)
            .with_residual_tol(1e-10)
            .with_secant_init(SecantInit::Random { seed, scale: 0.5 });
        total += observe_secant(&bg.game, bg.default_start.as_ref().unwrap(), &cfg, "randquad")?;
    }
    Ok(format!("{total} non-skipped updates: ‖M_i s − y_i‖ ≤ 1e-12·max(1,‖y_i‖), update rank ≤ 1"))
}

fn c5_quadratic_monotone() -> Outcome {
    let mut r = rng(0x9e1);
    let mut steps = 0;
    for inst in 0..50u64 {
        let h = r.gen_range(2..=4);
        let dims = random_dims(&mut r, h, 3);
        let bg = random_quadratic_game(&dims, inst, 1.0).unwrap();
        let w0 = bg.default_start.clone().unwrap();
        let cfg = SolverConfig::new(0.02, 0.5)
            .with_max_iter(200)
            .with_residual_tol(1e-300)
            .with_secant_init(SecantInit::Random { seed: inst, scale: 0.5 })
            .with_reference(vec![0.0; w0.values().len()]);
        let t = run_multilrsga(&bg.game, &w0, &cfg).unwrap();
        if t.iterations != 200 {
            return Err(format!("instance {inst} stopped after {} iterations ({})", t.iterations, t.status));
        }
        for pair in t.records.windows(2) {
            let a = pair[0].secant_errors.as_ref().unwrap();
            let b = pair[1].secant_errors.as_ref().unwrap();
            for (i, (ea, eb)) in a.iter().zip(b).enumerate() {
                if *eb > ea + EXACT {
                    return Err(format!("instance {inst}, k={}, player {i}: {ea:e} -> {eb:e}", pair[1].k));
                }
            }
            steps += 1;
        }
    }
    Ok(format!("50 instances, {steps} steps, per-player secant errors non-increasing"))
}

fn trajectory(kind: SolverKind, game: &Game, w0: &JointPoint, cfg: &SolverConfig) -> Vec<Vec<f64>> {
    let mut points = vec![w0.values().to_vec()];
    run_solver_observed(kind, game, w0, cfg, &mut |ev| points.push(ev.w_new.to_vec())).unwrap();
    points
}

fn c6_degeneracies() -> Outcome {
    let mut notes = Vec::new();
    for bg in builtin_games() {
        let w0 = bg.default_start.clone().unwrap();
        let cfg = SolverConfig::new(0.01, 0.0).with_max_iter(1000);
        let a = trajectory(SolverKind::MultiLrsga, &bg.game, &w0, &cfg);
        let b = trajectory(SolverKind::GradientDescent, &bg.game, &w0, &cfg);
        if a != b {
            return Err(format!("{}: τ=0 trajectory differs from GD", bg.name));
        }
    }
    notes.push("τ=0 bitwise GD".to_string());

    let mut games = vec![bilinear_game(1.0), bilinear_game(0.5)];
    for seed in 0..5 {
        games.push(random_quadratic_game(&[2, 1, 2], seed, 1.5).unwrap());
    }
    let mut worst = 0.0f64;
    for bg in &games {
        let w0 = bg.default_start.clone().unwrap();
        let cfg = SolverConfig::new(0.05, 0.8).with_secant_init(SecantInit::Analytic).with_max_iter(500);
        let a = trajectory(SolverKind::MultiLrsga, &bg.game, &w0, &cfg);
        let b = trajectory(SolverKind::ExactSga, &bg.game, &w0, &cfg);
        if a.len() != b.len() {
            return Err(format!("{}: trajectory lengths {} vs {}", bg.name, a.len(), b.len()));
        }
        for (p, q) in a.iter().zip(&b) {
            for (x, y) in p.iter().zip(q) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    if worst > EXACT {
        return Err(format!("exact-secant vs exact SGA max coordinate gap {worst:e}"));
    }
    notes.push(format!("exact secant = SGA (max gap {worst:.1e})"));

    for bg in builtin_games() {
        let w_star = bg.known_equilibrium.clone().unwrap();
        for kind in SolverKind::ALL {
            let t = run_solver(kind, &bg.game, &w_star, &SolverConfig::new(0.1, 1.0)).unwrap();
            if t.final_point.values() != w_star.values() || t.status != Status::Converged {
                return Err(format!("{}: {kind} moved off the equilibrium", bg.name));
            }
        }
        let mut r = rng(1);
        let st = random_secant(&mut r, w_star.layout(), 1.0);
        let zero = vec![0.0; w_star.values().len()];
        let c = SkewCorrection::from_secant(&st);
        if step_matrix_form(w_star.values(), &zero, c.full(), 0.1, 1.0) != w_star.values() {
            return Err(format!("{}: F=0 step moved", bg.name));
        }
    }
    notes.push("F(w)=0 fixed for all solvers".to_string());
    Ok(notes.join(", "))
}

fn c7_forms_agree() -> Outcome {
    let mut r = rng(0xe89);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let h = r.gen_range(2..=5);
        let dims = random_dims(&mut r, h, 3);
        let layout = BlockLayout::new(dims.clone()).unwrap();
        let (game, _) = random_linear_game(&mut r, &dims);
        let st = random_secant(&mut r, &layout, 2.0);
        let w: Vec<f64> = (0..layout.total()).map(|_| r.gen_range(-3.0..3.0)).collect();
        let g = game.gradient(&game.point(w.clone()).unwrap()).unwrap();
        let (eta, tau) = (r.gen_range(1e-4..0.5), r.gen_range(0.0..2.0));
        let a = step_matrix_form(&w, &g, SkewCorrection::from_secant(&st).full(), eta, tau);
        let b = step_component_form(&w, &g, &st, eta, tau);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    check(worst <= EXACT, format!("100 triples, max coordinate gap {worst:.1e}"))
}

fn c8_frozen_map() -> Outcome {
    let bg = paper_game();
    let w_star = bg.known_equilibrium.clone().unwrap();
    let rep = frozen_map_analysis(&bg.game, &w_star, ETA, TAU, &LipschitzEstimate::default()).unwrap();
    check(
        rep.jacobian_norm < 1.0 && rep.step_condition_lhs < 1.0,
        format!(
            "‖DT*‖₂ = {:.6}, ρ = {:.6}, ητ(h−1)L_F = {:.6} (L_F ≈ {:.4})",
            rep.jacobian_norm, rep.spectral_radius, rep.step_condition_lhs, rep.lf_estimate
        ),
    )
}

fn c9_rate(r: &PaperRuns) -> Outcome {
    match estimate_linear_rate(&r.multi, DEFAULT_BURN_IN) {
        Ok(fit) => check(
            fit.q_hat < 1.0 && fit.r_squared >= 0.99,
            format!("q_hat = {:.6}, r² = {:.6} over {} points", fit.q_hat, fit.r_squared, fit.points),
        ),
        Err(e) => Err(e.to_string()),
    }
}

fn c10_gradients() -> Outcome {
    let mut worst = 0.0f64;
    let games = builtin_games();
    for (gi, bg) in games.iter().enumerate() {
        let mut r = rng(100 + gi as u64);
        for _ in 0..20 {
            let w: Vec<f64> = (0..bg.game.dim()).map(|_| r.gen_range(-2.0..2.0)).collect();
            worst = worst.max(gradient_fd_gap(&bg.game, &w));
        }
    }
    check(worst <= 1e-6, format!("{} games x 20 points, max relative gap {worst:.1e}", games.len()))
}

fn c11_determinism() -> Outcome {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/paper3.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = Command::new(env!("CARGO_BIN_EXE_multilrsga"))
            .args(["run", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "--emit", "csv"])
            .output()
            .unwrap();
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
    }
    let mut bytes = 0;
    for f in ["trace_multilrsga.csv", "trace_gd.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
        bytes += a.len();
    }
    Ok(format!("two runs of the bundled paper3 config, {bytes} CSV bytes identical"))
}

fn main() {
    let runs = catch_unwind(paper_runs);
    let paper = |f: fn(&PaperRuns) -> Outcome| -> Outcome {
        match &runs {
            Ok(r) => f(r),
            Err(_) => Err("paper-game runs panicked".into()),
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("paper-game reproduction", Box::new(|| paper(c1_reproduction))),
        ("relative performance vs GD", Box::new(|| paper(c2_relative))),
        ("skew-error bound trials", Box::new(c3_skew_bound)),
        ("secant condition", Box::new(c4_secant_condition)),
        ("quadratic secant errors non-increasing", Box::new(c5_quadratic_monotone)),
        ("degeneracies", Box::new(c6_degeneracies)),
        ("matrix and component steps agree", Box::new(c7_forms_agree)),
        ("frozen-map diagnostic", Box::new(c8_frozen_map)),
        ("linear-rate fit", Box::new(|| paper(c9_rate))),
        ("gradient correctness", Box::new(c10_gradients)),
        ("determinism", Box::new(c11_determinism)),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let n = i + 1;
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {n:>2} {name}: {detail}");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
