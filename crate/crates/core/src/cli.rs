//! Command-line front end.
//!
//! ```text
//! multilrsga run --config FILE [--out DIR] [--seed N] [--emit csv,json,svg] [--dump-secant]
//! multilrsga verify GAME --eta ETA --tau TAU [--trials N] [--seed N]
//! multilrsga sweep [GAME] --eta LIST --tau LIST [--config FILE] [--jobs N] [--out FILE]
//! multilrsga list-games
//! ```
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 on runtime failure. A
//! diverged solver is not a failure; its status is written to the report.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{parse_with_seed, Emit, RunConfig};
use crate::correction::{run_skew_bound_trials, SkewBoundTrialConfig};
use crate::experiments::{compare, BenchmarkGame, ComparisonReport, GameSpec, DEFAULT_BURN_IN, REGISTRY};
use crate::game::JointPoint;
use crate::plot::{Chart, Series};
use crate::report::{secant_json, write_trace_csv, GameSummary, RunReport};
use crate::secant::{SecantInit, DEFAULT_RANDOM_SCALE};
use crate::solvers::{
    estimate_linear_rate, frozen_map_analysis, run_solver, LipschitzEstimate, SolverConfig, SolverKind, SolverTrace,
    DEFAULT_LF_RADIUS, DEFAULT_LF_SAMPLES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "multilrsga", version, about = "Low-rank symplectic gradient adjustment for h-player games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the solvers listed in a config file and write traces, plots and a report.
    Run(RunArgs),
    /// Print frozen-map contraction diagnostics and the randomized skew-bound check.
    Verify(VerifyArgs),
    /// Run MultiLRSGA over an (eta, tau) grid and write one CSV row per cell.
    Sweep(SweepArgs),
    /// List the built-in games.
    ListGames,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of csv, json, svg.
    #[arg(long, value_delimiter = ',')]
    pub emit: Option<Vec<String>>,
    /// Also write the final secant matrices as JSON.
    #[arg(long)]
    pub dump_secant: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GameArgs {
    /// Coupling constant of the bilinear game.
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    /// Block sizes of the random quadratic game.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    pub dims: Vec<usize>,
    /// Stability margin of the random quadratic game.
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub game: String,
    #[arg(long)]
    pub eta: f64,
    #[arg(long)]
    pub tau: f64,
    /// Number of randomized skew-bound trials.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Seeds the trials, the L_F sampling and the random quadratic game.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_LF_RADIUS)]
    pub lf_radius: f64,
    #[arg(long, default_value_t = DEFAULT_LF_SAMPLES)]
    pub lf_samples: usize,
    #[command(flatten)]
    pub game_args: GameArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Game name; taken from the config when `--config` is given.
    pub game: Option<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eta: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub tau: Vec<f64>,
    /// Base game, start point and MultiLRSGA settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub residual_tol: f64,
    #[command(flatten)]
    pub game_args: GameArgs,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::UnknownGame(_) | crate::Error::InvalidArgument(_) | crate::Error::Shape(_) => {
                CliError::invalid(e.to_string())
            }
            other => CliError::runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command,
/// returning the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Run(a) => cmd_run(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::ListGames => {
            for (name, desc) in REGISTRY {
                writeln!(out, "{name:<10} {desc}").map_err(io_err)?;
            }
            Ok(())
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::runtime(e.to_string())
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_with_seed(&text, seed).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn game_spec(name: &str, g: &GameArgs, seed: u64) -> CliResult<GameSpec> {
    match name {
        "paper3" => Ok(GameSpec::Paper3),
        "bilinear" => Ok(GameSpec::Bilinear { coupling: g.coupling }),
        "randquad" => Ok(GameSpec::RandQuad { dims: g.dims.clone(), seed, margin: g.margin }),
        other => Err(CliError::invalid(crate::Error::UnknownGame(other.to_string()).to_string())),
    }
}

fn game_summary(bg: &BenchmarkGame) -> GameSummary {
    GameSummary {
        name: bg.name.clone(),
        layout: bg.game.layout().dims().to_vec(),
        known_equilibrium: bg.known_equilibrium.as_ref().map(|w| w.values().to_vec()),
        note: bg.note.clone(),
    }
}

/// Files written by [`write_artifacts`], in creation order.
pub fn write_artifacts(
    dir: &Path,
    bg: &BenchmarkGame,
    cmp: &ComparisonReport,
    seed: u64,
    emit: Emit,
    dump_secant: bool,
) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> CliResult<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display())))?;
        written.push(p);
        Ok(())
    };
    if emit.csv {
        for leg in &cmp.legs {
            let mut buf = Vec::new();
            write_trace_csv(&leg.trace, &mut buf).map_err(|e| CliError::runtime(e.to_string()))?;
            put(format!("trace_{}.csv", leg.kind), &buf)?;
        }
    }
    if emit.json {
        let report = RunReport::from_comparison(cmp, game_summary(bg), seed);
        let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::runtime(e.to_string()))?;
        text.push('\n');
        put("report.json".into(), text.as_bytes())?;
    }
    if emit.svg {
        put(
            "residuals.svg".into(),
            residual_chart(&bg.name, &cmp.legs.iter().map(|l| &l.trace).collect::<Vec<_>>()).as_bytes(),
        )?;
        for leg in &cmp.legs {
            put(format!("components_{}.svg", leg.kind), component_chart(&bg.name, &leg.trace).as_bytes())?;
        }
    }
    if dump_secant {
        for leg in &cmp.legs {
            if let Some(st) = &leg.trace.final_secant {
                let text = secant_json(st).map_err(|e| CliError::runtime(e.to_string()))?;
                put(format!("secant_{}.json", leg.kind), text.as_bytes())?;
            }
        }
    }
    Ok(written)
}

fn residual_chart(game: &str, traces: &[&SolverTrace]) -> String {
    Chart {
        title: format!("{game}: residual"),
        x_label: "iteration k".into(),
        y_label: "‖F(w_k)‖".into(),
        log_y: true,
        series: traces
            .iter()
            .map(|t| {
                let ks: Vec<usize> = t.records.iter().map(|r| r.k).collect();
                Series::new(t.solver.as_str(), &ks, &t.residuals())
            })
            .collect(),
    }
    .to_svg()
}

fn component_chart(game: &str, trace: &SolverTrace) -> String {
    let ks: Vec<usize> = trace.records.iter().map(|r| r.k).collect();
    Chart {
        title: format!("{game}: block norms ({})", trace.solver),
        x_label: "iteration k".into(),
        y_label: "‖x_i‖".into(),
        log_y: false,
        series: trace
            .block_norm_series()
            .iter()
            .enumerate()
            .map(|(i, s)| Series::new(format!("x{}", i + 1), &ks, s))
            .collect(),
    }
    .to_svg()
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = load_config(&a.config, a.seed)?;
    if let Some(list) = &a.emit {
        cfg.emit = Emit::parse_list(list).map_err(|m| CliError::invalid(format!("--emit: {m}")))?;
    }
    let dir = a.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::invalid(format!("cannot create output directory {}: {e}", dir.display())))?;
    let (bg, w0) = cfg.instantiate()?;
    let legs = cfg.legs(&bg)?;
    let cmp = compare(&bg, &w0, &legs, cfg.burn_in)?;
    let files = write_artifacts(&dir, &bg, &cmp, cfg.seed, cfg.emit, cfg.dump_secant || a.dump_secant)?;
    for leg in &cmp.legs {
        writeln!(
            out,
            "solver={} status={} iterations={} final_residual={:e} iterations_to_tol={}",
            leg.kind,
            leg.trace.status,
            leg.trace.iterations,
            leg.trace.final_residual,
            leg.iterations_to_tol.map_or("none".into(), |k| k.to_string())
        )
        .map_err(io_err)?;
    }
    for f in files {
        writeln!(out, "wrote {}", f.display()).map_err(io_err)?;
    }
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> CliResult<()> {
    let bg = game_spec(&a.game, &a.game_args, a.seed)?.build()?;
    let w_star = bg
        .known_equilibrium
        .clone()
        .ok_or_else(|| CliError::invalid(format!("game {} has no known equilibrium", bg.name)))?;
    let lf = LipschitzEstimate::Sampled { radius: a.lf_radius, samples: a.lf_samples, seed: a.seed };
    let fm = frozen_map_analysis(&bg.game, &w_star, a.eta, a.tau, &lf)?;
    let (bound, _) =
        run_skew_bound_trials(&SkewBoundTrialConfig { trials: a.trials, seed: a.seed, ..Default::default() })?;
    let lines = [
        format!("game={}", bg.name),
        format!("players={}", fm.players),
        format!("eta={}", fm.eta),
        format!("tau={}", fm.tau),
        format!("jacobian_norm={:.12}", fm.jacobian_norm),
        format!("spectral_radius={:.12}", fm.spectral_radius),
        format!("contractive={}", fm.contractive),
        format!("lf_estimate={:.12}", fm.lf_estimate),
        format!("step_condition_lhs={:.12}", fm.step_condition_lhs),
        format!("step_condition={}", if fm.step_condition_holds { "satisfied" } else { "violated" }),
        format!("skew_bound_trials={}", bound.trials),
        format!("bound_passed={}", bound.passed),
        format!("bound_two_player={}/{}", bound.two_player_passed, bound.two_player_trials),
        format!("bound_max_ratio={:.6}", bound.max_ratio),
    ];
    for l in lines {
        writeln!(out, "{l}").map_err(io_err)?;
    }
    Ok(())
}

/// One row of the sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub eta: f64,
    pub tau: f64,
    pub status: String,
    pub iterations: Option<usize>,
    pub q_hat: Option<f64>,
}

/// Grid of `(eta, tau)` cells sharing every other solver setting.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub kind: SolverKind,
    pub base: SolverConfig,
    pub etas: Vec<f64>,
    pub taus: Vec<f64>,
    pub burn_in: usize,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

/// Runs one solver per cell, in row-major order of the grid.
pub fn run_sweep(bg: &BenchmarkGame, w0: &JointPoint, grid: &SweepGrid) -> CliResult<Vec<SweepCell>> {
    let SweepGrid { kind, base, etas, taus, burn_in, jobs } = grid;
    let (kind, burn_in) = (*kind, *burn_in);
    if etas.is_empty() || taus.is_empty() {
        return Err(CliError::invalid("eta and tau grids must be nonempty"));
    }
    let grid: Vec<(f64, f64)> = etas.iter().flat_map(|&e| taus.iter().map(move |&t| (e, t))).collect();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(*jobs).build().map_err(|e| CliError::runtime(e.to_string()))?;
    let cells = pool.install(|| {
        grid.par_iter()
            .map(|&(eta, tau)| {
                let cfg = SolverConfig { eta, tau, ..base.clone() };
                match run_solver(kind, &bg.game, w0, &cfg) {
                    Ok(t) => SweepCell {
                        eta,
                        tau,
                        status: t.status.to_string(),
                        iterations: Some(t.iterations),
                        q_hat: estimate_linear_rate(&t, burn_in).ok().map(|r| r.q_hat),
                    },
                    Err(e) => SweepCell { eta, tau, status: format!("error: {e}"), iterations: None, q_hat: None },
                }
            })
            .collect()
    });
    Ok(cells)
}

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eta", "tau", "status", "iters", "q_hat"])?;
    for c in cells {
        w.write_record([
            format!("{:e}", c.eta),
            format!("{:e}", c.tau),
            c.status.clone(),
            c.iterations.map_or(String::new(), |k| k.to_string()),
            c.q_hat.map_or(String::new(), |q| format!("{q:e}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let (bg, w0, base, burn_in) = match &a.config {
        Some(path) => {
            let cfg = load_config(path, a.seed)?;
            let (bg, w0) = cfg.instantiate()?;
            let legs = cfg.legs(&bg)?;
            let base = legs
                .iter()
                .find(|(k, _)| *k == SolverKind::MultiLrsga)
                .or(legs.first())
                .map(|(_, c)| c.clone())
                .expect("validated config has a solver");
            (bg, w0, base, cfg.burn_in)
        }
        None => {
            let name = a.game.as_deref().ok_or_else(|| CliError::invalid("sweep needs a GAME or --config"))?;
            let seed = a.seed.unwrap_or(0);
            let bg = game_spec(name, &a.game_args, seed)?.build()?;
            let w0 = bg
                .default_start
                .clone()
                .ok_or_else(|| CliError::invalid(format!("game {} has no default start", bg.name)))?;
            let base = SolverConfig::new(1.0, 1.0)
                .with_max_iter(a.max_iter)
                .with_residual_tol(a.residual_tol)
                .with_secant_init(SecantInit::Random { seed, scale: DEFAULT_RANDOM_SCALE });
            (bg, w0, base, DEFAULT_BURN_IN)
        }
    };
    for (name, grid) in [("--eta", &a.eta), ("--tau", &a.tau)] {
        if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CliError::invalid(format!("{name} values must be finite and >= 0")));
        }
    }
    let grid = SweepGrid {
        kind: SolverKind::MultiLrsga,
        base,
        etas: a.eta.clone(),
        taus: a.tau.clone(),
        burn_in,
        jobs: a.jobs,
    };
    let cells = run_sweep(&bg, &w0, &grid)?;
    match &a.out {
        Some(p) => {
            let f = std::fs::File::create(p)
                .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display())))?;
            write_sweep_csv(&cells, f).map_err(|e| CliError::runtime(e.to_string()))?;
            writeln!(out, "wrote {}", p.display()).map_err(io_err)?;
        }
        None => write_sweep_csv(&cells, &mut *out).map_err(|e| CliError::runtime(e.to_string()))?,
    }
    Ok(())
}
