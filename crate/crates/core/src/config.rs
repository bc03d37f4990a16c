//! Run configuration files.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! seed = 42
//! out = "out/paper3"
//! emit = ["csv", "json", "svg"]
//! burn_in = 100
//! max_iter = 50000
//! residual_tol = 1e-6
//!
//! [game]
//! name = "paper3"
//!
//! [[solver]]
//! kind = "multilrsga"
//! eta = 0.001
//! tau = 1.0
//! secant_init = "random"
//!
//! [[solver]]
//! kind = "gd"
//! eta = 0.001
//! ```
//!
//! Validation errors carry the offending field and, where the value came
//! from the file, its line and column.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::experiments::{BenchmarkGame, GameSpec, DEFAULT_BURN_IN, REGISTRY};
use crate::game::JointPoint;
use crate::secant::{SecantInit, DEFAULT_RANDOM_SCALE};
use crate::solvers::{SolverConfig, SolverKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
    /// 1-based line and column.
    pub position: Option<(usize, usize)>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, col)) => write!(f, "line {line}, column {col}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emit {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self { csv: true, json: true, svg: true }
    }
}

impl Emit {
    pub fn parse_list<S: AsRef<str>>(items: &[S]) -> Result<Self, String> {
        let mut e = Emit { csv: false, json: false, svg: false };
        for item in items {
            match item.as_ref().trim() {
                "csv" => e.csv = true,
                "json" => e.json = true,
                "svg" => e.svg = true,
                "" => {}
                other => return Err(format!("unknown emit target `{other}` (expected csv, json or svg)")),
            }
        }
        Ok(e)
    }
}

#[derive(Debug, Clone)]
pub struct SolverEntry {
    pub kind: SolverKind,
    pub config: SolverConfig,
    /// Record skew and secant errors against the game's known equilibrium.
    pub track_reference: bool,
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub game: GameSpec,
    pub start: Option<Vec<f64>>,
    pub solvers: Vec<SolverEntry>,
    pub out: Option<PathBuf>,
    pub emit: Emit,
    pub burn_in: usize,
    pub dump_secant: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: "<file>".into(),
            message: format!("cannot read {}: {e}", path.display()),
            position: None,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        parse_with_seed(text, None)
    }

    /// Builds the benchmark and the start point.
    pub fn instantiate(&self) -> crate::Result<(BenchmarkGame, JointPoint)> {
        let bg = self.game.build()?;
        let start = match &self.start {
            Some(v) => bg.game.point(v.clone())?,
            None => bg
                .default_start
                .clone()
                .ok_or_else(|| crate::Error::InvalidArgument(format!("game {} has no default start", bg.name)))?,
        };
        Ok((bg, start))
    }

    /// Solver legs with reference tracking resolved against the game's known
    /// equilibrium.
    pub fn legs(&self, bg: &BenchmarkGame) -> crate::Result<Vec<(SolverKind, SolverConfig)>> {
        self.solvers
            .iter()
            .map(|e| {
                let mut c = e.config.clone();
                if e.track_reference {
                    let w = bg.known_equilibrium.as_ref().ok_or_else(|| {
                        crate::Error::InvalidArgument(format!("game {} has no known equilibrium to track", bg.name))
                    })?;
                    c.reference = Some(w.values().to_vec());
                }
                Ok((e.kind, c))
            })
            .collect()
    }
}

/// Parses `text`, letting `seed_override` replace the file's seed before any
/// seeded values are derived from it.
pub fn parse_with_seed(text: &str, seed_override: Option<u64>) -> Result<RunConfig, ConfigError> {
    let raw: RawRunConfig = toml::from_str(text).map_err(|e| ConfigError {
        field: "<syntax>".into(),
        message: e.message().to_string(),
        position: e.span().map(|s| line_col(text, s.start)),
    })?;
    raw.validate(text, seed_override)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    seed: Option<u64>,
    out: Option<String>,
    emit: Option<Spanned<Vec<String>>>,
    burn_in: Option<usize>,
    max_iter: Option<Spanned<usize>>,
    residual_tol: Option<Spanned<f64>>,
    dump_secant: Option<bool>,
    game: Spanned<RawGame>,
    #[serde(rename = "solver", default)]
    solvers: Vec<RawSolver>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    name: Spanned<String>,
    coupling: Option<Spanned<f64>>,
    dims: Option<Spanned<Vec<usize>>>,
    margin: Option<Spanned<f64>>,
    seed: Option<u64>,
    start: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    kind: Spanned<String>,
    eta: Spanned<f64>,
    tau: Option<Spanned<f64>>,
    secant_init: Option<Spanned<String>>,
    secant_scale: Option<Spanned<f64>>,
    secant_seed: Option<u64>,
    skip_tol: Option<Spanned<f64>>,
    record_every: Option<Spanned<usize>>,
    track_reference: Option<bool>,
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, field: impl Into<String>, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError { field: field.into(), message: message.into(), position: Some(line_col(self.text, span.start)) }
    }
}

impl RawRunConfig {
    fn validate(self, text: &str, seed_override: Option<u64>) -> Result<RunConfig, ConfigError> {
        let cx = Ctx { text };
        let seed = seed_override.or(self.seed).unwrap_or(0);

        let game_span = self.game.span();
        let raw_game = self.game.into_inner();
        let name = raw_game.name.get_ref().as_str();
        let game = match name {
            "paper3" => GameSpec::Paper3,
            "bilinear" => {
                let coupling = match &raw_game.coupling {
                    Some(c) if !c.get_ref().is_finite() => {
                        return Err(cx.err("game.coupling", c.span(), "must be finite"))
                    }
                    Some(c) => *c.get_ref(),
                    None => 1.0,
                };
                GameSpec::Bilinear { coupling }
            }
            "randquad" => {
                let dims = match &raw_game.dims {
                    Some(d) if d.get_ref().is_empty() || d.get_ref().contains(&0) => {
                        return Err(cx.err("game.dims", d.span(), "must be a nonempty list of positive sizes"))
                    }
                    Some(d) => d.get_ref().clone(),
                    None => vec![1, 1, 1],
                };
                let margin = match &raw_game.margin {
                    Some(m) if !(*m.get_ref() > 0.0) => return Err(cx.err("game.margin", m.span(), "must be > 0")),
                    Some(m) => *m.get_ref(),
                    None => 0.5,
                };
                GameSpec::RandQuad { dims, seed: raw_game.seed.unwrap_or(seed), margin }
            }
            other => {
                let known: Vec<&str> = REGISTRY.iter().map(|(n, _)| *n).collect();
                return Err(cx.err(
                    "game.name",
                    raw_game.name.span(),
                    format!("unknown game `{other}` (known: {})", known.join(", ")),
                ));
            }
        };
        let start = raw_game.start.map(|s| (s.span(), s.into_inner()));
        if let Some((span, v)) = &start {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(cx.err("game.start", span.clone(), "all coordinates must be finite"));
            }
        }

        let max_iter = match &self.max_iter {
            Some(m) if *m.get_ref() == 0 => return Err(cx.err("max_iter", m.span(), "must be >= 1")),
            Some(m) => *m.get_ref(),
            None => 50_000,
        };
        let residual_tol = match &self.residual_tol {
            Some(t) if !(*t.get_ref() > 0.0) => return Err(cx.err("residual_tol", t.span(), "must be > 0")),
            Some(t) => *t.get_ref(),
            None => 1e-6,
        };
        let emit = match &self.emit {
            Some(e) => Emit::parse_list(e.get_ref()).map_err(|m| cx.err("emit", e.span(), m))?,
            None => Emit::default(),
        };

        if self.solvers.is_empty() {
            return Err(cx.err("solver", game_span, "at least one [[solver]] table is required"));
        }
        let mut solvers = Vec::with_capacity(self.solvers.len());
        for (idx, s) in self.solvers.into_iter().enumerate() {
            let f = |name: &str| format!("solver[{idx}].{name}");
            let kind: SolverKind =
                s.kind.get_ref().parse().map_err(|e: crate::Error| cx.err(f("kind"), s.kind.span(), e.to_string()))?;
            if solvers.iter().any(|e: &SolverEntry| e.kind == kind) {
                return Err(cx.err(f("kind"), s.kind.span(), format!("solver `{kind}` listed twice")));
            }
            let eta = *s.eta.get_ref();
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(cx.err(f("eta"), s.eta.span(), "must be a finite value > 0"));
            }
            let tau = match &s.tau {
                Some(t) if !(*t.get_ref() >= 0.0 && t.get_ref().is_finite()) => {
                    return Err(cx.err(f("tau"), t.span(), "must be a finite value >= 0"))
                }
                Some(t) => *t.get_ref(),
                None if kind == SolverKind::GradientDescent => 0.0,
                None => 1.0,
            };
            let scale = match &s.secant_scale {
                Some(v) if !(*v.get_ref() > 0.0 && v.get_ref().is_finite()) => {
                    return Err(cx.err(f("secant_scale"), v.span(), "must be a finite value > 0"))
                }
                Some(v) => *v.get_ref(),
                None => DEFAULT_RANDOM_SCALE,
            };
            let secant_init = match s.secant_init.as_ref().map(|v| (v.get_ref().as_str(), v.span())) {
                None | Some(("random", _)) => SecantInit::Random { seed: s.secant_seed.unwrap_or(seed), scale },
                Some(("zero", _)) => SecantInit::Zero,
                Some(("fd", _)) | Some(("finite_difference", _)) => SecantInit::FiniteDifference,
                Some(("analytic", _)) => SecantInit::Analytic,
                Some((other, span)) => {
                    return Err(cx.err(
                        f("secant_init"),
                        span,
                        format!("unknown secant init `{other}` (expected zero, fd, analytic or random)"),
                    ))
                }
            };
            let skip_tol = match &s.skip_tol {
                Some(v) if !(*v.get_ref() >= 0.0) => return Err(cx.err(f("skip_tol"), v.span(), "must be >= 0")),
                Some(v) => Some(*v.get_ref()),
                None => None,
            };
            let record_every = match &s.record_every {
                Some(v) if *v.get_ref() == 0 => return Err(cx.err(f("record_every"), v.span(), "must be >= 1")),
                Some(v) => *v.get_ref(),
                None => 1,
            };
            let mut cfg = SolverConfig::new(eta, tau)
                .with_max_iter(max_iter)
                .with_residual_tol(residual_tol)
                .with_secant_init(secant_init)
                .with_record_every(record_every);
            cfg.skip_tol = skip_tol;
            solvers.push(SolverEntry { kind, config: cfg, track_reference: s.track_reference.unwrap_or(false) });
        }

        Ok(RunConfig {
            seed,
            game,
            start: start.map(|(_, v)| v),
            solvers,
            out: self.out.map(PathBuf::from),
            emit,
            burn_in: self.burn_in.unwrap_or(DEFAULT_BURN_IN),
            dump_secant: self.dump_secant.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER: &str = include_str!("../configs/paper3.toml");

    #[test]
    fn bundled_config_parses() {
        let cfg = RunConfig::parse(PAPER).unwrap();
        assert_eq!(cfg.game, GameSpec::Paper3);
        assert_eq!(cfg.solvers.len(), 2);
        let multi = &cfg.solvers[0];
        assert_eq!(multi.kind, SolverKind::MultiLrsga);
        assert_eq!(multi.config.eta, 0.001);
        assert_eq!(multi.config.tau, 1.0);
        assert_eq!(cfg.solvers[1].config.tau, 0.0);
    }

    #[test]
    fn unknown_game_names_field_and_line() {
        let text = "seed = 1\n[game]\nname = \"nope\"\n[[solver]]\nkind = \"gd\"\neta = 0.1\n";
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.field, "game.name");
        assert_eq!(err.position.unwrap().0, 3);
        assert!(err.to_string().contains("unknown game"));
    }

    #[test]
    fn bad_eta_and_kind() {
        let text = "[game]\nname = \"paper3\"\n[[solver]]\nkind = \"gd\"\neta = -1.0\n";
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.field, "solver[0].eta");
        assert_eq!(err.position, Some((5, 7)));

        let text = "[game]\nname = \"paper3\"\n[[solver]]\nkind = \"adam\"\neta = 1.0\n";
        assert_eq!(RunConfig::parse(text).unwrap_err().field, "solver[0].kind");
    }

    #[test]
    fn syntax_and_unknown_keys_have_positions() {
        let err = RunConfig::parse("[game]\nname = \n").unwrap_err();
        assert!(err.position.is_some());
        let err = RunConfig::parse("[game]\nname = \"paper3\"\ncolour = 1\n").unwrap_err();
        assert_eq!(err.position.unwrap().0, 3);
    }

    #[test]
    fn seed_override_flows_into_random_init() {
        let cfg = parse_with_seed(PAPER, Some(99)).unwrap();
        assert_eq!(cfg.seed, 99);
        match &cfg.solvers[0].config.secant_init {
            SecantInit::Random { seed, .. } => assert_eq!(*seed, 99),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn emit_parsing() {
        assert_eq!(Emit::parse_list(&["csv", "svg"]).unwrap(), Emit { csv: true, json: false, svg: true });
        assert!(Emit::parse_list(&["png"]).is_err());
    }
}
