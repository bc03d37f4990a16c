//! Trace CSV files and the JSON run summary.
//!
//! CSV schema, one row per recorded iteration:
//!
//! ```text
//! k,residual,norm_x1,...,norm_xh[,skew_err,sec_err_1,...,sec_err_h]
//! ```
//!
//! The error columns appear only when the run tracked a reference point.
//! Reals are written in Rust's shortest round-trip exponent form, so files
//! are byte-for-byte reproducible. A cell is left empty when a value is
//! missing for that record.

use std::io::Write;

use serde::Serialize;

use crate::experiments::ComparisonReport;
use crate::secant::SecantState;
use crate::solvers::{RateFit, SolverConfig, SolverKind, SolverTrace, Status};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON Schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

pub fn csv_header(trace: &SolverTrace) -> Vec<String> {
    let h = trace.final_point.layout().players();
    let mut cols = vec!["k".to_string(), "residual".to_string()];
    cols.extend((1..=h).map(|i| format!("norm_x{i}")));
    if has_error_columns(trace) {
        cols.push("skew_err".into());
        cols.extend((1..=h).map(|i| format!("sec_err_{i}")));
    }
    cols
}

fn has_error_columns(trace: &SolverTrace) -> bool {
    trace.records.iter().any(|r| r.skew_error.is_some() || r.secant_errors.is_some())
}

fn real(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_trace_csv<W: Write>(trace: &SolverTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(trace))?;
    let h = trace.final_point.layout().players();
    let errors = has_error_columns(trace);
    for r in &trace.records {
        let mut row = vec![r.k.to_string(), real(r.residual)];
        row.extend(r.block_norms.iter().map(|&v| real(v)));
        if errors {
            row.push(r.skew_error.map(real).unwrap_or_default());
            match &r.secant_errors {
                Some(errs) => row.extend(errs.iter().map(|&v| real(v))),
                None => row.extend(std::iter::repeat_n(String::new(), h)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GameSummary {
    pub name: String,
    pub layout: Vec<usize>,
    pub known_equilibrium: Option<Vec<f64>>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub solver: SolverKind,
    pub status: Status,
    pub iterations: usize,
    pub final_residual: f64,
    pub iterations_to_tol: Option<usize>,
    pub q_hat: Option<f64>,
    pub r_squared: Option<f64>,
    pub rate_error: Option<String>,
    pub oscillations: usize,
    pub skipped_updates: usize,
    pub final_point: Vec<f64>,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub game: GameSummary,
    pub start: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub solvers: Vec<SolverSummary>,
}

impl RunReport {
    pub fn from_comparison(cmp: &ComparisonReport, game: GameSummary, seed: u64) -> Self {
        let solvers = cmp
            .legs
            .iter()
            .map(|leg| {
                let (q_hat, r_squared, rate_error) = match &leg.rate {
                    Ok(RateFit { q_hat, r_squared, .. }) => (Some(*q_hat), Some(*r_squared), None),
                    Err(e) => (None, None, Some(e.clone())),
                };
                SolverSummary {
                    solver: leg.kind,
                    status: leg.trace.status,
                    iterations: leg.trace.iterations,
                    final_residual: leg.trace.final_residual,
                    iterations_to_tol: leg.iterations_to_tol,
                    q_hat,
                    r_squared,
                    rate_error,
                    oscillations: leg.oscillations,
                    skipped_updates: leg.trace.skipped_updates,
                    final_point: leg.trace.final_point.values().to_vec(),
                    config: leg.config.clone(),
                }
            })
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            game,
            start: cmp.start.values().to_vec(),
            seed,
            burn_in: cmp.burn_in,
            solvers,
        }
    }
}

#[derive(Serialize)]
struct SecantDump<'a> {
    layout: &'a [usize],
    matrices: Vec<MatrixDump<'a>>,
    last_update_skipped: bool,
}

#[derive(Serialize)]
struct MatrixDump<'a> {
    rows: usize,
    cols: usize,
    entries: &'a [f64],
}

/// Shapes and row-major entries of every secant matrix.
pub fn secant_json(state: &SecantState) -> serde_json::Result<String> {
    let dump = SecantDump {
        layout: state.layout().dims(),
        matrices: state
            .matrices()
            .iter()
            .map(|m| MatrixDump { rows: m.rows(), cols: m.cols(), entries: m.as_slice() })
            .collect(),
        last_update_skipped: state.last_update_skipped(),
    };
    serde_json::to_string_pretty(&dump)
}
