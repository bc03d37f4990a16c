use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::game::JointPoint;
use crate::secant::SecantState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "multilrsga")]
    MultiLrsga,
    #[serde(rename = "gd")]
    GradientDescent,
    #[serde(rename = "sga")]
    ExactSga,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::MultiLrsga, SolverKind::GradientDescent, SolverKind::ExactSga];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::MultiLrsga => "multilrsga",
            SolverKind::GradientDescent => "gd",
            SolverKind::ExactSga => "sga",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "multilrsga" => Ok(SolverKind::MultiLrsga),
            "gd" => Ok(SolverKind::GradientDescent),
            "sga" => Ok(SolverKind::ExactSga),
            other => Err(Error::InvalidArgument(format!("unknown solver `{other}` (expected multilrsga, gd or sga)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    /// `‖F(w_k)‖₂`.
    pub residual: f64,
    /// `‖x_i^k‖₂` per player.
    pub block_norms: Vec<f64>,
    /// `‖C_k − A(w*)‖₂` when a reference point was configured.
    pub skew_error: Option<f64>,
    /// `‖M_i^k − D(∇_{x_i} f_i)(w*)‖₂` (MultiLRSGA only).
    pub secant_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub solver: SolverKind,
    pub records: Vec<TraceRecord>,
    pub status: Status,
    /// Number of steps taken.
    pub iterations: usize,
    pub final_residual: f64,
    pub final_point: JointPoint,
    pub final_secant: Option<SecantState>,
    pub skipped_updates: usize,
}

impl SolverTrace {
    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    /// Iteration index of the first record with residual at or below `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.residual <= tol).map(|r| r.k)
    }

    /// Per-player block norms over the recorded iterations, one series per
    /// player.
    pub fn block_norm_series(&self) -> Vec<Vec<f64>> {
        let h = self.final_point.layout().players();
        (0..h).map(|i| self.records.iter().map(|r| r.block_norms[i]).collect()).collect()
    }
}
