//! Low-rank symplectic gradient adjustment for h-player differentiable games.
//!
//! The crate computes stable Nash equilibria of smooth games with
//! MultiLRSGA: simultaneous gradient play on the game gradient `F(w)`,
//! preconditioned by `I − τ Â_k`, where `Â_k` is a block antisymmetric
//! operator assembled from per-player Broyden approximations of the gradient
//! Jacobians. No mixed second derivatives are evaluated.
//!
//! ```
//! use multilrsga::experiments::paper_game;
//! use multilrsga::secant::SecantInit;
//! use multilrsga::solvers::{run_multilrsga, SolverConfig, Status};
//!
//! let bg = paper_game();
//! let w0 = bg.default_start.clone().unwrap();
//! let cfg = SolverConfig::new(0.01, 1.0).with_secant_init(SecantInit::Random { seed: 1, scale: 0.1 });
//! let trace = run_multilrsga(&bg.game, &w0, &cfg).unwrap();
//! assert_eq!(trace.status, Status::Converged);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod correction;
mod error;
pub mod experiments;
pub mod game;
pub mod numerics;
pub mod plot;
pub mod report;
pub mod secant;
pub mod solvers;

pub use error::{Error, Result};
