//! Decentralized SGD simulation with heterogeneity-aware mixing matrices.
//!
//! The crate builds communication graphs ([`topology`]), constructs and analyzes
//! doubly-stochastic mixing matrices ([`mixing`]), optimizes them against the
//! gradient mixing error ([`gme`]), provides quadratic test objectives
//! ([`objectives`]) and runs decentralized SGD variants over them ([`simulator`]).
//!
//! ```
//! use hadsgd::{gme, mixing, topology};
//!
//! let t = topology::build_ring(6)?;
//! let g = nalgebra::DMatrix::from_fn(4, 6, |i, j| ((i + 2 * j) % 5) as f64);
//! let gamma = gme::gram(&gme::center_columns(&g));
//! let mh = mixing::metropolis_hastings(&t);
//! let w = gme::solve_gme(&gamma, &t, &gme::GmeSolverParams::default(), &mh)?;
//! assert!(gme::gme_objective(&gamma, w.matrix())? <= gme::gme_objective(&gamma, mh.matrix())?);
//! # Ok::<(), hadsgd::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod gme;
pub mod linalg;
pub mod mixing;
pub mod objectives;
pub mod oracle;
pub mod simulator;
pub mod topology;

pub use error::{Error, Result};
