//! Wasserstein probability flow (WPF) estimation.
//!
//! Estimates the terminal distribution of a nonstationary sequence by
//! maximizing the log-likelihood of the observations minus `lambda` times
//! the summed first-order Wasserstein distance between consecutive
//! distributions. The problem reduces to a concave network-flow program on a
//! DAG whose nodes are the observations, which [`solver::solve`] handles with
//! a fully-corrective Frank-Wolfe method over source-to-sink paths.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. IO, the evaluation harness and the command-line tool live in the
//! companion `wpf` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod analysis;
pub mod baselines;
pub mod downstream;
mod error;
mod math;
pub mod metric;
pub mod model;
pub mod oracle;
pub mod solver;

pub use baselines::WeightedEmpirical;
pub use error::{Error, Result};
pub use metric::{DistanceMatrix, Metric};
pub use model::{ArcFlows, FlowProblem, FlowSolution, ObservationSeries};
pub use solver::{solve, PathDecomposition, SolverOptions};
