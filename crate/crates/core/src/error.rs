use alloc::boxed::Box;
use alloc::string::String;

use crate::downstream::simplex::LpError;
use crate::model::FlowSolution;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("negative flow {value} on arc ({from}, {to})")]
    NegativeFlow { from: usize, to: usize, value: f64 },

    #[error("infeasible flow: {0}")]
    InfeasibleFlow(String),

    #[error("node {node} carries zero mass")]
    ZeroNodeMass { node: usize },

    #[error("solver stopped after {iterations} iterations with gap {gap:e}")]
    NotConverged {
        iterations: usize,
        gap: f64,
        best: Box<FlowSolution>,
    },

    #[error("{what} of size {size} exceeds the supported maximum {max}")]
    Unsupported {
        what: &'static str,
        size: usize,
        max: usize,
    },

    #[error("singular weighted design: {0}")]
    Singular(String),

    #[error(transparent)]
    Lp(#[from] LpError),
}
