//! Evaluation harness, file formats and command-line front end for
//! Wasserstein probability flow estimation ([`wpf_core`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
mod error;
pub mod harness;
pub mod io;

pub use error::{Error, Result};
