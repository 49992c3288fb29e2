//! Weighted empirical distributions over past observations: sample average,
//! windowing, exponential smoothing and the WPF terminal distribution.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::metric::Metric;
use crate::model::{build_problem, ObservationSeries};
use crate::solver::{solve, SolverOptions};
use crate::{Error, Result};

/// Tolerance on the total weight.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Probabilities `p_T(1)..p_T(T)` on the observations, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEmpirical {
    weights: Vec<f64>,
}

impl WeightedEmpirical {
    /// Accepts nonnegative weights summing to 1 within [`WEIGHT_SUM_TOL`]
    /// (tiny negative round-off is clamped to zero).
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        for w in &mut weights {
            if *w < 0.0 && *w > -WEIGHT_SUM_TOL {
                *w = 0.0;
            }
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "weight",
                    value: *w,
                });
            }
        }
        let total: f64 = weights.iter().sum();
        if math::abs(total - 1.0) > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter {
                name: "weight total",
                value: total,
            });
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    /// Indices (0-based) with weight above `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&i| self.weights[i] > threshold)
            .collect()
    }
}

/// Uniform `1/T`.
pub fn saa_weights(t: usize) -> Result<WeightedEmpirical> {
    if t == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(WeightedEmpirical {
        weights: vec![1.0 / t as f64; t],
    })
}

/// `1/s` on the last `s` observations.
pub fn window_weights(t: usize, s: usize) -> Result<WeightedEmpirical> {
    if s == 0 || s > t {
        return Err(Error::InvalidParameter {
            name: "window size",
            value: s as f64,
        });
    }
    let mut weights = vec![0.0; t];
    for w in &mut weights[t - s..] {
        *w = 1.0 / s as f64;
    }
    Ok(WeightedEmpirical { weights })
}

/// Weight proportional to `(1 - alpha)^(T - t)` on observation `t`,
/// normalized by the exact finite geometric sum.
pub fn smoothing_weights(t: usize, alpha: f64) -> Result<WeightedEmpirical> {
    if t == 0 {
        return Err(Error::EmptyInput);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
        });
    }
    let keep = 1.0 - alpha;
    let mut weights: Vec<f64> = (0..t).map(|k| math::powi(keep, (t - 1 - k) as i32)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(WeightedEmpirical { weights })
}

/// Terminal distribution of the WPF program.
pub fn wpf_weights(
    series: &ObservationSeries,
    metric: &Metric,
    lambda: f64,
    grouped: bool,
    opts: &SolverOptions,
) -> Result<WeightedEmpirical> {
    let problem = build_problem(series, metric, lambda, grouped)?;
    Ok(solve(&problem, opts)?.terminal)
}
