//! Weighted affine one-step regression of log prices.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::math;
use crate::{Error, Result};

/// Relative size of the smallest admissible diagonal entry of `R`.
const RANK_TOL: f64 = 1e-10;

/// Forecast `mu + A ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub mu: Vec<f64>,
    /// Row-major `m x m`.
    pub a: Vec<f64>,
}

impl RegressionModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn predict(&self, ell: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim();
        if ell.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: ell.len(),
            });
        }
        Ok((0..m)
            .map(|i| self.mu[i] + (0..m).map(|k| self.a[i * m + k] * ell[k]).sum::<f64>())
            .collect())
    }
}

/// Minimizes `sum_t p_t ||ell_{t+1} - (mu + A ell_t)||^2` by Householder QR
/// on the square-root weighted design `[1, ell_t]`. `weights[t]` belongs to
/// the pair `(ell_t, ell_{t+1})`.
pub fn weighted_regression_fit<P: AsRef<[f64]>>(log_prices: &[P], weights: &[f64]) -> Result<RegressionModel> {
    let n = log_prices.len();
    if n < 2 {
        return Err(Error::EmptyInput);
    }
    if weights.len() != n - 1 {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: weights.len(),
        });
    }
    let m = log_prices[0].as_ref().len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    for p in log_prices {
        if p.as_ref().len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: p.as_ref().len(),
            });
        }
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "regression weight",
            value: w,
        });
    }
    let used: Vec<usize> = (0..n - 1).filter(|&t| weights[t] > 0.0).collect();
    let cols = m + 1;
    if used.len() < cols {
        return Err(Error::Singular(format!(
            "{} weighted pairs cannot determine {} coefficients per coordinate",
            used.len(),
            cols
        )));
    }
    let rows = used.len();
    let mut x = DMatrix::<f64>::zeros(rows, cols);
    let mut y = DMatrix::<f64>::zeros(rows, m);
    for (r, &t) in used.iter().enumerate() {
        let s = math::sqrt(weights[t]);
        let cur = log_prices[t].as_ref();
        let next = log_prices[t + 1].as_ref();
        x[(r, 0)] = s;
        for k in 0..m {
            x[(r, k + 1)] = s * cur[k];
            y[(r, k)] = s * next[k];
        }
    }
    let qr = x.qr();
    let r = qr.r();
    let biggest = (0..cols).map(|i| math::abs(r[(i, i)])).fold(0.0, f64::max);
    if let Some(i) = (0..cols).find(|&i| !(math::abs(r[(i, i)]) > RANK_TOL * biggest)) {
        let what = if i == 0 { "intercept".into() } else { format!("coordinate {}", i - 1) };
        return Err(Error::Singular(format!(
            "design [1, ell_t] is rank deficient at column {i} ({what})"
        )));
    }
    qr.q_tr_mul(&mut y);
    let top = y.rows(0, cols).into_owned();
    let coef = r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    // coef is (m+1) x m with ell_{t+1}^T ~ [1, ell_t^T] coef
    let mu = (0..m).map(|i| coef[(0, i)]).collect();
    let mut a = Vec::with_capacity(m * m);
    for i in 0..m {
        for k in 0..m {
            a.push(coef[(k + 1, i)]);
        }
    }
    Ok(RegressionModel { mu, a })
}

/// `||ell_next - (mu + A ell_t)||^2`.
pub fn forecast_cost(model: &RegressionModel, ell_t: &[f64], ell_next: &[f64]) -> Result<f64> {
    let pred = model.predict(ell_t)?;
    if ell_next.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            found: ell_next.len(),
        });
    }
    Ok(pred.iter().zip(ell_next).map(|(p, o)| (o - p) * (o - p)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(model: &RegressionModel, ells: &[Vec<f64>], w: &[f64]) -> f64 {
        (0..w.len())
            .map(|t| w[t] * forecast_cost(model, &ells[t], &ells[t + 1]).unwrap())
            .sum()
    }

    #[test]
    fn two_points_interpolate() {
        let m = weighted_regression_fit(&[[1.0], [2.0], [3.0]], &[0.5, 0.5]).unwrap();
        assert!((m.mu[0] - 1.0).abs() < 1e-12);
        assert!((m.a[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pair_is_singular() {
        let r = weighted_regression_fit(&[[1.0], [2.0], [3.0]], &[1.0, 0.0]);
        assert!(matches!(r, Err(Error::Singular(_))));
        let r = weighted_regression_fit(&[[1.0], [1.0], [1.0], [2.0]], &[0.3, 0.3, 0.4]);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn forecast_costs() {
        let m = RegressionModel {
            mu: vec![2.0],
            a: vec![0.0],
        };
        assert!((forecast_cost(&m, &[5.0], &[2.1]).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(forecast_cost(&m, &[5.0], &[2.0]).unwrap(), 0.0);
        assert!(forecast_cost(&m, &[5.0, 1.0], &[2.0]).is_err());
    }

    #[test]
    fn gradient_vanishes_and_perturbations_do_not_improve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let ells: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let raw: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let model = weighted_regression_fit(&ells, &w).unwrap();
            // analytic gradient: -2 sum p r [1, ell]
            let mut grad = [0.0; 6];
            for t in 0..9 {
                let pred = model.predict(&ells[t]).unwrap();
                for i in 0..2 {
                    let r = ells[t + 1][i] - pred[i];
                    grad[i] += -2.0 * w[t] * r;
                    for k in 0..2 {
                        grad[2 + 2 * i + k] += -2.0 * w[t] * r * ells[t][k];
                    }
                }
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            assert!(norm <= 1e-8, "{norm}");
            let base = objective(&model, &ells, &w);
            for _ in 0..100 {
                let mut p = model.clone();
                for v in p.mu.iter_mut().chain(p.a.iter_mut()) {
                    *v += 1e-3 * (rng.random::<f64>() - 0.5);
                }
                assert!(objective(&p, &ells, &w) >= base);
            }
        }
    }
}
