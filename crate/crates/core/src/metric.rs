//! Ground metrics on observation space and cached pairwise distances.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// A metric on `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    L1,
    L2,
    Linf,
    /// `base(a, b) + delta0` whenever `a != b`, zero otherwise. Makes any
    /// movement of mass cost at least `delta0`.
    Adjusted { base: Box<Metric>, delta0: f64 },
}

impl Metric {
    pub fn adjusted(base: Metric, delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0) || !delta0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "delta0",
                value: delta0,
            });
        }
        Ok(Metric::Adjusted {
            base: Box::new(base),
            delta0,
        })
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.is_empty() {
            return Err(Error::EmptyInput);
        }
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        Ok(self.eval(a, b))
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::L1 => a.iter().zip(b).map(|(x, y)| math::abs(x - y)).sum(),
            Metric::L2 => math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
            Metric::Linf => a
                .iter()
                .zip(b)
                .map(|(x, y)| math::abs(x - y))
                .fold(0.0, f64::max),
            Metric::Adjusted { base, delta0 } => {
                // exact coordinate equality
                if a == b {
                    0.0
                } else {
                    base.eval(a, b) + delta0
                }
            }
        }
    }
}

/// Free-function form of [`Metric::distance`].
pub fn distance(a: &[f64], b: &[f64], metric: &Metric) -> Result<f64> {
    metric.distance(a, b)
}

/// Symmetric `n x n` matrix of pairwise distances, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major values, checking the metric shape
    /// (nonnegative, symmetric, zero diagonal). The triangle inequality is
    /// not checked here; see [`DistanceMatrix::triangle_violation`].
    pub fn from_rows(n: usize, d: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if d.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: d.len(),
            });
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "diagonal distance",
                    value: d[i * n + i],
                });
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "distance",
                        value: v,
                    });
                }
                if v != d[j * n + i] {
                    return Err(Error::InvalidParameter {
                        name: "asymmetric distance",
                        value: v,
                    });
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distance between observations `i` and `j` (0-based).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Largest `d(i,j) - d(i,k) - d(k,j)` over all triples, or `None` if the
    /// triangle inequality holds within `tol`.
    pub fn triangle_violation(&self, tol: f64) -> Option<(usize, usize, usize, f64)> {
        let n = self.n;
        let mut worst = None;
        let mut worst_excess = tol;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let excess = self.get(i, j) - self.get(i, k) - self.get(k, j);
                    if excess > worst_excess {
                        worst_excess = excess;
                        worst = Some((i, j, k, excess));
                    }
                }
            }
        }
        worst
    }
}

/// Computes every pairwise distance once. The diagonal is exactly zero.
pub fn pairwise_distances<P: AsRef<[f64]>>(points: &[P], metric: &Metric) -> Result<DistanceMatrix> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let m = points[0].as_ref().len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = points.iter().find(|p| p.as_ref().len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: bad.as_ref().len(),
        });
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = metric.eval(points[i].as_ref(), points[j].as_ref());
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix { n, d })
}
