//! Mean-CVaR portfolio selection under a weighted scenario distribution.

use alloc::vec;
use alloc::vec::Vec;

use super::simplex::{certify, simplex_solve, Bound, LinearProgram, Relation, Sense};
use crate::math;
use crate::{Error, Result};

/// Risk aversion `rho` and CVaR level `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioSpec {
    pub rho: f64,
    pub beta: f64,
}

impl Default for PortfolioSpec {
    fn default() -> Self {
        Self { rho: 0.9, beta: 0.05 }
    }
}

impl PortfolioSpec {
    pub fn new(rho: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter { name: "rho", value: rho });
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter { name: "beta", value: beta });
        }
        Ok(Self { rho, beta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioDecision {
    /// Allocation on the simplex.
    pub x: Vec<f64>,
    /// `(1 - rho) E[-x.xi] + rho CVaR_beta(-x.xi)` under the weights.
    pub objective: f64,
    /// Relative duality gap of the LP certificate.
    pub gap: f64,
}

/// Upper-tail CVaR: the mean of the worst `beta` share of the weighted
/// losses, splitting the boundary atom.
pub fn cvar(losses: &[f64], weights: &[f64], beta: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::EmptyInput);
    }
    if losses.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: losses.len(),
            found: weights.len(),
        });
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter { name: "beta", value: beta });
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
    let mut left = beta;
    let mut acc = 0.0;
    for &i in &order {
        if left <= 0.0 {
            break;
        }
        let take = weights[i].min(left);
        acc += take * losses[i];
        left -= take;
    }
    Ok(acc / beta)
}

/// `(1 - rho) * mean + rho * CVaR_beta` of weighted losses.
pub fn risk_adjusted(losses: &[f64], weights: &[f64], spec: &PortfolioSpec) -> Result<f64> {
    let mean: f64 = losses.iter().zip(weights).map(|(l, w)| l * w).sum();
    Ok((1.0 - spec.rho) * mean + spec.rho * cvar(losses, weights, spec.beta)?)
}

/// Losses `-x.xi_t` of an allocation across scenarios.
pub fn portfolio_losses<P: AsRef<[f64]>>(x: &[f64], returns: &[P]) -> Vec<f64> {
    returns
        .iter()
        .map(|r| -r.as_ref().iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Minimizes the risk-adjusted loss over long-only allocations with the
/// Rockafellar-Uryasev lifting: variables `x >= 0`, free `tau` and
/// `z_t >= max(0, -x.xi_t - tau)` for scenarios with positive weight.
pub fn cvar_portfolio<P: AsRef<[f64]>>(
    returns: &[P],
    weights: &[f64],
    spec: &PortfolioSpec,
) -> Result<PortfolioDecision> {
    let t = returns.len();
    if t == 0 {
        return Err(Error::EmptyInput);
    }
    if weights.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: weights.len(),
        });
    }
    let m = returns[0].as_ref().len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(r) = returns.iter().find(|r| r.as_ref().len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: r.as_ref().len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "scenario weight",
            value: w,
        });
    }
    let spec = PortfolioSpec::new(spec.rho, spec.beta)?;
    if m == 1 {
        let x = vec![1.0];
        let objective = risk_adjusted(&portfolio_losses(&x, returns), weights, &spec)?;
        return Ok(PortfolioDecision { x, objective, gap: 0.0 });
    }
    let active: Vec<usize> = (0..t).filter(|&s| weights[s] > 0.0).collect();
    let k = active.len();
    let n = m + 1 + k;
    let mut c = vec![0.0; n];
    for &s in &active {
        let r = returns[s].as_ref();
        for i in 0..m {
            c[i] -= (1.0 - spec.rho) * weights[s] * r[i];
        }
    }
    c[m] = spec.rho;
    for (q, &s) in active.iter().enumerate() {
        c[m + 1 + q] = spec.rho / spec.beta * weights[s];
    }
    let mut lp = LinearProgram::new(Sense::Minimize, c);
    lp.bounds[m] = Bound::Free;
    let mut budget = vec![0.0; n];
    budget[..m].iter_mut().for_each(|v| *v = 1.0);
    lp.constrain(budget, Relation::Eq, 1.0);
    for (q, &s) in active.iter().enumerate() {
        // x.xi_s + tau + z_s >= 0
        let mut row = vec![0.0; n];
        row[..m].copy_from_slice(returns[s].as_ref());
        row[m] = 1.0;
        row[m + 1 + q] = 1.0;
        lp.constrain(row, Relation::Ge, 0.0);
    }
    let sol = simplex_solve(&lp)?;
    let cert = certify(&lp, &sol);
    let mut x: Vec<f64> = sol.x[..m].iter().map(|v| v.max(0.0)).collect();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    let objective = risk_adjusted(&portfolio_losses(&x, returns), weights, &spec)?;
    Ok(PortfolioDecision {
        x,
        objective,
        gap: math::abs(cert.gap) / (1.0 + math::abs(sol.objective)),
    })
}
