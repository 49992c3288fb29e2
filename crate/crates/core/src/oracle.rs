//! Exhaustive reference solver for small problems.
//!
//! Enumerates every admissible source-to-sink path and maximizes over the
//! full path simplex with damped Newton steps on a log-barrier in scaled
//! coordinates `x_i (1 + dz_i)`, which keep every path flow strictly
//! positive without projections. It deliberately shares no code
//! with [`crate::solver`]: only the problem data and the published objective
//! are common, so a bug in one is unlikely to be mirrored in the other.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::baselines::WeightedEmpirical;
use crate::math;
use crate::model::{ArcFlows, FlowProblem, FlowSolution};
use crate::solver::PathDecomposition;
use crate::{Error, Result};

pub const MAX_ORACLE_T: usize = 12;

/// Largest optimality gap accepted from the barrier method.
pub const ORACLE_GAP: f64 = 1e-10;

const NEWTON_BUDGET: usize = 5_000;
const CENTERING_TOL: f64 = 1e-9;
const MU_FLOOR: f64 = 1e-13;
const BARRIER_GAP: f64 = 1e-12;

/// Every nonempty increasing subset of `1..=t` with no forbidden consecutive
/// pair, in bitmask order.
pub fn enumerate_paths(t: usize, forbidden: &BTreeSet<(usize, usize)>) -> Result<Vec<Vec<usize>>> {
    if t > MAX_ORACLE_T {
        return Err(Error::Unsupported {
            what: "oracle path enumeration",
            size: t,
            max: MAX_ORACLE_T,
        });
    }
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << t) {
        let nodes: Vec<usize> = (0..t).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect();
        if nodes.windows(2).any(|e| forbidden.contains(&(e[0], e[1]))) {
            continue;
        }
        out.push(nodes);
    }
    Ok(out)
}

struct PathSimplex<'a> {
    t: usize,
    lambda: f64,
    paths: &'a [Vec<usize>],
    cost: Vec<f64>,
}

impl PathSimplex<'_> {
    fn masses(&self, x: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.t + 1];
        for (p, xi) in self.paths.iter().zip(x) {
            for &j in p {
                m[j] += xi;
            }
        }
        m
    }

    fn value(&self, x: &[f64]) -> f64 {
        let m = self.masses(x);
        let mut v = 0.0;
        for &mj in &m[1..] {
            if mj <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v += math::ln(mj);
        }
        v - self.lambda * x.iter().zip(&self.cost).map(|(a, c)| a * c).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let m = self.masses(x);
        self.paths
            .iter()
            .zip(&self.cost)
            .map(|(p, c)| p.iter().map(|&j| 1.0 / m[j]).sum::<f64>() - self.lambda * c)
            .collect()
    }
}

/// Maximizes the path-flow objective over all `2^T - 1` paths (fewer when
/// grouped) with a primal log-barrier method on the path simplex.
pub fn solve_exact_small(problem: &FlowProblem) -> Result<FlowSolution> {
    let t = problem.len();
    let paths = enumerate_paths(t, problem.forbidden())?;
    let cost: Vec<f64> = paths
        .iter()
        .map(|p| {
            let mut c = 0.0;
            for k in 1..p.len() {
                c += problem.distances().get(p[k - 1] - 1, p[k] - 1);
            }
            c
        })
        .collect();
    let sys = PathSimplex {
        t,
        lambda: problem.lambda(),
        paths: &paths,
        cost,
    };

    let (x, iterations) = barrier_ascent(&sys)?;
    let grad = sys.gradient(&x);
    let gmax = grad.iter().fold(f64::NEG_INFINITY, |s, g| s.max(*g));
    let gap = gmax - x.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    let value = sys.value(&x);
    if !(gap <= ORACLE_GAP) {
        return Err(Error::NotConverged {
            iterations,
            gap,
            best: alloc::boxed::Box::new(assemble(&sys, &x, value, gap, iterations)?),
        });
    }
    assemble(&sys, &x, value, gap, iterations)
}

/// Path-following on `phi = (1/mu) f(x) + sum_i log x_i` over the simplex,
/// shrinking `mu` tenfold after each centering. Once `mu` is small, paths
/// whose flow marks them as clearly suboptimal are fixed at zero; the caller
/// re-checks optimality over every path.
fn barrier_ascent(sys: &PathSimplex<'_>) -> Result<(Vec<f64>, usize)> {
    let n = sys.paths.len();
    let t = sys.t;
    let mut x = vec![1.0 / n as f64; n];
    let mut live: Vec<usize> = (0..n).collect();
    let mut mu = 1.0;
    let mut steps = 0;
    loop {
        let mut last_dec = f64::INFINITY;
        for _ in 0..100 {
            steps += 1;
            if steps > NEWTON_BUDGET {
                break;
            }
            let m = sys.masses(&x);
            let g = sys.gradient(&x);
            let k = live.len();
            let xs: Vec<f64> = live.iter().map(|&i| x[i]).collect();
            // scaled gradient r_i = x_i dphi/dx_i, shifted by a multiple of x
            // (absorbed by nu) to avoid cancellation
            let gbar = dot(&x, &g);
            let r: Vec<f64> = (0..k).map(|q| xs[q] * (g[live[q]] - gbar) / mu + 1.0).collect();
            // G = D^(1/2) A X with D = diag(1 / (mu m_j^2))
            let scale: Vec<f64> = (0..=t)
                .map(|j| if j == 0 { 0.0 } else { 1.0 / (math::sqrt(mu) * m[j]) })
                .collect();
            let mut inner = DMatrix::<f64>::identity(t, t);
            for (q, &i) in live.iter().enumerate() {
                let p = &sys.paths[i];
                for &j in p {
                    for &l in p {
                        inner[(j - 1, l - 1)] += xs[q] * xs[q] * scale[j] * scale[l];
                    }
                }
            }
            let Some(chol) = Cholesky::new(inner) else { break };
            let solve = |v: &[f64]| -> Vec<f64> {
                let mut gv = DVector::<f64>::zeros(t);
                for (q, &i) in live.iter().enumerate() {
                    for &j in &sys.paths[i] {
                        gv[j - 1] += scale[j] * xs[q] * v[q];
                    }
                }
                let w = chol.solve(&gv);
                (0..k)
                    .map(|q| v[q] - xs[q] * sys.paths[live[q]].iter().map(|&j| scale[j] * w[j - 1]).sum::<f64>())
                    .collect()
            };
            // K dz = r - nu x subject to x . dz = 0
            let a = solve(&r);
            let b = solve(&xs);
            let nu = dot(&xs, &a) / dot(&xs, &b);
            let dz: Vec<f64> = (0..k).map(|q| a[q] - nu * b[q]).collect();
            let dec = math::sqrt(dot(&dz, &r).max(0.0));
            let step = if dec > 0.25 { 1.0 / (1.0 + dec) } else { 1.0 };
            // round-off floor: the decrement stopped shrinking
            if !dec.is_finite() || dz.iter().any(|d| step * d <= -1.0) || (dec < 1e-3 && dec >= last_dec) {
                break;
            }
            last_dec = dec;
            for q in 0..k {
                x[live[q]] *= 1.0 + step * dz[q];
            }
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
            if dec < CENTERING_TOL {
                break;
            }
        }
        if steps > NEWTON_BUDGET || mu <= MU_FLOOR || live.len() as f64 * mu <= BARRIER_GAP {
            return Ok((x, steps));
        }
        if mu <= 1e-9 {
            // x_i = mu / (nu - g_i) on the central path
            live.retain(|&i| {
                let keep = x[i] >= mu;
                if !keep {
                    x[i] = 0.0;
                }
                keep
            });
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
        }
        mu *= 0.1;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn assemble(sys: &PathSimplex<'_>, x: &[f64], value: f64, gap: f64, iterations: usize) -> Result<FlowSolution> {
    let t = sys.t;
    let mut w = ArcFlows::zeros(t);
    let mut kept = PathDecomposition::default();
    for ((p, &xi), &c) in sys.paths.iter().zip(x).zip(&sys.cost) {
        if xi <= 0.0 {
            continue;
        }
        w.add(0, p[0], xi);
        for k in 1..p.len() {
            w.add(p[k - 1], p[k], xi);
        }
        w.add(p[p.len() - 1], t + 1, xi);
        if xi > 1e-14 {
            kept.paths.push(p.clone());
            kept.flows.push(xi);
            kept.path_distance.push(c);
        }
    }
    let m = sys.masses(x);
    let g = sys.gradient(x);
    let mu_path = x.iter().zip(&g).map(|(a, b)| a * b).sum();
    let terminal = WeightedEmpirical::new((1..=t).map(|i| w.get(i, t + 1)).collect())?;
    Ok(FlowSolution {
        w,
        objective: value,
        node_mass: m[1..].to_vec(),
        terminal,
        mu_path,
        gap,
        paths: kept,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_counts() {
        let none = BTreeSet::new();
        assert_eq!(enumerate_paths(2, &none).unwrap().len(), 3);
        assert_eq!(enumerate_paths(6, &none).unwrap().len(), 63);
        let mut f = BTreeSet::new();
        f.insert((1, 2));
        let p = enumerate_paths(3, &f).unwrap();
        assert_eq!(p.len(), 5);
        assert!(!p.contains(&vec![1, 2]));
        assert!(!p.contains(&vec![1, 2, 3]));
        assert!(matches!(
            enumerate_paths(13, &none),
            Err(Error::Unsupported { .. })
        ));
    }
}
