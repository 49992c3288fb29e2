//! Fully-corrective Frank-Wolfe over source-to-sink path flows.
//!
//! Every feasible arc flow decomposes into flows `x_P` on increasing node
//! sequences `P`, and the objective becomes
//! `sum_j log(sum_{P ∋ j} x_P) - lambda * sum_P x_P D(P)` over the simplex.
//! The derivative with respect to `x_P` is
//! `sum_{j in P} 1 / p_j - lambda * D(P)`, and a flow is optimal exactly when
//! every path with positive flow attains the maximum of this expression over
//! all paths. The maximizing path is found by dynamic programming on the DAG,
//! which gives the linear oracle for Frank-Wolfe; the active set is then
//! re-optimized with Newton steps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::baselines::WeightedEmpirical;
use crate::math;
use crate::model::{check_feasible, objective, ArcFlows, FlowProblem, FlowSolution};
use crate::{Error, Result};

/// Paths with less flow than this are dropped from the active set.
pub const PRUNE_FLOW: f64 = 1e-14;

/// Fraction of the current gap to which a restricted solve reduces the
/// derivative spread before the next path is priced.
const INNER_SLACK: f64 = 0.1;

/// Relative pivot below which a Newton direction counts as invisible to the
/// node masses.
const NULL_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Termination threshold on the optimality gap.
    pub gap_tol: f64,
    /// Cap on outer iterations, and on pairwise steps per restricted solve.
    pub max_iters: usize,
    /// Relative spread of active-path derivatives at which a restricted
    /// solve stops.
    pub inner_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            max_iters: 100_000,
            inner_tol: 1e-12,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.gap_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gap_tol",
                value: self.gap_tol,
            });
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "inner_tol",
                value: self.inner_tol,
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// Flows on source-to-sink paths. Paths list observation nodes (1-based) in
/// increasing order; source and sink are implicit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathDecomposition {
    pub paths: Vec<Vec<usize>>,
    pub flows: Vec<f64>,
    pub path_distance: Vec<f64>,
}

impl PathDecomposition {
    pub fn new(problem: &FlowProblem, paths: Vec<Vec<usize>>, flows: Vec<f64>) -> Result<Self> {
        if paths.len() != flows.len() {
            return Err(Error::DimensionMismatch {
                expected: paths.len(),
                found: flows.len(),
            });
        }
        for p in &paths {
            validate_path(problem, p)?;
        }
        if let Some(&f) = flows.iter().find(|f| !(**f >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "path flow",
                value: f,
            });
        }
        let path_distance = paths.iter().map(|p| path_distance(problem, p)).collect();
        Ok(Self {
            paths,
            flows,
            path_distance,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn total_flow(&self) -> f64 {
        self.flows.iter().sum()
    }

    /// `p_j(j)` for `j = 1..=t`, indexed by `j - 1`.
    pub fn node_masses(&self, t: usize) -> Vec<f64> {
        let mut m = vec![0.0; t];
        for (p, &x) in self.paths.iter().zip(&self.flows) {
            for &j in p {
                m[j - 1] += x;
            }
        }
        m
    }

    /// Arc flows `w(j, k) = sum of x_P over paths using (j, k)`.
    pub fn recompose(&self, t: usize) -> ArcFlows {
        let mut w = ArcFlows::zeros(t);
        for (p, &x) in self.paths.iter().zip(&self.flows) {
            if x == 0.0 {
                continue;
            }
            w.add(0, p[0], x);
            for e in p.windows(2) {
                w.add(e[0], e[1], x);
            }
            w.add(*p.last().unwrap(), t + 1, x);
        }
        w
    }
}

fn validate_path(problem: &FlowProblem, p: &[usize]) -> Result<()> {
    let t = problem.len();
    if p.is_empty() {
        return Err(Error::InvalidSeries("empty path".into()));
    }
    if p[0] == 0 || *p.last().unwrap() > t {
        return Err(Error::InvalidSeries(format!("path {p:?} leaves 1..={t}")));
    }
    for e in p.windows(2) {
        if e[0] >= e[1] || !problem.transition_allowed(e[0], e[1]) {
            return Err(Error::InvalidSeries(format!(
                "path {p:?} uses non-arc ({}, {})",
                e[0], e[1]
            )));
        }
    }
    Ok(())
}

/// Total distance along consecutive nodes of `path`.
pub fn path_distance(problem: &FlowProblem, path: &[usize]) -> f64 {
    path.windows(2).map(|e| problem.distance(e[0], e[1])).sum()
}

/// `sum_{j in path} 1 / node_mass(j) - lambda * distance`.
pub fn path_derivative(problem: &FlowProblem, path: &[usize], distance: f64, node_mass: &[f64]) -> f64 {
    path.iter().map(|&j| 1.0 / node_mass[j - 1]).sum::<f64>() - problem.lambda() * distance
}

/// Path maximizing the path derivative for the given node masses, with its
/// value. `O(T^2)` dynamic program over the DAG; ties go to the smallest
/// next node, and to the sink when no continuation is strictly positive.
pub fn best_path(problem: &FlowProblem, node_mass: &[f64]) -> (Vec<usize>, f64) {
    let t = problem.len();
    let lambda = problem.lambda();
    let sink = t + 1;
    let mut value = vec![0.0; t + 1];
    let mut next = vec![sink; t + 1];
    for j in (1..=t).rev() {
        let mut best = 0.0;
        let mut best_k = sink;
        for k in (j + 1)..=t {
            if !problem.transition_allowed(j, k) {
                continue;
            }
            let v = value[k] - lambda * problem.distance(j, k);
            if v > best {
                best = v;
                best_k = k;
            }
        }
        value[j] = 1.0 / node_mass[j - 1] + best;
        next[j] = best_k;
    }
    let mut start = 1;
    for j in 2..=t {
        if value[j] > value[start] {
            start = j;
        }
    }
    let mut path = vec![start];
    let mut j = start;
    while next[j] != sink {
        j = next[j];
        path.push(j);
    }
    (path, value[start])
}

/// Summary of a restricted solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedOutcome {
    /// Max minus min derivative over paths with positive flow.
    pub spread: f64,
    pub steps: usize,
}

/// Working state of the active path set.
#[derive(Debug, Clone)]
struct ActiveSet {
    paths: Vec<Vec<usize>>,
    dist: Vec<f64>,
    flow: Vec<f64>,
    // indexed by node j (entry 0 unused)
    mass: Vec<f64>,
    grad: Vec<f64>,
}

impl ActiveSet {
    fn from_decomposition(problem: &FlowProblem, d: &PathDecomposition) -> Self {
        let mut s = Self {
            paths: d.paths.clone(),
            dist: d.path_distance.clone(),
            flow: d.flows.clone(),
            mass: vec![0.0; problem.len() + 1],
            grad: Vec::new(),
        };
        s.normalize();
        s
    }

    fn normalize(&mut self) {
        let total: f64 = self.flow.iter().sum();
        if total > 0.0 {
            for x in &mut self.flow {
                *x /= total;
            }
        }
        self.refresh_mass();
    }

    fn refresh_mass(&mut self) {
        self.mass.iter_mut().for_each(|m| *m = 0.0);
        for (p, &x) in self.paths.iter().zip(&self.flow) {
            for &j in p {
                self.mass[j] += x;
            }
        }
    }

    fn refresh_grad(&mut self, lambda: f64) {
        self.grad.clear();
        for (p, &d) in self.paths.iter().zip(&self.dist) {
            let g = p.iter().map(|&j| 1.0 / self.mass[j]).sum::<f64>() - lambda * d;
            self.grad.push(g);
        }
    }

    fn objective(&self, lambda: f64) -> f64 {
        let transport: f64 = self.flow.iter().zip(&self.dist).map(|(x, d)| x * d).sum();
        let loglik: f64 = self.mass[1..]
            .iter()
            .map(|&m| if m > 0.0 { math::ln(m) } else { f64::NEG_INFINITY })
            .sum();
        loglik - lambda * transport
    }

    fn contains(&self, path: &[usize]) -> bool {
        self.paths.iter().any(|p| p.as_slice() == path)
    }

    /// Re-optimizes the flows over the current paths until the derivative
    /// spread over positive-flow paths falls below
    /// `tol * (1 + max |derivative|)`. Zero-flow paths whose derivative beats
    /// every positive-flow path enter by a pairwise exact line search;
    /// otherwise a Newton step is taken on the positive-flow paths, with the
    /// pairwise step as fallback.
    fn optimize(&mut self, lambda: f64, tol: f64, slack: f64, max_steps: usize) -> RestrictedOutcome {
        let mut steps = 0;
        loop {
            self.refresh_grad(lambda);
            let mut a = 0;
            let mut b = usize::MAX;
            let mut top = usize::MAX;
            for i in 0..self.paths.len() {
                if self.grad[i] > self.grad[a] {
                    a = i;
                }
                if self.flow[i] > 0.0 {
                    if b == usize::MAX || self.grad[i] < self.grad[b] {
                        b = i;
                    }
                    if top == usize::MAX || self.grad[i] > self.grad[top] {
                        top = i;
                    }
                }
            }
            if b == usize::MAX {
                return RestrictedOutcome { spread: 0.0, steps };
            }
            let scale = 1.0 + self.grad.iter().fold(0.0f64, |s, g| s.max(math::abs(*g)));
            let spread = self.grad[a] - self.grad[b];
            if a == b || !(spread > tol * scale) || spread <= slack || steps >= max_steps {
                return RestrictedOutcome {
                    spread: self.grad[top] - self.grad[b],
                    steps,
                };
            }
            let moved = (self.flow[a] > 0.0 && self.newton(lambda)) || {
                let delta = self.line_search(a, b, lambda);
                if delta > 0.0 {
                    self.shift(a, b, delta);
                }
                delta > 0.0
            };
            if !moved {
                // no representable improvement left
                return RestrictedOutcome {
                    spread: self.grad[top] - self.grad[b],
                    steps,
                };
            }
            steps += 1;
            if steps % 64 == 0 {
                self.normalize();
            }
        }
    }

    /// Second-order step for the objective restricted to positive-flow paths
    /// on `sum x = 1`. Directions the masses cannot see carry only the linear
    /// distance term, so they are followed to the boundary first; otherwise
    /// a Newton step on the curved part is taken. Expects fresh gradients.
    fn newton(&mut self, lambda: f64) -> bool {
        let support: Vec<usize> = (0..self.paths.len()).filter(|&i| self.flow[i] > 0.0).collect();
        let k = support.len();
        if k < 2 {
            return false;
        }
        let nodes = self.mass.len();
        // paths through each node, as positions in `support`, stored flat
        let mut start = vec![0usize; nodes + 1];
        for &i in &support {
            for &j in &self.paths[i] {
                start[j + 1] += 1;
            }
        }
        for j in 0..nodes {
            start[j + 1] += start[j];
        }
        let mut fill = start.clone();
        let mut through = vec![0usize; start[nodes]];
        for (q, &i) in support.iter().enumerate() {
            for &j in &self.paths[i] {
                through[fill[j]] = q;
                fill[j] += 1;
            }
        }
        let mut h = DMatrix::<f64>::zeros(k, k);
        for j in 0..nodes {
            let list = &through[start[j]..start[j + 1]];
            let c = 1.0 / (self.mass[j] * self.mass[j]);
            for &p in list {
                for &q in list {
                    h[(p, q)] += c;
                }
            }
        }
        // Jacobi scaling: x = S z, and sum x = 0 becomes e'z = 0
        let scale: Vec<f64> = (0..k).map(|i| 1.0 / math::sqrt(h[(i, i)])).collect();
        let norm = math::sqrt(scale.iter().map(|s| s * s).sum::<f64>());
        let e = DVector::from_iterator(k, scale.iter().map(|s| s / norm));
        let mut g = DVector::from_iterator(k, support.iter().enumerate().map(|(q, &i)| self.grad[i] * scale[q]));
        g -= &e * e.dot(&g);
        for q in 0..k {
            for p in 0..k {
                h[(p, q)] *= scale[p] * scale[q];
            }
        }
        let he = &h * &e;
        let ehe = e.dot(&he);
        // P H P with P = I - e e', in place
        for q in 0..k {
            for p in 0..k {
                h[(p, q)] += e[p] * e[q] * ehe - he[p] * e[q] - e[p] * he[q];
            }
        }
        let proj = h;
        let (piv, l, rank) = pivoted_cholesky(&proj, NULL_PIVOT);
        let (basis, rest) = piv.split_at(rank);
        // Newton step on the pivoted block
        let gb: Vec<f64> = basis.iter().map(|&i| g[i]).collect();
        let zb = back_solve(&l, basis, &forward_solve(&l, basis, &gb));
        let mut curved = DVector::<f64>::zeros(k);
        for (a, &i) in basis.iter().enumerate() {
            curved[i] = zb[a];
        }
        // null vectors e_c - M_BB^-1 M_Bc for the remaining columns, weighted
        // by their linear gain
        let mut flat = DVector::<f64>::zeros(k);
        let mut acc = vec![0.0; rank];
        for &c in rest {
            let w = back_solve(&l, basis, &(0..rank).map(|r| l[(r, c)]).collect::<Vec<f64>>());
            let gain = g[c] - gb.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>();
            flat[c] = gain;
            for (a, wa) in acc.iter_mut().zip(&w) {
                *a += gain * wa;
            }
        }
        for (a, &i) in basis.iter().enumerate() {
            flat[i] = -acc[a];
        }
        let curved = &curved - &e * e.dot(&curved);
        let flat = &flat - &e * e.dot(&flat);
        for cand in [flat, curved] {
            let mut dir: Vec<f64> = (0..k).map(|q| cand[q] * scale[q]).collect();
            let mean = dir.iter().sum::<f64>() / k as f64;
            dir.iter_mut().for_each(|d| *d -= mean);
            if dir.iter().all(|d| *d == 0.0) {
                continue;
            }
            if self.step_along(&support, &dir, lambda) {
                return true;
            }
        }
        false
    }

    /// Exact line search along `dir` over the support, capped where the first
    /// flow reaches zero.
    fn step_along(&mut self, support: &[usize], dir: &[f64], lambda: f64) -> bool {
        let nodes = self.mass.len();
        let mut cap = f64::INFINITY;
        let mut blocking = usize::MAX;
        for (q, &i) in support.iter().enumerate() {
            if dir[q] < 0.0 {
                let r = -self.flow[i] / dir[q];
                if r < cap {
                    cap = r;
                    blocking = q;
                }
            }
        }
        if !cap.is_finite() {
            return false;
        }
        let mut u = vec![0.0; nodes];
        let mut lin = 0.0;
        for (q, &i) in support.iter().enumerate() {
            for &j in &self.paths[i] {
                u[j] += dir[q];
            }
            lin += lambda * self.dist[i] * dir[q];
        }
        let touched: Vec<usize> = (1..nodes).filter(|&j| u[j] != 0.0).collect();
        let slope = |s: f64| -> f64 { touched.iter().map(|&j| u[j] / (self.mass[j] + s * u[j])).sum::<f64>() - lin };
        let curve = |s: f64| -> f64 {
            -touched
                .iter()
                .map(|&j| {
                    let r = u[j] / (self.mass[j] + s * u[j]);
                    r * r
                })
                .sum::<f64>()
        };
        if !(slope(0.0) > 0.0) {
            return false;
        }
        let step = if slope(cap) >= 0.0 {
            cap
        } else {
            // slope decreases in s: slope(lo) > 0 > slope(hi)
            let (mut lo, mut hi) = (0.0, cap);
            let mut s = 0.0;
            for _ in 0..200 {
                let v = slope(s);
                if v > 0.0 {
                    lo = s;
                } else if v < 0.0 {
                    hi = s;
                } else {
                    lo = s;
                    break;
                }
                let mut next = s - v / curve(s);
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if math::abs(next - s) <= 1e-14 * s {
                    lo = s;
                    break;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
                s = next;
            }
            lo
        };
        if !(step > 0.0) {
            return false;
        }
        let before: Vec<f64> = support.iter().map(|&i| self.flow[i]).collect();
        let mut step = step;
        for _ in 0..60 {
            for (q, &i) in support.iter().enumerate() {
                self.flow[i] = if step == cap && q == blocking {
                    0.0
                } else {
                    (before[q] + step * dir[q]).max(0.0)
                };
            }
            self.refresh_mass();
            if self.mass[1..].iter().all(|&m| m > 0.0) {
                return support.iter().zip(&before).any(|(&i, b)| self.flow[i] != *b);
            }
            step *= 0.5;
        }
        for (q, &i) in support.iter().enumerate() {
            self.flow[i] = before[q];
        }
        self.refresh_mass();
        false
    }

    /// Root in `(0, x_b]` of the directional derivative for moving flow from
    /// path `b` to path `a`.
    fn line_search(&self, a: usize, b: usize, lambda: f64) -> f64 {
        let pa = &self.paths[a];
        let pb = &self.paths[b];
        let gain: Vec<f64> = pa
            .iter()
            .filter(|j| !pb.contains(j))
            .map(|&j| self.mass[j])
            .collect();
        let cap = self.flow[b];
        // a node on b alone carries at least x_b
        let lose: Vec<f64> = pb
            .iter()
            .filter(|j| !pa.contains(j))
            .map(|&j| self.mass[j].max(cap))
            .collect();
        let lin = lambda * (self.dist[a] - self.dist[b]);
        let h = |d: f64| -> f64 {
            gain.iter().map(|m| 1.0 / (m + d)).sum::<f64>()
                - lose.iter().map(|m| 1.0 / (m - d)).sum::<f64>()
                - lin
        };
        let dh = |d: f64| -> f64 {
            -gain.iter().map(|m| 1.0 / ((m + d) * (m + d))).sum::<f64>()
                - lose.iter().map(|m| 1.0 / ((m - d) * (m - d))).sum::<f64>()
        };
        let h_cap = h(cap);
        if h_cap >= 0.0 {
            return cap;
        }
        // h is decreasing: h(lo) > 0 > h(hi)
        let (mut lo, mut hi) = (0.0, cap);
        let mut d = 0.0;
        for _ in 0..200 {
            let hv = h(d);
            if hv > 0.0 {
                lo = d;
            } else if hv < 0.0 {
                hi = d;
            } else {
                return d;
            }
            let slope = dh(d);
            let mut cand = d - hv / slope;
            if !(cand > lo && cand < hi) {
                cand = 0.5 * (lo + hi);
            }
            if math::abs(cand - d) <= 1e-14 * d {
                return d;
            }
            if hi - lo <= 1e-17 + 1e-15 * hi {
                break;
            }
            d = cand;
        }
        lo
    }

    fn shift(&mut self, a: usize, b: usize, delta: f64) {
        if delta >= self.flow[b] {
            let moved = self.flow[b];
            self.flow[b] = 0.0;
            self.flow[a] += moved;
            for &j in &self.paths[b] {
                self.mass[j] -= moved;
            }
            for &j in &self.paths[a] {
                self.mass[j] += moved;
            }
            // recompute exactly so drained nodes do not drift negative
            self.refresh_mass();
        } else {
            self.flow[b] -= delta;
            self.flow[a] += delta;
            for &j in &self.paths[b] {
                self.mass[j] -= delta;
            }
            for &j in &self.paths[a] {
                self.mass[j] += delta;
            }
        }
    }

    /// Drops paths below [`PRUNE_FLOW`] unless a node would lose all mass.
    fn prune(&mut self) {
        let mut keep = vec![true; self.paths.len()];
        for i in 0..self.paths.len() {
            if self.flow[i] >= PRUNE_FLOW {
                continue;
            }
            let sole_cover = self.paths[i]
                .iter()
                .any(|&j| self.mass[j] - self.flow[i] <= 0.0);
            if !sole_cover {
                keep[i] = false;
                for &j in &self.paths[i] {
                    self.mass[j] -= self.flow[i];
                }
            }
        }
        let mut k = 0;
        self.paths.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let mut k = 0;
        self.dist.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let mut k = 0;
        self.flow.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        self.normalize();
    }

    fn decomposition(&self) -> PathDecomposition {
        PathDecomposition {
            paths: self.paths.clone(),
            flows: self.flow.clone(),
            path_distance: self.dist.clone(),
        }
    }
}

/// Maximizes the path-flow objective over the simplex spanned by `paths`,
/// starting from uniform flows. Nodes that no path covers are ignored.
/// Paths ending below [`PRUNE_FLOW`] are dropped from the result.
pub fn restricted_solve(
    paths: &[Vec<usize>],
    problem: &FlowProblem,
    inner_tol: f64,
) -> Result<PathDecomposition> {
    if paths.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = paths.len() as f64;
    let init = PathDecomposition::new(problem, paths.to_vec(), vec![1.0 / k; paths.len()])?;
    let mut active = ActiveSet::from_decomposition(problem, &init);
    active.optimize(problem.lambda(), inner_tol, 0.0, usize::MAX);
    active.prune();
    Ok(active.decomposition())
}

/// Greedy path stripping: repeatedly follow the largest residual arc out of
/// each node from the source to the sink and remove the bottleneck flow.
pub fn decompose_flow(problem: &FlowProblem, w: &ArcFlows) -> Result<PathDecomposition> {
    let report = check_feasible(problem, w);
    if !report.is_feasible() {
        return Err(Error::InfeasibleFlow(format!("{:?}", report.violations)));
    }
    const DUST: f64 = 1e-15;
    let t = problem.len();
    let sink = t + 1;
    let mut residual = w.clone();
    let mut paths = Vec::new();
    let mut flows = Vec::new();
    let max_paths = problem.arc_count();
    while residual.outflow(0) > 1e-12 {
        if paths.len() >= max_paths {
            return Err(Error::InfeasibleFlow("decomposition did not terminate".into()));
        }
        let mut nodes = Vec::new();
        let mut node = 0;
        let mut bottleneck = f64::INFINITY;
        while node != sink {
            let mut best = DUST;
            let mut best_k = None;
            for k in (node + 1)..=sink {
                let v = residual.get(node, k);
                if v > best {
                    best = v;
                    best_k = Some(k);
                }
            }
            let Some(k) = best_k else {
                if residual.outflow(0) <= 1e-10 {
                    break;
                }
                return Err(Error::InfeasibleFlow(format!("flow stalls at node {node}")));
            };
            bottleneck = bottleneck.min(best);
            if k != sink {
                nodes.push(k);
            }
            node = k;
        }
        if node != sink {
            break;
        }
        let mut prev = 0;
        for &j in nodes.iter().chain(core::iter::once(&sink)) {
            residual.add(prev, j, -bottleneck);
            prev = j;
        }
        paths.push(nodes);
        flows.push(bottleneck);
    }
    PathDecomposition::new(problem, paths, flows)
}

/// Best-path derivative minus the flow-weighted mean derivative of the
/// given paths. Zero exactly at an optimum.
pub fn kkt_gap(problem: &FlowProblem, decomposition: &PathDecomposition) -> Result<f64> {
    let t = problem.len();
    let mass = decomposition.node_masses(t);
    if let Some(j) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroNodeMass { node: j + 1 });
    }
    let total = decomposition.total_flow();
    let mean = decomposition
        .paths
        .iter()
        .zip(&decomposition.flows)
        .zip(&decomposition.path_distance)
        .map(|((p, &x), &d)| x * path_derivative(problem, p, d, &mass))
        .sum::<f64>()
        / total;
    let (_, best) = best_path(problem, &mass);
    Ok(best - mean)
}

/// Solves from the sample-average start: every singleton path with flow `1/T`.
pub fn solve(problem: &FlowProblem, opts: &SolverOptions) -> Result<FlowSolution> {
    let t = problem.len();
    let paths: Vec<Vec<usize>> = (1..=t).map(|j| vec![j]).collect();
    let init = PathDecomposition::new(problem, paths, vec![1.0 / t as f64; t])?;
    solve_from(problem, &init, opts)
}

/// Solves from a caller-supplied path flow, which must give every
/// observation positive mass.
pub fn solve_from(
    problem: &FlowProblem,
    init: &PathDecomposition,
    opts: &SolverOptions,
) -> Result<FlowSolution> {
    opts.validate()?;
    let t = problem.len();
    if t == 0 {
        return Err(Error::EmptyInput);
    }
    for p in &init.paths {
        validate_path(problem, p)?;
    }
    if let Some(j) = init.node_masses(t).iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroNodeMass { node: j + 1 });
    }
    let lambda = problem.lambda();
    let mut active = ActiveSet::from_decomposition(problem, init);
    let mut last_objective = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut slack = 0.0;
    loop {
        active.optimize(lambda, opts.inner_tol, slack, opts.max_iters);
        active.prune();
        let obj = active.objective(lambda);
        debug_assert!(
            obj >= last_objective - 1e-11 * (1.0 + math::abs(obj)),
            "objective decreased: {last_objective} -> {obj}"
        );
        last_objective = last_objective.max(obj);

        active.refresh_grad(lambda);
        let mu: f64 = active.flow.iter().zip(&active.grad).map(|(x, g)| x * g).sum();
        let (path, best) = best_path(problem, &active.mass[1..]);
        let gap = (best - mu).max(0.0);
        if gap <= opts.gap_tol {
            return finish(problem, &active, mu, gap, iterations);
        }
        slack = INNER_SLACK * gap;
        iterations += 1;
        if iterations >= opts.max_iters {
            let best = finish(problem, &active, mu, gap, iterations)?;
            return Err(Error::NotConverged {
                iterations,
                gap,
                best: alloc::boxed::Box::new(best),
            });
        }
        if !active.contains(&path) {
            let d = path_distance(problem, &path);
            active.paths.push(path);
            active.dist.push(d);
            active.flow.push(0.0);
        }
    }
}

fn finish(
    problem: &FlowProblem,
    active: &ActiveSet,
    mu_path: f64,
    gap: f64,
    iterations: usize,
) -> Result<FlowSolution> {
    let t = problem.len();
    let paths = active.decomposition();
    let w = paths.recompose(t);
    let node_mass = w.node_masses();
    let terminal = WeightedEmpirical::new((1..=t).map(|i| w.get(i, t + 1)).collect())?;
    let objective = objective(problem, &w)?;
    Ok(FlowSolution {
        w,
        objective,
        node_mass,
        terminal,
        mu_path,
        gap,
        paths,
        iterations,
    })
}

/// Cholesky factorization with diagonal pivoting of a positive semidefinite
/// matrix, stopped once the remaining diagonal falls below `tol` times the
/// largest. Returns the pivot order, the factor (row `r` holds column `r` of
/// L, indexed by original position) and the rank.
fn pivoted_cholesky(m: &DMatrix<f64>, tol: f64) -> (Vec<usize>, DMatrix<f64>, usize) {
    let k = m.nrows();
    let mut piv: Vec<usize> = (0..k).collect();
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut d: Vec<f64> = (0..k).map(|i| m[(i, i)]).collect();
    let top = d.iter().fold(0.0f64, |a, v| a.max(*v));
    let mut rank = 0;
    for r in 0..k {
        let best = (r..k).max_by(|&a, &b| d[piv[a]].total_cmp(&d[piv[b]])).unwrap();
        if !(d[piv[best]] > tol * top) {
            break;
        }
        piv.swap(r, best);
        let p = piv[r];
        let lpp = math::sqrt(d[p]);
        l[(r, p)] = lpp;
        for &i in &piv[r + 1..] {
            let mut v = m[(i, p)];
            for s in 0..r {
                v -= l[(s, i)] * l[(s, p)];
            }
            v /= lpp;
            l[(r, i)] = v;
            d[i] -= v * v;
        }
        rank = r + 1;
    }
    (piv, l, rank)
}

/// Solves `L11 y = b` for the leading block of a [`pivoted_cholesky`] factor.
fn forward_solve(l: &DMatrix<f64>, basis: &[usize], b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for a in 0..basis.len() {
        for s in 0..a {
            y[a] -= l[(s, basis[a])] * y[s];
        }
        y[a] /= l[(a, basis[a])];
    }
    y
}

/// Solves `L11' z = y`.
fn back_solve(l: &DMatrix<f64>, basis: &[usize], y: &[f64]) -> Vec<f64> {
    let mut z = y.to_vec();
    for a in (0..basis.len()).rev() {
        for s in a + 1..basis.len() {
            z[a] -= l[(a, basis[s])] * z[s];
        }
        z[a] /= l[(a, basis[a])];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Metric;
    use crate::model::{build_problem, ObservationSeries};

    fn problem(xs: &[f64], lambda: f64) -> FlowProblem {
        let s = ObservationSeries::from_scalars(xs).unwrap();
        build_problem(&s, &Metric::L2, lambda, false).unwrap()
    }

    #[test]
    fn pivoted_cholesky_rank_and_solve() {
        // rows of a 4x3 incidence matrix; the third column is the sum of the
        // first two, so B'B has rank 2
        let b = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
        let m = b.transpose() * &b;
        let (piv, l, rank) = pivoted_cholesky(&m, 1e-10);
        assert_eq!(rank, 2);
        let basis = &piv[..rank];
        let rhs: Vec<f64> = basis.iter().map(|&i| (i + 1) as f64).collect();
        let z = back_solve(&l, basis, &forward_solve(&l, basis, &rhs));
        for (a, &i) in basis.iter().enumerate() {
            let v: f64 = basis.iter().zip(&z).map(|(&j, zj)| m[(i, j)] * zj).sum();
            assert!((v - rhs[a]).abs() < 1e-12);
        }
        let full = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        assert_eq!(pivoted_cholesky(&full, 1e-10).2, 2);
    }

    #[test]
    fn pairwise_root_approached_from_above() {
        // the drained side dominates, so Newton iterates stay right of the root
        let gain = [0.028096, 0.028096, 0.031190, 0.040516, 0.046020];
        let mut paths: Vec<Vec<usize>> = (1..=5).map(|j| vec![j]).collect();
        let mut flow = gain.to_vec();
        paths.push(vec![6]);
        flow.push(0.023028 - 0.019047);
        paths.push(vec![6, 7, 8]);
        flow.push(0.019047);
        paths.push(vec![1, 2, 3, 4, 5]);
        flow.push(0.0);
        let mut dist = vec![0.0; paths.len()];
        dist[6] = 0.228430;
        let mut s = ActiveSet {
            paths,
            dist,
            flow,
            mass: vec![0.0; 9],
            grad: Vec::new(),
        };
        s.refresh_mass();
        let delta = s.line_search(7, 6, 1.0);
        assert!(delta > 1e-4 && delta < 1.3e-4, "{delta}");
    }

    #[test]
    fn best_path_single_node() {
        let p = problem(&[3.0], 1.0);
        let (path, v) = best_path(&p, &[0.5]);
        assert_eq!(path, vec![1]);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn best_path_zero_lambda_is_full_chain() {
        let t = 5;
        let xs: Vec<f64> = (0..t).map(|i| i as f64 * 1.3).collect();
        let p = problem(&xs, 0.0);
        let (path, v) = best_path(&p, &vec![1.0 / t as f64; t]);
        assert_eq!(path, (1..=t).collect::<Vec<_>>());
        assert!((v - (t * t) as f64).abs() < 1e-12);
    }

    #[test]
    fn best_path_respects_forbidden() {
        let s = ObservationSeries::with_periods(&[[0.0], [0.0], [0.0]], vec![1, 1, 2]).unwrap();
        let p = build_problem(&s, &Metric::L1, 1.0, true).unwrap();
        let (path, _) = best_path(&p, &[1.0, 1.0, 1.0]);
        assert!(!path.windows(2).any(|e| e == [1, 2]));
        assert_eq!(path, vec![1, 3]);
    }

    #[test]
    fn restricted_single_path() {
        let p = problem(&[1.0, 2.0, 4.0], 1.0);
        let d = restricted_solve(&[vec![1, 3]], &p, 1e-12).unwrap();
        assert_eq!(d.flows, vec![1.0]);
    }

    #[test]
    fn restricted_symmetric_clusters() {
        // two identical clusters far apart, each covered by one path
        let p = problem(&[0.0, 10.0, 0.0, 10.0], 1.0);
        let d = restricted_solve(&[vec![1, 3], vec![2, 4]], &p, 1e-12).unwrap();
        assert!((d.flows[0] - 0.5).abs() < 1e-12);
        assert!((d.flows[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn restricted_appendix_prefix() {
        let xs = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0, -1.0, -1.0];
        let p = problem(&xs, 4.0);
        let paths = vec![
            vec![6],
            vec![1, 2, 3, 4, 5, 6],
            vec![7, 8, 9],
            vec![1, 2, 3, 4, 5, 7, 8, 9],
        ];
        let d = restricted_solve(&paths, &p, 1e-12).unwrap();
        let x2 = d
            .paths
            .iter()
            .zip(&d.flows)
            .find(|(p, _)| p.as_slice() == [1, 2, 3, 4, 5, 6])
            .map(|(_, &x)| x)
            .unwrap();
        assert!((x2 - 0.25).abs() < 1e-9, "{x2}");
    }

    #[test]
    fn decompose_single_unit_path() {
        let p = problem(&[1.0, 2.0], 1.0);
        let mut w = ArcFlows::zeros(2);
        w.set(0, 1, 1.0);
        w.set(1, 3, 1.0);
        let d = decompose_flow(&p, &w).unwrap();
        assert_eq!(d.paths, vec![vec![1]]);
        assert_eq!(d.flows, vec![1.0]);
    }

    #[test]
    fn decompose_rejects_infeasible() {
        let p = problem(&[1.0, 2.0], 1.0);
        let mut w = ArcFlows::zeros(2);
        w.set(0, 1, 0.5);
        assert!(matches!(decompose_flow(&p, &w), Err(Error::InfeasibleFlow(_))));
    }

    #[test]
    fn kkt_gap_zero_mass_error() {
        let p = problem(&[1.0, 1.0], 1.0);
        let d = PathDecomposition::new(&p, vec![vec![1]], vec![1.0]).unwrap();
        assert!(matches!(kkt_gap(&p, &d), Err(Error::ZeroNodeMass { node: 2 })));
    }

    #[test]
    fn kkt_gap_saa_with_huge_lambda() {
        let xs = [6.13, 7.85, 6.47, 4.91, 5.54, 7.13];
        let p = problem(&xs, 1e6);
        let d = PathDecomposition::new(&p, (1..=6).map(|j| vec![j]).collect(), vec![1.0 / 6.0; 6]).unwrap();
        assert!(kkt_gap(&p, &d).unwrap().abs() < 1e-9);
    }

    #[test]
    fn zero_lambda_point_masses() {
        let p = problem(&[3.0, -1.0, 2.5, 7.0], 0.0);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert!(s.objective.abs() < 1e-9);
        for m in &s.node_mass {
            assert!((m - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_options() {
        let p = problem(&[1.0], 1.0);
        let opts = SolverOptions {
            gap_tol: 0.0,
            ..Default::default()
        };
        assert!(solve(&p, &opts).is_err());
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let p = problem(&[6.13, 7.85, 6.47, 4.91, 5.54, 7.13], 4.0);
        let opts = SolverOptions {
            max_iters: 1,
            ..Default::default()
        };
        match solve(&p, &opts) {
            Err(Error::NotConverged { best, gap, .. }) => {
                assert!(gap > 1e-8);
                assert!((best.terminal.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
