//! Observation series and the reduced network-flow program.
//!
//! Node `0` is the source, nodes `1..=T` are the observations in time order
//! and node `T + 1` is the sink. Flow only moves forward in time, so every
//! arc `(i, j)` has `i < j`; the arc `(0, T + 1)` does not exist.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::baselines::WeightedEmpirical;
use crate::math;
use crate::metric::{pairwise_distances, DistanceMatrix, Metric};
use crate::solver::PathDecomposition;
use crate::{Error, Result};

/// Absolute tolerance for flow conservation and unit source mass.
pub const CONSERVATION_TOL: f64 = 1e-10;

/// Ordered observations `xi_1..xi_T` in `R^m` with period labels `s(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    dim: usize,
    data: Vec<f64>,
    periods: Vec<u32>,
}

impl ObservationSeries {
    /// One observation per period.
    pub fn new<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let periods = (1..=points.len() as u32).collect();
        Self::with_periods(points, periods)
    }

    /// Periods must start at 1, be nondecreasing and have no gaps.
    pub fn with_periods<P: AsRef<[f64]>>(points: &[P], periods: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dim = points[0].as_ref().len();
        if dim == 0 {
            return Err(Error::EmptyInput);
        }
        if periods.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: periods.len(),
            });
        }
        if periods[0] != 1 {
            return Err(Error::InvalidSeries(format!(
                "first period label is {}, expected 1",
                periods[0]
            )));
        }
        for (t, w) in periods.windows(2).enumerate() {
            if w[1] != w[0] && w[1] != w[0] + 1 {
                return Err(Error::InvalidSeries(format!(
                    "period labels must be nondecreasing without gaps (position {})",
                    t + 2
                )));
            }
        }
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSeries("non-finite coordinate".into()));
            }
            data.extend_from_slice(p);
        }
        Ok(Self { dim, data, periods })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        let pts: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        Self::new(&pts)
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Observation `t` (0-based).
    pub fn point(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn periods(&self) -> &[u32] {
        &self.periods
    }

    pub fn period_count(&self) -> u32 {
        *self.periods.last().unwrap()
    }

    /// The first `len` observations.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::InvalidParameter {
                name: "prefix length",
                value: len as f64,
            });
        }
        Ok(Self {
            dim: self.dim,
            data: self.data[..len * self.dim].to_vec(),
            periods: self.periods[..len].to_vec(),
        })
    }

    /// Same observations in reverse time order (period labels relabelled).
    pub fn reversed(&self) -> Self {
        let t = self.len();
        let mut data = Vec::with_capacity(self.data.len());
        for i in (0..t).rev() {
            data.extend_from_slice(self.point(i));
        }
        let last = self.period_count();
        let periods = self.periods.iter().rev().map(|s| last + 1 - s).collect();
        Self {
            dim: self.dim,
            data,
            periods,
        }
    }

    /// Swaps the observations at 0-based positions `a` and `b`, keeping the
    /// period labels in place.
    pub fn swapped(&self, a: usize, b: usize) -> Self {
        let mut out = self.clone();
        for k in 0..self.dim {
            out.data.swap(a * self.dim + k, b * self.dim + k);
        }
        out
    }
}

/// A free arc of the reduced program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
}

/// The reduced network-flow maximum-likelihood program for one series.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    t: usize,
    dist: DistanceMatrix,
    lambda: f64,
    // observation pairs (i, j), 1-based, i < j, fixed to zero
    forbidden: BTreeSet<(usize, usize)>,
    // dense lookup over observation pairs, row-major T x T (0-based)
    allowed: Vec<bool>,
}

impl FlowProblem {
    pub fn new(dist: DistanceMatrix, lambda: f64, forbidden: BTreeSet<(usize, usize)>) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: lambda,
            });
        }
        let t = dist.len();
        let mut allowed = vec![false; t * t];
        for i in 0..t {
            for j in (i + 1)..t {
                allowed[i * t + j] = true;
            }
        }
        for &(i, j) in &forbidden {
            if i == 0 || j > t || i >= j {
                return Err(Error::InvalidSeries(format!(
                    "forbidden arc ({i}, {j}) is not an observation arc"
                )));
            }
            allowed[(i - 1) * t + (j - 1)] = false;
        }
        Ok(Self {
            t,
            dist,
            lambda,
            forbidden,
            allowed,
        })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn sink(&self) -> usize {
        self.t + 1
    }

    /// Distance between observation nodes `i` and `j` (1-based).
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i - 1, j - 1)
    }

    /// Whether flow may move from observation node `i` to `j` (1-based).
    #[inline]
    pub fn transition_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[(i - 1) * self.t + (j - 1)]
    }

    pub fn forbidden(&self) -> &BTreeSet<(usize, usize)> {
        &self.forbidden
    }

    /// Whether `(from, to)` is a free arc of the program.
    pub fn is_arc(&self, from: usize, to: usize) -> bool {
        let sink = self.sink();
        if from >= to || to > sink {
            return false;
        }
        match (from, to) {
            (0, t) if t == sink => false,
            (0, _) => true,
            (_, t) if t == sink => true,
            (i, j) => self.transition_allowed(i, j),
        }
    }

    /// Free arcs: `(0, j)`, then allowed `(i, j)` with `i < j`, then `(i, T + 1)`.
    pub fn arcs(&self) -> Vec<Arc> {
        let t = self.t;
        let mut out: Vec<Arc> = (1..=t).map(|j| Arc { from: 0, to: j }).collect();
        for i in 1..=t {
            for j in (i + 1)..=t {
                if self.transition_allowed(i, j) {
                    out.push(Arc { from: i, to: j });
                }
            }
        }
        out.extend((1..=t).map(|i| Arc {
            from: i,
            to: t + 1,
        }));
        out
    }

    pub fn arc_count(&self) -> usize {
        2 * self.t + self.t * (self.t - 1) / 2 - self.forbidden.len()
    }
}

/// Builds the reduced program. With `grouped`, every observation arc inside a
/// period is fixed to zero.
pub fn build_problem(
    series: &ObservationSeries,
    metric: &Metric,
    lambda: f64,
    grouped: bool,
) -> Result<FlowProblem> {
    let pts: Vec<&[f64]> = series.points().collect();
    let dist = pairwise_distances(&pts, metric)?;
    let mut forbidden = BTreeSet::new();
    if grouped {
        let s = series.periods();
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                if s[i] == s[j] {
                    forbidden.insert((i + 1, j + 1));
                } else {
                    break;
                }
            }
        }
    }
    FlowProblem::new(dist, lambda, forbidden)
}

/// Arc flows over nodes `0..=T+1`, stored as a packed upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcFlows {
    t: usize,
    vals: Vec<f64>,
}

impl ArcFlows {
    pub fn zeros(t: usize) -> Self {
        let n = t + 2;
        Self {
            t,
            vals: vec![0.0; n * (n - 1) / 2],
        }
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j <= self.t + 1);
        let n = self.t + 2;
        // rows 0..i hold (n-1) + (n-2) + ... entries
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j || j > self.t + 1 {
            return 0.0;
        }
        self.vals[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.vals[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.vals[k] += v;
    }

    /// `sum_i w(i, j)`.
    pub fn inflow(&self, j: usize) -> f64 {
        (0..j).map(|i| self.get(i, j)).sum()
    }

    /// `sum_k w(j, k)`.
    pub fn outflow(&self, j: usize) -> f64 {
        ((j + 1)..=self.t + 1).map(|k| self.get(j, k)).sum()
    }

    /// Inflow `p_j(j)` at each observation node, indexed by `j - 1`.
    pub fn node_masses(&self) -> Vec<f64> {
        (1..=self.t).map(|j| self.inflow(j)).collect()
    }

    /// Nonzero entries as `(from, to, flow)`.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..=self.t {
            for j in (i + 1)..=self.t + 1 {
                let v = self.get(i, j);
                if v.abs() > threshold {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ArcFlows) -> f64 {
        self.vals
            .iter()
            .zip(&other.vals)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }
}

/// A solved program.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub w: ArcFlows,
    pub objective: f64,
    /// `p_j(j)` for `j = 1..=T`, indexed by `j - 1`.
    pub node_mass: Vec<f64>,
    /// `w(i, T + 1)` over observations.
    pub terminal: WeightedEmpirical,
    /// Common path derivative of the active paths at termination.
    pub mu_path: f64,
    /// Best-path derivative minus the flow-weighted mean active derivative.
    pub gap: f64,
    /// Active path flows at termination.
    pub paths: PathDecomposition,
    pub iterations: usize,
}

impl FlowSolution {
    /// Source distribution `w(0, j)`, indexed by `j - 1`.
    pub fn initial(&self) -> Vec<f64> {
        (1..=self.w.len()).map(|j| self.w.get(0, j)).collect()
    }
}

/// Objective of the reduced program:
/// `sum_j log(p_j(j)) - lambda * sum d(i,j) w(i,j)`, `-inf` when a node mass is 0.
pub fn objective(problem: &FlowProblem, w: &ArcFlows) -> Result<f64> {
    let t = problem.len();
    if w.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: w.len(),
        });
    }
    let mut transport = 0.0;
    for i in 0..=t {
        for j in (i + 1)..=t + 1 {
            let v = w.get(i, j);
            if v < 0.0 {
                return Err(Error::NegativeFlow {
                    from: i,
                    to: j,
                    value: v,
                });
            }
            if i >= 1 && j <= t {
                transport += problem.distance(i, j) * v;
            }
        }
    }
    let mut loglik = 0.0;
    for j in 1..=t {
        let m = w.inflow(j);
        if m <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        loglik += math::ln(m);
    }
    Ok(loglik - problem.lambda() * transport)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Total flow out of the source differs from 1.
    SourceMass { total: f64 },
    /// Inflow minus outflow at an observation node.
    Conservation { node: usize, residual: f64 },
    NegativeFlow { from: usize, to: usize, value: f64 },
    /// Flow on an arc that is fixed to zero.
    ForbiddenArc { from: usize, to: usize, value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_feasible(problem: &FlowProblem, w: &ArcFlows) -> FeasibilityReport {
    let t = problem.len();
    let mut violations = Vec::new();
    if w.len() != t {
        violations.push(Violation::SourceMass { total: f64::NAN });
        return FeasibilityReport { violations };
    }
    for i in 0..=t {
        for j in (i + 1)..=t + 1 {
            let v = w.get(i, j);
            if v < 0.0 {
                violations.push(Violation::NegativeFlow { from: i, to: j, value: v });
            }
            if v != 0.0 && !problem.is_arc(i, j) {
                violations.push(Violation::ForbiddenArc { from: i, to: j, value: v });
            }
        }
    }
    let total = w.outflow(0);
    if math::abs(total - 1.0) > CONSERVATION_TOL {
        violations.push(Violation::SourceMass { total });
    }
    for j in 1..=t {
        let residual = w.inflow(j) - w.outflow(j);
        if math::abs(residual) > CONSERVATION_TOL {
            violations.push(Violation::Conservation { node: j, residual });
        }
    }
    FeasibilityReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_series() -> ObservationSeries {
        ObservationSeries::from_scalars(&[6.13, 7.85, 6.47, 4.91, 5.54, 7.13]).unwrap()
    }

    #[test]
    fn series_validation() {
        let pts = [[1.0], [2.0], [3.0]];
        assert!(ObservationSeries::with_periods(&pts, vec![1, 1, 2]).is_ok());
        assert!(ObservationSeries::with_periods(&pts, vec![2, 2, 3]).is_err());
        assert!(ObservationSeries::with_periods(&pts, vec![1, 3, 3]).is_err());
        assert!(ObservationSeries::with_periods(&pts, vec![1, 2, 1]).is_err());
        let empty: [[f64; 1]; 0] = [];
        assert!(ObservationSeries::new(&empty).is_err());
        let s = ObservationSeries::new(&pts).unwrap();
        assert_eq!(s.periods(), &[1, 2, 3]);
    }

    #[test]
    fn reverse_and_swap() {
        let s = ObservationSeries::with_periods(&[[1.0], [2.0], [3.0]], vec![1, 1, 2]).unwrap();
        let r = s.reversed();
        assert_eq!(r.point(0), &[3.0]);
        assert_eq!(r.periods(), &[1, 2, 2]);
        let w = s.swapped(0, 2);
        assert_eq!(w.point(0), &[3.0]);
        assert_eq!(w.point(2), &[1.0]);
    }

    #[test]
    fn example_arc_count() {
        let p = build_problem(&example_series(), &Metric::L2, 4.0, false).unwrap();
        assert_eq!(p.arcs().len(), 6 + 15 + 6);
        assert_eq!(p.arc_count(), 27);
        assert!(p.forbidden().is_empty());
    }

    #[test]
    fn single_observation_arcs() {
        let s = ObservationSeries::from_scalars(&[1.0]).unwrap();
        let p = build_problem(&s, &Metric::L2, 1.0, false).unwrap();
        assert_eq!(p.arcs(), vec![Arc { from: 0, to: 1 }, Arc { from: 1, to: 2 }]);
        assert!(!p.is_arc(0, 2));
    }

    #[test]
    fn grouped_forbids_same_period() {
        let s = ObservationSeries::with_periods(&[[1.0], [2.0], [3.0]], vec![1, 1, 2]).unwrap();
        let p = build_problem(&s, &Metric::L1, 1.0, true).unwrap();
        assert_eq!(p.forbidden().iter().copied().collect::<Vec<_>>(), vec![(1, 2)]);
        assert!(!p.is_arc(1, 2));
        assert!(p.is_arc(1, 3));
        let ungrouped = build_problem(&s, &Metric::L1, 1.0, false).unwrap();
        assert!(ungrouped.forbidden().is_empty());
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(build_problem(&example_series(), &Metric::L2, -1.0, false).is_err());
    }

    #[test]
    fn packed_index_roundtrip() {
        let mut w = ArcFlows::zeros(4);
        let mut k = 0.0;
        for i in 0..=4 {
            for j in (i + 1)..=5 {
                k += 1.0;
                w.set(i, j, k);
            }
        }
        let mut k = 0.0;
        for i in 0..=4 {
            for j in (i + 1)..=5 {
                k += 1.0;
                assert_eq!(w.get(i, j), k);
            }
        }
    }

    #[test]
    fn objective_identical_pair() {
        let s = ObservationSeries::from_scalars(&[2.0, 2.0]).unwrap();
        let p = build_problem(&s, &Metric::L2, 3.0, false).unwrap();
        let mut w = ArcFlows::zeros(2);
        w.set(0, 1, 1.0);
        w.set(1, 2, 1.0);
        w.set(2, 3, 1.0);
        assert_eq!(objective(&p, &w).unwrap(), 0.0);
        assert!(check_feasible(&p, &w).is_feasible());
    }

    #[test]
    fn objective_missing_node_is_neg_infinity() {
        let p = build_problem(&example_series(), &Metric::L2, 4.0, false).unwrap();
        let mut w = ArcFlows::zeros(6);
        w.set(0, 1, 1.0);
        w.set(1, 7, 1.0);
        assert_eq!(objective(&p, &w).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn objective_rejects_negative_flow() {
        let p = build_problem(&example_series(), &Metric::L2, 4.0, false).unwrap();
        let mut w = ArcFlows::zeros(6);
        w.set(0, 1, -0.5);
        assert!(matches!(objective(&p, &w), Err(Error::NegativeFlow { .. })));
    }

    #[test]
    fn feasibility_report() {
        let s = ObservationSeries::with_periods(&[[1.0], [2.0], [3.0]], vec![1, 1, 2]).unwrap();
        let p = build_problem(&s, &Metric::L1, 1.0, true).unwrap();

        let mut ok = ArcFlows::zeros(3);
        ok.set(0, 1, 1.0);
        ok.set(1, 3, 1.0);
        ok.set(3, 4, 1.0);
        assert!(check_feasible(&p, &ok).is_feasible());

        let mut short = ArcFlows::zeros(3);
        short.set(0, 1, 0.9);
        short.set(1, 4, 0.9);
        let r = check_feasible(&p, &short);
        assert_eq!(r.violations.len(), 1);
        match r.violations[0] {
            Violation::SourceMass { total } => assert!((1.0 - total - 0.1).abs() < 1e-12),
            ref v => panic!("unexpected {v:?}"),
        }

        let mut bad = ArcFlows::zeros(3);
        bad.set(0, 1, 1.0);
        bad.set(1, 2, 1.0);
        bad.set(2, 4, 1.0);
        let r = check_feasible(&p, &bad);
        assert!(r
            .violations
            .contains(&Violation::ForbiddenArc { from: 1, to: 2, value: 1.0 }));

        let mut leak = ArcFlows::zeros(3);
        leak.set(0, 1, 1.0);
        leak.set(1, 4, 0.5);
        let r = check_feasible(&p, &leak);
        assert!(matches!(r.violations[0], Violation::Conservation { node: 1, .. }));
    }
}
