//! Component structure of solved programs and checks of its structural
//! properties.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::metric::{DistanceMatrix, Metric};
use crate::model::{build_problem, FlowSolution, ObservationSeries};
use crate::solver::{solve, SolverOptions};
use crate::{Error, Result};

/// Default support threshold separating flow from numerical dust.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

/// Slack used by the bound and monotonicity checks.
pub const CHECK_SLACK: f64 = 1e-7;

/// Tolerance under which two subset sums count as equal.
pub const SUBSET_SUM_TOL: f64 = 1e-9;

pub const MAX_SUBSET_SUM_T: usize = 16;

/// Largest number of distinct pairwise distances checked in
/// [`SubsetScope::AllDistances`] mode.
pub const MAX_ALL_DISTANCES: usize = 21;

/// A connected piece of the solution's support.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Observation nodes (1-based), ascending.
    pub nodes: Vec<usize>,
    /// `H(C) = sum_{i in C} w(0, i)`.
    pub mass: f64,
    /// Largest distance along an active path inside the component.
    pub d_max: f64,
    /// Indices into `FlowSolution::paths` of the active paths inside `C`.
    pub paths: Vec<usize>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the undirected support graph over observation
/// nodes with mass above `threshold`, ordered by smallest node.
pub fn components(solution: &FlowSolution, threshold: f64) -> Vec<Component> {
    let t = solution.node_mass.len();
    let mut parent: Vec<usize> = (0..=t).collect();
    for (i, j, _) in solution.w.support(threshold) {
        if i >= 1 && j <= t {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut out: Vec<Component> = Vec::new();
    let mut slot = vec![usize::MAX; t + 1];
    for j in 1..=t {
        if !(solution.node_mass[j - 1] > threshold) {
            continue;
        }
        let r = find(&mut parent, j);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Component {
                nodes: Vec::new(),
                mass: 0.0,
                d_max: 0.0,
                paths: Vec::new(),
            });
        }
        let c = &mut out[slot[r]];
        c.nodes.push(j);
        c.mass += solution.w.get(0, j);
    }
    let decomp = &solution.paths;
    for (k, p) in decomp.paths.iter().enumerate() {
        if !(decomp.flows[k] > threshold) {
            continue;
        }
        let r = find(&mut parent, p[0]);
        if slot[r] == usize::MAX {
            continue;
        }
        let c = &mut out[slot[r]];
        if p.iter().all(|j| c.contains(*j)) {
            c.paths.push(k);
            c.d_max = c.d_max.max(decomp.path_distance[k]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsCheck {
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// `|C| / (mu + lambda * d_max) <= H(C) <= |C| / mu`, with [`CHECK_SLACK`].
pub fn component_bounds_check(component: &Component, mu_path: f64, lambda: f64) -> BoundsCheck {
    let n = component.len() as f64;
    let lower = n / (mu_path + lambda * component.d_max);
    let upper = n / mu_path;
    let h = component.mass;
    BoundsCheck {
        lower,
        upper,
        holds: lower - CHECK_SLACK <= h && h <= upper + CHECK_SLACK,
    }
}

/// Which distance sets must have unique subset sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetScope {
    /// Consecutive distances along each increasing node sequence separately.
    Paths,
    /// All pairwise distances `d(i, j)`, `i < j`, together.
    AllDistances,
}

/// Two distinct edge subsets with (numerically) equal total distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSumWitness {
    /// Node sequence whose consecutive distances collide; empty in
    /// [`SubsetScope::AllDistances`] mode.
    pub path: Vec<usize>,
    /// Edges `(i, j)` (1-based nodes) of each subset.
    pub left: Vec<(usize, usize)>,
    pub right: Vec<(usize, usize)>,
    pub left_sum: f64,
    pub right_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubsetSums {
    Unique,
    Collision(SubsetSumWitness),
}

impl SubsetSums {
    pub fn is_unique(&self) -> bool {
        matches!(self, SubsetSums::Unique)
    }
}

// sorted subset sums tagged with the bitmask of chosen edges
struct SumTable {
    sums: Vec<(f64, u64)>,
}

impl SumTable {
    fn new() -> Self {
        Self {
            sums: vec![(0.0, 0)],
        }
    }

    /// Adds edge number `bit` with length `d`; returns a colliding pair.
    fn extend(&self, d: f64, bit: u32) -> core::result::Result<Self, (u64, u64)> {
        let shifted: Vec<(f64, u64)> = self.sums.iter().map(|&(s, m)| (s + d, m | 1 << bit)).collect();
        let mut merged = Vec::with_capacity(2 * self.sums.len());
        let (mut a, mut b) = (0, 0);
        while a < self.sums.len() || b < shifted.len() {
            let take_a = b == shifted.len() || (a < self.sums.len() && self.sums[a].0 <= shifted[b].0);
            let next = if take_a {
                a += 1;
                self.sums[a - 1]
            } else {
                b += 1;
                shifted[b - 1]
            };
            if let Some(&(prev, pm)) = merged.last() {
                if next.0 - prev <= SUBSET_SUM_TOL {
                    return Err((pm, next.1));
                }
            }
            merged.push(next);
        }
        Ok(Self { sums: merged })
    }
}

fn sum_of(edges: &[(usize, usize, f64)], mask: u64) -> (Vec<(usize, usize)>, f64) {
    let mut chosen = Vec::new();
    let mut s = 0.0;
    for (k, &(i, j, d)) in edges.iter().enumerate() {
        if mask >> k & 1 == 1 {
            chosen.push((i, j));
            s += d;
        }
    }
    (chosen, s)
}

fn witness(path: Vec<usize>, edges: &[(usize, usize, f64)], a: u64, b: u64) -> SubsetSumWitness {
    // drop shared edges so the two sides are disjoint
    let common = a & b;
    let (left, left_sum) = sum_of(edges, a & !common);
    let (right, right_sum) = sum_of(edges, b & !common);
    SubsetSumWitness {
        path,
        left,
        right,
        left_sum,
        right_sum,
    }
}

/// Exhaustive unique-subset-sums test on the observation distances.
pub fn unique_subset_sums_check(dist: &DistanceMatrix, scope: SubsetScope) -> Result<SubsetSums> {
    let t = dist.len();
    match scope {
        SubsetScope::Paths => {
            if t > MAX_SUBSET_SUM_T {
                return Err(Error::Unsupported {
                    what: "subset-sum check over paths",
                    size: t,
                    max: MAX_SUBSET_SUM_T,
                });
            }
            let mut path = Vec::with_capacity(t);
            let mut edges = Vec::with_capacity(t);
            for start in 1..=t {
                path.push(start);
                if let Some(w) = grow(dist, &mut path, &mut edges, &SumTable::new()) {
                    return Ok(SubsetSums::Collision(w));
                }
                path.pop();
            }
            Ok(SubsetSums::Unique)
        }
        SubsetScope::AllDistances => {
            let pairs = t * (t - 1) / 2;
            if pairs > MAX_ALL_DISTANCES {
                return Err(Error::Unsupported {
                    what: "subset-sum check over all distances",
                    size: t,
                    max: 7,
                });
            }
            let mut edges = Vec::with_capacity(pairs);
            let mut table = SumTable::new();
            for i in 1..=t {
                for j in (i + 1)..=t {
                    let d = dist.get(i - 1, j - 1);
                    edges.push((i, j, d));
                    match table.extend(d, (edges.len() - 1) as u32) {
                        Ok(next) => table = next,
                        Err((a, b)) => return Ok(SubsetSums::Collision(witness(Vec::new(), &edges, a, b))),
                    }
                }
            }
            Ok(SubsetSums::Unique)
        }
    }
}

fn grow(
    dist: &DistanceMatrix,
    path: &mut Vec<usize>,
    edges: &mut Vec<(usize, usize, f64)>,
    table: &SumTable,
) -> Option<SubsetSumWitness> {
    let t = dist.len();
    let last = *path.last().unwrap();
    for next in (last + 1)..=t {
        let d = dist.get(last - 1, next - 1);
        edges.push((last, next, d));
        path.push(next);
        let found = match table.extend(d, (edges.len() - 1) as u32) {
            Err((a, b)) => Some(witness(path.clone(), edges, a, b)),
            Ok(ext) => grow(dist, path, edges, &ext),
        };
        path.pop();
        edges.pop();
        if found.is_some() {
            return found;
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub enum SwapReport {
    /// Positions `i0 - 1` and `i0` share a component.
    Inapplicable,
    Checked {
        /// Terminal weight of the moved observation at position `i0`.
        before: f64,
        /// Its terminal weight at position `i0 - 1` after the swap.
        after: f64,
        holds: bool,
    },
}

/// Swaps positions `i0 - 1` and `i0` (1-based) and checks that moving the
/// observation earlier does not raise its terminal weight, whenever the two
/// observations sit in different components before the swap.
pub fn swap_monotonicity_test(
    series: &ObservationSeries,
    metric: &Metric,
    lambda: f64,
    i0: usize,
    opts: &SolverOptions,
) -> Result<SwapReport> {
    let t = series.len();
    if i0 < 2 || i0 > t {
        return Err(Error::InvalidParameter {
            name: "swap position",
            value: i0 as f64,
        });
    }
    let base = solve(&build_problem(series, metric, lambda, false)?, opts)?;
    let comps = components(&base, SUPPORT_THRESHOLD);
    let shared = comps.iter().any(|c| c.contains(i0 - 1) && c.contains(i0));
    if shared {
        return Ok(SwapReport::Inapplicable);
    }
    let swapped = series.swapped(i0 - 2, i0 - 1);
    let moved = solve(&build_problem(&swapped, metric, lambda, false)?, opts)?;
    let before = base.terminal.weights()[i0 - 1];
    let after = moved.terminal.weights()[i0 - 2];
    Ok(SwapReport::Checked {
        before,
        after,
        holds: before >= after - CHECK_SLACK,
    })
}

/// Largest spread of active-path derivatives around `mu_path`.
pub fn active_derivative_spread(solution: &FlowSolution, lambda: f64) -> f64 {
    let d = &solution.paths;
    let mut worst = 0.0f64;
    for (p, &dist) in d.paths.iter().zip(&d.path_distance) {
        let g = p.iter().map(|&j| 1.0 / solution.node_mass[j - 1]).sum::<f64>() - lambda * dist;
        worst = worst.max(math::abs(g - solution.mu_path));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::pairwise_distances;

    fn chain(xs: &[f64]) -> DistanceMatrix {
        let pts: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        pairwise_distances(&pts, &Metric::L2).unwrap()
    }

    #[test]
    fn powers_of_two_chain_passes() {
        let d = chain(&[0.0, 1.0, 3.0, 7.0]);
        assert!(unique_subset_sums_check(&d, SubsetScope::Paths).unwrap().is_unique());
    }

    #[test]
    fn one_two_three_chain_fails() {
        let d = chain(&[0.0, 1.0, 3.0, 6.0]);
        match unique_subset_sums_check(&d, SubsetScope::Paths).unwrap() {
            SubsetSums::Collision(w) => {
                assert!((w.left_sum - w.right_sum).abs() <= SUBSET_SUM_TOL);
                let mut sides = [w.left.len(), w.right.len()];
                sides.sort();
                assert_eq!(sides, [1, 2]);
                assert!((w.left_sum - 3.0).abs() < 1e-12);
            }
            SubsetSums::Unique => panic!("1 + 2 = 3 not detected"),
        }
    }

    #[test]
    fn repeated_observation_collides() {
        let d = chain(&[1.0, 1.0, 2.0]);
        assert!(!unique_subset_sums_check(&d, SubsetScope::Paths).unwrap().is_unique());
    }

    #[test]
    fn example_all_distances_fails() {
        let d = chain(&[6.13, 7.85, 6.47, 4.91, 5.54, 7.13]);
        assert!(!unique_subset_sums_check(&d, SubsetScope::AllDistances)
            .unwrap()
            .is_unique());
    }

    #[test]
    fn size_limits() {
        let xs: Vec<f64> = (0..17).map(|i| i as f64).collect();
        assert!(matches!(
            unique_subset_sums_check(&chain(&xs), SubsetScope::Paths),
            Err(Error::Unsupported { .. })
        ));
        assert!(matches!(
            unique_subset_sums_check(&chain(&xs[..8]), SubsetScope::AllDistances),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn bounds_for_singleton() {
        let c = Component {
            nodes: vec![2],
            mass: 0.25,
            d_max: 0.0,
            paths: vec![0],
        };
        let b = component_bounds_check(&c, 4.0, 3.0);
        assert_eq!(b.lower, 0.25);
        assert_eq!(b.upper, 0.25);
        assert!(b.holds);
        assert!(!component_bounds_check(&c, 5.0, 3.0).holds);
    }
}
