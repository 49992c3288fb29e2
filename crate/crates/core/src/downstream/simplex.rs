//! Dense two-phase primal simplex with dual certificates.
//!
//! Pricing is Dantzig's rule, falling back to Bland's rule after a run of
//! degenerate pivots so the method cannot cycle.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

const PIVOT_EPS: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    NonNegative,
    Free,
}

/// `opt c.x` subject to `a_i . x (<=|=|>=) b_i` and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    /// Row-major, one row per constraint.
    pub rows: Vec<Vec<f64>>,
    pub relations: Vec<Relation>,
    pub rhs: Vec<f64>,
    pub bounds: Vec<Bound>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("linear program dimensions are inconsistent")]
    Shape,
    /// Phase one stopped with positive infeasibility; `certificate` holds
    /// multipliers `y` proving no feasible point exists.
    #[error("linear program is infeasible (residual {residual:e})")]
    Infeasible { residual: f64, certificate: Vec<f64> },
    /// A feasible point and a direction along which the objective improves
    /// without bound.
    #[error("linear program is unbounded")]
    Unbounded { point: Vec<f64>, ray: Vec<f64> },
    #[error("simplex stopped after {iterations} pivots (objective {objective})")]
    IterationLimit { iterations: usize, objective: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow prices: the rate of change of the optimal objective with
    /// each right-hand side.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

/// Residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Primal minus dual objective.
    pub gap: f64,
    /// Largest `|slack * multiplier|` over rows and columns.
    pub complementarity: f64,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            rows: Vec::new(),
            relations: Vec::new(),
            rhs: Vec::new(),
            bounds: vec![Bound::NonNegative; n],
        }
    }

    pub fn constrain(&mut self, row: Vec<f64>, rel: Relation, rhs: f64) {
        self.rows.push(row);
        self.relations.push(rel);
        self.rhs.push(rhs);
    }

    pub fn var_count(&self) -> usize {
        self.objective.len()
    }

    fn check_shape(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        let m = self.rows.len();
        if self.bounds.len() != n
            || self.relations.len() != m
            || self.rhs.len() != m
            || self.rows.iter().any(|r| r.len() != n)
        {
            return Err(LpError::Shape);
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Tableau {
    m: usize,
    // structural columns, then slack/surplus, then artificials
    width: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    value: f64,
    // column holding the identity for each row in the initial basis
    unit_col: Vec<usize>,
    // +1 or -1: whether the row was negated to make its rhs nonnegative
    row_sign: Vec<f64>,
    live: Vec<bool>,
    iterations: usize,
    bland: bool,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width + j]
    }

    fn price(&mut self) {
        self.reduced.clone_from(&self.cost);
        self.value = 0.0;
        for i in 0..self.m {
            if !self.live[i] {
                continue;
            }
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            self.value += cb * self.rhs[i];
            for j in 0..self.width {
                self.reduced[j] -= cb * self.at(i, j);
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.a[r * w + e];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        self.rhs[r] /= p;
        self.a[r * w + e] = 1.0;
        for i in 0..self.m {
            if i == r || !self.live[i] {
                continue;
            }
            let f = self.a[i * w + e];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                self.a[i * w + j] -= f * self.a[r * w + j];
            }
            self.a[i * w + e] = 0.0;
            self.rhs[i] -= f * self.rhs[r];
            if self.rhs[i] < 0.0 && self.rhs[i] > -FEAS_TOL {
                self.rhs[i] = 0.0;
            }
        }
        let f = self.reduced[e];
        if f != 0.0 {
            for j in 0..w {
                self.reduced[j] -= f * self.a[r * w + j];
            }
            self.reduced[e] = 0.0;
            self.value += f * self.rhs[r];
        }
        self.basis[r] = e;
        self.iterations += 1;
    }

    /// Runs primal simplex on the current costs over columns `< limit`.
    fn run(&mut self, limit: usize, max_iters: usize) -> Result<(), Option<usize>> {
        let scale = 1.0 + self.cost.iter().fold(0.0f64, |s, c| s.max(math::abs(*c)));
        let mut degenerate = 0;
        loop {
            let mut enter = None;
            let mut best = -FEAS_TOL * scale;
            for j in 0..limit {
                let r = self.reduced[j];
                if r < best {
                    enter = Some(j);
                    if self.bland {
                        break;
                    }
                    best = r;
                }
            }
            let Some(e) = enter else { return Ok(()) };
            if self.iterations >= max_iters {
                return Err(None);
            }
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.m {
                if !self.live[i] {
                    continue;
                }
                let a = self.at(i, e);
                if a <= PIVOT_EPS {
                    continue;
                }
                let q = self.rhs[i] / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        if q < ratio - 1e-12 * (1.0 + ratio) {
                            true
                        } else if q <= ratio + 1e-12 * (1.0 + ratio) {
                            if self.bland {
                                self.basis[i] < self.basis[l]
                            } else {
                                a > self.at(l, e)
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    ratio = q;
                }
            }
            let Some(r) = leave else { return Err(Some(e)) };
            if self.rhs[r] <= FEAS_TOL {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                degenerate = 0;
                self.bland = false;
            }
            self.pivot(r, e);
        }
    }

    fn duals(&self) -> Vec<f64> {
        // y_i = c_B B^-1 e_i; the unit column has zero cost in the current phase
        (0..self.m)
            .map(|i| {
                if !self.live[i] {
                    0.0
                } else {
                    (self.cost[self.unit_col[i]] - self.reduced[self.unit_col[i]]) * self.row_sign[i]
                }
            })
            .collect()
    }
}

/// Column map from internal structural columns back to user variables.
struct Columns {
    // (variable, sign)
    cols: Vec<(usize, f64)>,
}

impl Columns {
    fn recover(&self, n: usize, internal: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (k, &(v, s)) in self.cols.iter().enumerate() {
            x[v] += s * internal[k];
        }
        x
    }
}

/// Solves `lp` to optimality with a pivot cap of `max_iters`.
pub fn simplex_solve_with_limit(lp: &LinearProgram, max_iters: usize) -> Result<LpSolution, LpError> {
    lp.check_shape()?;
    let n = lp.var_count();
    let m = lp.rows.len();
    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };

    let mut columns = Columns { cols: Vec::new() };
    for (v, b) in lp.bounds.iter().enumerate() {
        columns.cols.push((v, 1.0));
        if *b == Bound::Free {
            columns.cols.push((v, -1.0));
        }
    }
    let structural = columns.cols.len();
    let slacks = lp.relations.iter().filter(|r| **r != Relation::Eq).count();
    let row_sign: Vec<f64> = lp.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let needs_art: Vec<bool> = (0..m)
        .map(|i| match (lp.relations[i], row_sign[i] > 0.0) {
            (Relation::Eq, _) => true,
            (Relation::Le, true) | (Relation::Ge, false) => false,
            _ => true,
        })
        .collect();
    let artificials = needs_art.iter().filter(|a| **a).count();
    let first_artificial = structural + slacks;
    let width = first_artificial + artificials;

    let mut t = Tableau {
        m,
        width,
        a: vec![0.0; m * width],
        rhs: vec![0.0; m],
        basis: vec![0; m],
        cost: vec![0.0; width],
        reduced: vec![0.0; width],
        value: 0.0,
        unit_col: vec![0; m],
        row_sign: row_sign.clone(),
        live: vec![true; m],
        iterations: 0,
        bland: false,
    };
    let mut next_slack = structural;
    let mut next_art = first_artificial;
    for i in 0..m {
        let s = row_sign[i];
        for (k, &(v, sign)) in columns.cols.iter().enumerate() {
            t.a[i * width + k] = s * sign * lp.rows[i][v];
        }
        t.rhs[i] = s * lp.rhs[i];
        if lp.relations[i] != Relation::Eq {
            let c = if lp.relations[i] == Relation::Le { 1.0 } else { -1.0 };
            t.a[i * width + next_slack] = s * c;
            if !needs_art[i] {
                t.basis[i] = next_slack;
                t.unit_col[i] = next_slack;
            }
            next_slack += 1;
        }
        if needs_art[i] {
            t.a[i * width + next_art] = 1.0;
            t.basis[i] = next_art;
            t.unit_col[i] = next_art;
            next_art += 1;
        }
    }

    if artificials > 0 {
        for j in first_artificial..width {
            t.cost[j] = 1.0;
        }
        t.price();
        match t.run(width, max_iters) {
            Ok(()) => {}
            Err(None) => {
                return Err(LpError::IterationLimit {
                    iterations: t.iterations,
                    objective: f64::NAN,
                })
            }
            Err(Some(_)) => unreachable!("phase one is bounded below by zero"),
        }
        let residual = t.value;
        let scale = 1.0 + t.rhs.iter().fold(0.0f64, |s, b| s.max(math::abs(*b)));
        if residual > FEAS_TOL * scale {
            // phase-one multipliers prove infeasibility
            let certificate = t.duals();
            return Err(LpError::Infeasible {
                residual,
                certificate,
            });
        }
        // drive remaining artificials out of the basis
        for i in 0..m {
            if t.basis[i] < first_artificial {
                continue;
            }
            let col = (0..first_artificial).find(|&j| math::abs(t.at(i, j)) > 1e-9);
            match col {
                Some(j) => t.pivot(i, j),
                // redundant row
                None => t.live[i] = false,
            }
        }
    }

    t.cost.iter_mut().for_each(|c| *c = 0.0);
    for (k, &(v, sign)) in columns.cols.iter().enumerate() {
        t.cost[k] = flip * sign * lp.objective[v];
    }
    t.bland = false;
    t.price();
    let outcome = t.run(first_artificial, max_iters);
    let mut internal = vec![0.0; width];
    for i in 0..m {
        if t.live[i] {
            internal[t.basis[i]] = t.rhs[i];
        }
    }
    let x = columns.recover(n, &internal);
    match outcome {
        Ok(()) => {
            let duals = t.duals().into_iter().map(|y| flip * y).collect();
            Ok(LpSolution {
                objective: lp.value(&x),
                x,
                duals,
                iterations: t.iterations,
            })
        }
        Err(None) => Err(LpError::IterationLimit {
            iterations: t.iterations,
            objective: lp.value(&x),
        }),
        Err(Some(e)) => {
            let mut dir = vec![0.0; width];
            dir[e] = 1.0;
            for i in 0..m {
                if t.live[i] {
                    dir[t.basis[i]] = -t.at(i, e);
                }
            }
            Err(LpError::Unbounded {
                point: x,
                ray: columns.recover(n, &dir),
            })
        }
    }
}

/// [`simplex_solve_with_limit`] with a cap of `50 * (rows + columns) + 1000` pivots.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let cap = 50 * (lp.rows.len() + lp.var_count()) + 1000;
    simplex_solve_with_limit(lp, cap)
}

/// Primal feasibility, dual feasibility, duality gap and complementary
/// slackness of `sol` for `lp`.
pub fn certify(lp: &LinearProgram, sol: &LpSolution) -> Certificate {
    // work in minimization form
    let flip = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let y: Vec<f64> = sol.duals.iter().map(|d| flip * d).collect();
    let x = &sol.x;
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (i, row) in lp.rows.iter().enumerate() {
        let slack = dot(row, x) - lp.rhs[i];
        let (viol, sign_viol) = match lp.relations[i] {
            Relation::Le => (slack.max(0.0), y[i].max(0.0)),
            Relation::Ge => ((-slack).max(0.0), (-y[i]).max(0.0)),
            Relation::Eq => (math::abs(slack), 0.0),
        };
        primal = primal.max(viol);
        dual = dual.max(sign_viol);
        comp = comp.max(math::abs(slack * y[i]));
    }
    for (v, b) in lp.bounds.iter().enumerate() {
        let reduced = flip * lp.objective[v] - lp.rows.iter().zip(&y).map(|(r, yi)| r[v] * yi).sum::<f64>();
        match b {
            Bound::NonNegative => {
                primal = primal.max((-x[v]).max(0.0));
                dual = dual.max((-reduced).max(0.0));
                comp = comp.max(math::abs(reduced * x[v]));
            }
            Bound::Free => dual = dual.max(math::abs(reduced)),
        }
    }
    let primal_value = flip * lp.value(x);
    let dual_value = dot(&lp.rhs, &y);
    Certificate {
        primal_infeasibility: primal,
        dual_infeasibility: dual,
        gap: primal_value - dual_value,
        complementarity: comp,
    }
}
