//! Rolling train/test evaluation of weighting schemes on decision tasks,
//! plus the constructed sequences used for structural checks.

mod appendix;
mod rolling;
mod synthetic;

pub use appendix::{
    dropout_probe, generate_appendix_sequence, instability_probe, APPENDIX_LAMBDA, DROPOUT_VALUES,
};
pub use rolling::{pair_series, rolling_evaluate};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use wpf_core::downstream::{risk_adjusted, PortfolioSpec};
use wpf_core::{Metric, SolverOptions};

use crate::{Error, Result};

/// Tuning grids for the three parameterized schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    pub windows: Vec<usize>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

fn decay_rates() -> Vec<f64> {
    let mut v: Vec<f64> = (1..=10).map(|i| i as f64 / 1000.0).collect();
    v.extend((2..=10).map(|i| i as f64 / 100.0));
    v.extend((2..=9).map(|i| i as f64 / 10.0));
    v
}

/// `{a, 2a, .., 10a, 20a, .., 100a, 200a, .., 1000a}`.
fn decades(a: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=10).map(|i| i as f64 * a).collect();
    v.extend((2..=10).map(|i| i as f64 * 10.0 * a));
    v.extend((2..=10).map(|i| i as f64 * 100.0 * a));
    v
}

impl ParameterGrid {
    /// Ranges used for monthly price forecasting.
    pub fn forecasting() -> Self {
        Self {
            windows: (12..=168).step_by(6).collect(),
            alphas: decay_rates(),
            lambdas: decades(10.0),
        }
    }

    /// Ranges used for monthly portfolio selection.
    pub fn portfolio() -> Self {
        Self {
            windows: (4..=120).step_by(4).collect(),
            alphas: decay_rates(),
            lambdas: decades(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn sorted<T: PartialOrd>(v: &[T]) -> bool {
            v.windows(2).all(|w| w[0] < w[1])
        }
        if self.windows.is_empty() || self.alphas.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Config("parameter grids must be nonempty".into()));
        }
        if !sorted(&self.windows) || !sorted(&self.alphas) || !sorted(&self.lambdas) {
            return Err(Error::Config("parameter grids must be strictly increasing".into()));
        }
        if self.windows[0] == 0 {
            return Err(Error::Config("window sizes must be positive".into()));
        }
        if !(self.alphas[0] > 0.0) || self.alphas[self.alphas.len() - 1] > 1.0 {
            return Err(Error::Config("decay rates must lie in (0, 1]".into()));
        }
        if !(self.lambdas[0] >= 0.0) || !self.lambdas.iter().all(|l| l.is_finite()) {
            return Err(Error::Config("penalties must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    /// Share of the series forming the training phase.
    pub train_fraction: f64,
    /// Observations collected before the first decision.
    pub warmup: usize,
    /// Trailing decision periods scored when choosing a parameter.
    pub tuning_window: usize,
    pub grid: ParameterGrid,
    /// Forbid WPF transitions within a period.
    pub grouped: bool,
    pub solver: SolverOptions,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            warmup: 24,
            tuning_window: 24,
            grid: ParameterGrid::forecasting(),
            grouped: false,
            solver: SolverOptions::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.warmup == 0 {
            return Err(Error::Config("warmup must be at least 1".into()));
        }
        if self.tuning_window == 0 {
            return Err(Error::Config("tuning window must be at least 1".into()));
        }
        self.grid.validate()
    }
}

/// A weighting scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Saa,
    Window,
    Smoothing,
    Wpf(Metric),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Saa => "SAA".into(),
            Method::Window => "Windowing".into(),
            Method::Smoothing => "Smoothing".into(),
            Method::Wpf(m) => format!("WPF-{}", metric_name(m)),
        }
    }

    /// Grid values the scheme is tuned over; `None` for SAA.
    pub fn candidates(&self, grid: &ParameterGrid) -> Vec<Option<f64>> {
        match self {
            Method::Saa => vec![None],
            Method::Window => grid.windows.iter().map(|&s| Some(s as f64)).collect(),
            Method::Smoothing => grid.alphas.iter().map(|&a| Some(a)).collect(),
            Method::Wpf(_) => grid.lambdas.iter().map(|&l| Some(l)).collect(),
        }
    }
}

pub fn metric_name(m: &Metric) -> String {
    match m {
        Metric::L1 => "L1".into(),
        Metric::L2 => "L2".into(),
        Metric::Linf => "Linf".into(),
        Metric::Adjusted { base, delta0 } => format!("{}+{}", metric_name(base), delta0),
    }
}

/// The decision made from a weighted empirical distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    /// Weighted one-step log-price regression, squared forecast error.
    Forecast,
    /// Mean-CVaR allocation, realized loss.
    Portfolio(PortfolioSpec),
}

impl Task {
    /// Score of a run of per-period costs: the mean for forecasting, the
    /// risk-adjusted functional of the realized losses for portfolios.
    pub fn aggregate(&self, costs: &[f64]) -> Result<f64> {
        if costs.is_empty() {
            return Err(Error::InsufficientData { needed: 1, found: 0 });
        }
        let n = costs.len() as f64;
        match self {
            Task::Forecast => Ok(costs.iter().sum::<f64>() / n),
            Task::Portfolio(spec) => Ok(risk_adjusted(costs, &vec![1.0 / n; costs.len()], spec)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// Observations available at the decision (1-based time of the last one).
    pub period: usize,
    pub phase: Phase,
    /// Parameter in force, `None` for SAA or a fallback decision.
    pub parameter: Option<f64>,
    /// Cost realized against observation `period + 1`.
    pub cost: f64,
}

/// Per-period outcome of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTrace {
    pub method: String,
    pub entries: Vec<TraceEntry>,
}

impl CostTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn test_costs(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.phase == Phase::Test)
            .map(|e| e.cost)
            .collect()
    }

    /// Aggregate testing cost under the task's functional.
    pub fn testing_cost(&self, task: &Task) -> Result<f64> {
        task.aggregate(&self.test_costs())
    }
}

/// Mean of `a - b` and its standard error (sample standard deviation over
/// `sqrt(n)`).
pub fn paired_difference_stats(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

/// One row of a method comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub testing_cost: f64,
    /// Paired difference from the baseline and its standard error.
    pub difference: Option<(f64, f64)>,
}

/// Testing cost per trace and paired differences against `baseline`.
pub fn compare(traces: &[CostTrace], baseline: Option<&CostTrace>, task: &Task) -> Result<Vec<ComparisonRow>> {
    let base = baseline.map(|b| b.test_costs());
    traces
        .iter()
        .map(|t| {
            let costs = t.test_costs();
            let difference = match &base {
                Some(b) => Some(paired_difference_stats(&costs, b)?),
                None => None,
            };
            Ok(ComparisonRow {
                method: t.method.clone(),
                testing_cost: task.aggregate(&costs)?,
                difference,
            })
        })
        .collect()
}
