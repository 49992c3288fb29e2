use wpf_core::baselines::{saa_weights, smoothing_weights, window_weights};
use wpf_core::downstream::{cvar_portfolio, forecast_cost, weighted_regression_fit};
use wpf_core::model::build_problem;
use wpf_core::solver::{solve, solve_from, PathDecomposition};
use wpf_core::{ObservationSeries, SolverOptions};

use super::{CostTrace, EvaluationConfig, Method, Phase, Task, TraceEntry};
use crate::{Error, Result};

/// Transition observations `[ell_s, ell_{s+1}]` for `s = 1..T-1`, carrying
/// the period label of `ell_s`.
pub fn pair_series(series: &ObservationSeries) -> Result<ObservationSeries> {
    let t = series.len();
    if t < 2 {
        return Err(Error::InsufficientData { needed: 2, found: t });
    }
    let pairs: Vec<Vec<f64>> = (0..t - 1)
        .map(|s| [series.point(s), series.point(s + 1)].concat())
        .collect();
    Ok(ObservationSeries::with_periods(&pairs, series.periods()[..t - 1].to_vec())?)
}

/// One grid point of one method, reused across periods so WPF can start
/// from the previous period's path flows.
struct Estimator<'a> {
    method: &'a Method,
    param: Option<f64>,
    grouped: bool,
    opts: SolverOptions,
    warm: Option<PathDecomposition>,
}

impl Estimator<'_> {
    fn weights(&mut self, obs: &ObservationSeries) -> Result<Vec<f64>> {
        let t = obs.len();
        let w = match (self.method, self.param) {
            (Method::Window, Some(s)) => window_weights(t, (s as usize).min(t))?,
            (Method::Smoothing, Some(a)) => smoothing_weights(t, a)?,
            (Method::Wpf(metric), Some(lambda)) => {
                let problem = build_problem(obs, metric, lambda, self.grouped)?;
                let sol = match self.warm.take() {
                    Some(prev) if prev.paths.iter().flatten().all(|&j| j < t) && t > 1 => {
                        let keep = 1.0 - 1.0 / t as f64;
                        let mut paths = prev.paths;
                        let mut flows: Vec<f64> = prev.flows.iter().map(|x| x * keep).collect();
                        paths.push(vec![t]);
                        flows.push(1.0 / t as f64);
                        let init = PathDecomposition::new(&problem, paths, flows)?;
                        solve_from(&problem, &init, &self.opts)?
                    }
                    _ => solve(&problem, &self.opts)?,
                };
                self.warm = Some(sol.paths);
                sol.terminal
            }
            _ => saa_weights(t)?,
        };
        Ok(w.into_vec())
    }

    /// Cost of the decision made from `seen`, realized against `next`.
    /// `None` when the regression design is singular.
    fn cost(&mut self, task: &Task, seen: &ObservationSeries, next: &[f64]) -> Result<Option<f64>> {
        let t = seen.len();
        let points: Vec<&[f64]> = seen.points().collect();
        match task {
            Task::Forecast => {
                let w = self.weights(&pair_series(seen)?)?;
                match weighted_regression_fit(&points, &w) {
                    Ok(model) => Ok(Some(forecast_cost(&model, points[t - 1], next)?)),
                    Err(wpf_core::Error::Singular(_)) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            }
            Task::Portfolio(spec) => {
                let w = self.weights(seen)?;
                let d = cvar_portfolio(&points, &w, spec)?;
                Ok(Some(-d.x.iter().zip(next).map(|(a, b)| a * b).sum::<f64>()))
            }
        }
    }
}

/// Sequential decisions after the warm-up. Every grid value is run on every
/// prefix; at each period the value with the best aggregate cost over the
/// trailing tuning window is used (earliest grid value on ties). Candidates
/// that were singular anywhere in the window are skipped; if none remain
/// the decision falls back to uniform weights.
pub fn rolling_evaluate(
    series: &ObservationSeries,
    method: &Method,
    task: &Task,
    config: &EvaluationConfig,
) -> Result<CostTrace> {
    config.validate()?;
    let n = series.len();
    let first = config.warmup;
    if n < first + 1 {
        return Err(Error::InsufficientData {
            needed: first + 1,
            found: n,
        });
    }
    let train_end = (config.train_fraction * n as f64).floor() as usize;
    let periods: Vec<usize> = (first..n).collect();
    let prefixes: Vec<ObservationSeries> = periods.iter().map(|&t| series.prefix(t)).collect::<wpf_core::Result<_>>()?;

    let candidates = method.candidates(&config.grid);
    let mut table: Vec<Vec<Option<f64>>> = Vec::with_capacity(candidates.len());
    for &param in &candidates {
        let mut est = Estimator {
            method,
            param,
            grouped: config.grouped,
            opts: config.solver,
            warm: None,
        };
        let row = periods
            .iter()
            .zip(&prefixes)
            .map(|(&t, seen)| est.cost(task, seen, series.point(t)))
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }

    let mut entries = Vec::with_capacity(periods.len());
    for (k, &t) in periods.iter().enumerate() {
        let lo = k.saturating_sub(config.tuning_window);
        let mut chosen: Option<(usize, f64)> = None;
        for (c, row) in table.iter().enumerate() {
            if row[k].is_none() {
                continue;
            }
            let Some(window) = row[lo..k].iter().copied().collect::<Option<Vec<f64>>>() else {
                continue;
            };
            let score = if window.is_empty() { 0.0 } else { task.aggregate(&window)? };
            if chosen.is_none_or(|(_, s)| score < s) {
                chosen = Some((c, score));
            }
        }
        let (parameter, cost) = match chosen {
            Some((c, _)) => (candidates[c], table[c][k].unwrap()),
            None => {
                let mut saa = Estimator {
                    method: &Method::Saa,
                    param: None,
                    grouped: false,
                    opts: config.solver,
                    warm: None,
                };
                let cost = saa.cost(task, &prefixes[k], series.point(t))?.ok_or_else(|| {
                    wpf_core::Error::Singular(format!("no grid value or uniform weights give a regular design at period {t}"))
                })?;
                (None, cost)
            }
        };
        if !cost.is_finite() {
            return Err(Error::Config(format!("non-finite cost at period {t}")));
        }
        entries.push(TraceEntry {
            period: t,
            phase: if t < train_end { Phase::Train } else { Phase::Test },
            parameter,
            cost,
        });
    }
    Ok(CostTrace {
        method: method.name(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ParameterGrid;
    use wpf_core::downstream::PortfolioSpec;

    fn config(grid: ParameterGrid) -> EvaluationConfig {
        EvaluationConfig {
            warmup: 6,
            tuning_window: 4,
            grid,
            ..Default::default()
        }
    }

    fn wavy(n: usize) -> ObservationSeries {
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos() + 0.05 * i as f64])
            .collect();
        ObservationSeries::new(&pts).unwrap()
    }

    #[test]
    fn pairs() {
        let s = ObservationSeries::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        let p = pair_series(&s).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.point(1), &[2.0, 3.0]);
        assert!(pair_series(&s.prefix(1).unwrap()).is_err());
    }

    #[test]
    fn saa_trace_is_direct_evaluation() {
        let s = wavy(20);
        let cfg = config(ParameterGrid::forecasting());
        let trace = rolling_evaluate(&s, &Method::Saa, &Task::Forecast, &cfg).unwrap();
        assert_eq!(trace.len(), 14);
        for e in &trace.entries {
            let seen: Vec<&[f64]> = (0..e.period).map(|i| s.point(i)).collect();
            let w = vec![1.0 / (e.period - 1) as f64; e.period - 1];
            let model = weighted_regression_fit(&seen, &w).unwrap();
            let c = forecast_cost(&model, seen[e.period - 1], s.point(e.period)).unwrap();
            assert!((c - e.cost).abs() < 1e-12);
            assert_eq!(e.phase == Phase::Test, e.period >= 14);
        }
    }

    #[test]
    fn single_candidate_matches_fixed_parameter() {
        let s = wavy(18);
        let mut grid = ParameterGrid::forecasting();
        grid.alphas = vec![0.3];
        let trace = rolling_evaluate(&s, &Method::Smoothing, &Task::Forecast, &config(grid)).unwrap();
        for e in &trace.entries {
            assert_eq!(e.parameter, Some(0.3));
            let seen: Vec<&[f64]> = (0..e.period).map(|i| s.point(i)).collect();
            let w = smoothing_weights(e.period - 1, 0.3).unwrap().into_vec();
            let model = weighted_regression_fit(&seen, &w).unwrap();
            let c = forecast_cost(&model, seen[e.period - 1], s.point(e.period)).unwrap();
            assert!((c - e.cost).abs() < 1e-12);
        }
    }

    #[test]
    fn chosen_parameter_minimizes_trailing_cost() {
        let s = wavy(22);
        let mut grid = ParameterGrid::forecasting();
        grid.windows = vec![4, 8, 16];
        let cfg = config(grid.clone());
        let trace = rolling_evaluate(&s, &Method::Window, &Task::Forecast, &cfg).unwrap();
        let fixed: Vec<CostTrace> = grid
            .windows
            .iter()
            .map(|&w| {
                let mut g = grid.clone();
                g.windows = vec![w];
                rolling_evaluate(&s, &Method::Window, &Task::Forecast, &config(g)).unwrap()
            })
            .collect();
        for (k, e) in trace.entries.iter().enumerate() {
            let lo = k.saturating_sub(cfg.tuning_window);
            let scores: Vec<f64> = fixed
                .iter()
                .map(|f| f.entries[lo..k].iter().map(|x| x.cost).sum::<f64>())
                .collect();
            let best = (0..3).fold(0, |b, c| if scores[c] < scores[b] { c } else { b });
            if fixed.iter().all(|f| f.entries[k].parameter.is_some()) {
                assert_eq!(e.parameter, Some(grid.windows[best] as f64), "period {}", e.period);
                assert_eq!(e.cost, fixed[best].entries[k].cost);
            }
        }
    }

    #[test]
    fn warm_start_agrees_with_cold_solve() {
        let s = wavy(16);
        let mut grid = ParameterGrid::portfolio();
        grid.lambdas = vec![2.0];
        let task = Task::Portfolio(PortfolioSpec::default());
        let trace = rolling_evaluate(&s, &Method::Wpf(wpf_core::Metric::L1), &task, &config(grid)).unwrap();
        for e in &trace.entries {
            let seen = s.prefix(e.period).unwrap();
            let problem = build_problem(&seen, &wpf_core::Metric::L1, 2.0, false).unwrap();
            let w = solve(&problem, &SolverOptions::default()).unwrap().terminal.into_vec();
            let pts: Vec<&[f64]> = seen.points().collect();
            let x = cvar_portfolio(&pts, &w, &PortfolioSpec::default()).unwrap().x;
            let loss = -x.iter().zip(s.point(e.period)).map(|(a, b)| a * b).sum::<f64>();
            assert!((loss - e.cost).abs() < 1e-5, "{} vs {}", loss, e.cost);
        }
    }

    #[test]
    fn too_short() {
        let s = wavy(6);
        let r = rolling_evaluate(&s, &Method::Saa, &Task::Forecast, &config(ParameterGrid::forecasting()));
        assert!(matches!(r, Err(Error::InsufficientData { needed: 7, found: 6 })));
    }
}
