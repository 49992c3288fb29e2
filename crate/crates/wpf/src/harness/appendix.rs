use wpf_core::baselines::{wpf_weights, WeightedEmpirical};
use wpf_core::model::build_problem;
use wpf_core::{solve, Metric, ObservationSeries, SolverOptions};

use crate::{Error, Result};

/// Penalty used by [`instability_probe`].
pub const APPENDIX_LAMBDA: f64 = 4.0;

/// Six scalar observations whose fifth drops out of the support between
/// `lambda = 2.7` and `lambda = 3`.
pub const DROPOUT_VALUES: [f64; 6] = [6.41, 6.4, 5.89, 5.69, 5.13, 4.5695];

const ONE_HEAVY: [f64; 4] = [1.0, 1.0, 1.0, -1.0];
const MINUS_HEAVY: [f64; 4] = [-1.0, -1.0, -1.0, 1.0];

/// Five zeros, then `+-1` values in groups of a repeated four-symbol pattern.
/// The first group repeats `1, -1, -1, -1`; a group ends once it has emitted
/// a full pattern and its majority symbol outnumbers the other by more than
/// half again, and the next group repeats the opposite pattern.
pub fn generate_appendix_sequence(t: usize) -> Result<ObservationSeries> {
    if t < 6 {
        return Err(Error::InsufficientData { needed: 6, found: t });
    }
    Ok(ObservationSeries::from_scalars(&appendix_values(t).0)?)
}

/// Values and the lengths at which each group ended.
fn appendix_values(t: usize) -> (Vec<f64>, Vec<usize>) {
    let mut s = vec![0.0; 5];
    let mut switches = Vec::new();
    let (mut ones, mut minus) = (0usize, 0usize);
    let mut minus_group = true;
    let mut pattern = [1.0, -1.0, -1.0, -1.0];
    let mut pos = 0;
    while s.len() < t {
        let v = pattern[pos % 4];
        pos += 1;
        s.push(v);
        if v > 0.0 {
            ones += 1;
        } else {
            minus += 1;
        }
        if pos < 4 {
            continue;
        }
        if minus_group && 2 * minus > 3 * ones {
            minus_group = false;
            pattern = ONE_HEAVY;
        } else if !minus_group && 2 * ones > 3 * minus {
            minus_group = true;
            pattern = MINUS_HEAVY;
        } else {
            continue;
        }
        pos = 0;
        switches.push(s.len());
    }
    (s, switches)
}

/// Mass routed through observation 6 (the first nonzero value) at
/// `lambda = 4` under the absolute-difference metric, for each length.
pub fn instability_probe(lengths: &[usize], opts: &SolverOptions) -> Result<Vec<(usize, f64)>> {
    lengths
        .iter()
        .map(|&t| {
            let series = generate_appendix_sequence(t)?;
            let problem = build_problem(&series, &Metric::L2, APPENDIX_LAMBDA, false)?;
            let sol = solve(&problem, opts)?;
            Ok((t, sol.node_mass[5]))
        })
        .collect()
}

/// Terminal distributions of [`DROPOUT_VALUES`] at each penalty.
pub fn dropout_probe(lambdas: &[f64], opts: &SolverOptions) -> Result<Vec<(f64, WeightedEmpirical)>> {
    let series = ObservationSeries::from_scalars(&DROPOUT_VALUES)?;
    lambdas
        .iter()
        .map(|&l| Ok((l, wpf_weights(&series, &Metric::L2, l, false, opts)?)))
        .collect()
}
