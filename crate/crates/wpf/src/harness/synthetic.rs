use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wpf_core::ObservationSeries;

use crate::{Error, Result};

/// Generating process for a synthetic series.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticSpec {
    /// Gaussian noise around one of two regime means; the regime flips with
    /// probability `switch_prob` after each step and starts in regime 0.
    MarkovSwitching {
        len: usize,
        means: [Vec<f64>; 2],
        sd: [f64; 2],
        switch_prob: f64,
    },
    /// Gaussian noise around `start + t * drift`.
    DriftingMean {
        len: usize,
        start: Vec<f64>,
        drift: Vec<f64>,
        sd: f64,
    },
}

impl SyntheticSpec {
    /// Two-dimensional two-regime series of the given length.
    pub fn markov_default(len: usize) -> Self {
        SyntheticSpec::MarkovSwitching {
            len,
            means: [vec![0.0, 0.2], vec![0.4, -0.1]],
            sd: [0.05, 0.12],
            switch_prob: 0.05,
        }
    }

    pub fn drift_default(len: usize) -> Self {
        SyntheticSpec::DriftingMean {
            len,
            start: vec![0.0, 0.0],
            drift: vec![0.01, -0.005],
            sd: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synthetic spec: {msg}")));
        match self {
            SyntheticSpec::MarkovSwitching {
                len,
                means,
                sd,
                switch_prob,
            } => {
                if *len == 0 || means[0].is_empty() {
                    return bad("length and dimension must be positive");
                }
                if means[0].len() != means[1].len() {
                    return bad("regime means differ in dimension");
                }
                if !sd.iter().all(|s| *s >= 0.0 && s.is_finite()) {
                    return bad("standard deviations must be finite and nonnegative");
                }
                if !(0.0..=1.0).contains(switch_prob) {
                    return bad("switch probability outside [0, 1]");
                }
            }
            SyntheticSpec::DriftingMean { len, start, drift, sd } => {
                if *len == 0 || start.is_empty() {
                    return bad("length and dimension must be positive");
                }
                if start.len() != drift.len() {
                    return bad("start and drift differ in dimension");
                }
                if !(*sd >= 0.0 && sd.is_finite()) {
                    return bad("standard deviation must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }
}

/// Deterministic in `seed`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<ObservationSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let points: Vec<Vec<f64>> = match spec {
        SyntheticSpec::MarkovSwitching {
            len,
            means,
            sd,
            switch_prob,
        } => {
            let mut state = 0;
            (0..*len)
                .map(|t| {
                    if t > 0 && rng.random::<f64>() < *switch_prob {
                        state = 1 - state;
                    }
                    means[state].iter().map(|m| m + sd[state] * std.sample(&mut rng)).collect()
                })
                .collect()
        }
        SyntheticSpec::DriftingMean { len, start, drift, sd } => (0..*len)
            .map(|t| {
                start
                    .iter()
                    .zip(drift)
                    .map(|(a, d)| a + t as f64 * d + sd * std.sample(&mut rng))
                    .collect()
            })
            .collect(),
    };
    Ok(ObservationSeries::new(&points)?)
}
