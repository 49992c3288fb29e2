use proptest::prelude::*;
use wpf_core::analysis::{unique_subset_sums_check, SubsetScope};
use wpf_core::model::build_problem;
use wpf_core::oracle::solve_exact_small;
use wpf_core::solver::{kkt_gap, solve_from, PathDecomposition};
use wpf_core::{solve, Metric, ObservationSeries, SolverOptions};

fn metric(k: u8) -> Metric {
    match k % 3 {
        0 => Metric::L1,
        1 => Metric::L2,
        _ => Metric::Linf,
    }
}

fn series(points: &[Vec<f64>], periods: Option<&[u32]>) -> ObservationSeries {
    match periods {
        Some(p) => ObservationSeries::with_periods(points, p.to_vec()).unwrap(),
        None => ObservationSeries::new(points).unwrap(),
    }
}

/// Points on a 0.01 lattice so repeated values and ties occur.
fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u32>)> {
    (1usize..=6, 1usize..=2).prop_flat_map(|(t, m)| {
        (
            prop::collection::vec(prop::collection::vec((-300i32..300).prop_map(|v| v as f64 / 100.0), m), t),
            prop::collection::vec(0u32..2, t),
        )
            .prop_map(|(pts, steps)| {
                let mut p = 1;
                let periods = steps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        if i > 0 {
                            p += s;
                        }
                        p
                    })
                    .collect();
                (pts, periods)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn solver_matches_oracle(
        (pts, periods) in instance(),
        lam in prop::sample::select(vec![0.1, 1.0, 4.0, 20.0]),
        mk in 0u8..3,
        grouped in any::<bool>(),
    ) {
        let s = series(&pts, grouped.then_some(&periods[..]));
        let problem = build_problem(&s, &metric(mk), lam, grouped).unwrap();
        let fast = solve(&problem, &SolverOptions::default()).unwrap();
        let exact = solve_exact_small(&problem).unwrap();
        prop_assert!((fast.objective - exact.objective).abs() <= 1e-6,
            "solver {} oracle {}", fast.objective, exact.objective);
        let unique = unique_subset_sums_check(problem.distances(), SubsetScope::AllDistances).unwrap().is_unique();
        if unique {
            for (a, b) in fast.terminal.weights().iter().zip(exact.terminal.weights()) {
                prop_assert!((a - b).abs() <= 1e-5, "{:?} vs {:?}", fast.terminal, exact.terminal);
            }
        }
        prop_assert!(kkt_gap(&problem, &fast.paths).unwrap() <= 1e-8);
    }

    #[test]
    fn start_does_not_matter(
        (pts, _) in instance(),
        lam in prop::sample::select(vec![0.5, 2.0, 8.0]),
        mk in 0u8..3,
        extra in prop::collection::vec(0.05f64..1.0, 1..4),
    ) {
        let s = series(&pts, None);
        let t = s.len();
        let problem = build_problem(&s, &metric(mk), lam, false).unwrap();
        let cold = solve(&problem, &SolverOptions::default()).unwrap();
        // the full chain plus a few singletons, all with positive flow
        let mut paths = vec![(1..=t).collect::<Vec<usize>>()];
        let mut flows = vec![1.0];
        for (k, x) in extra.iter().enumerate() {
            paths.push(vec![1 + k % t]);
            flows.push(*x);
        }
        let total: f64 = flows.iter().sum();
        flows.iter_mut().for_each(|x| *x /= total);
        let init = PathDecomposition::new(&problem, paths, flows).unwrap();
        let warm = solve_from(&problem, &init, &SolverOptions::default()).unwrap();
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-8);
    }

    #[test]
    fn reversal_preserves_objective(
        (pts, _) in instance(),
        lam in prop::sample::select(vec![0.1, 1.0, 4.0, 20.0]),
        mk in 0u8..3,
    ) {
        // a path read backwards is a path with the same distance, so the
        // optimal value is symmetric in time
        let s = series(&pts, None);
        let opts = SolverOptions::default();
        let problem = build_problem(&s, &metric(mk), lam, false).unwrap();
        let fwd = solve(&problem, &opts).unwrap();
        let bwd = solve(&build_problem(&s.reversed(), &metric(mk), lam, false).unwrap(), &opts).unwrap();
        prop_assert!((fwd.objective - bwd.objective).abs() <= 1e-7);
        if unique_subset_sums_check(problem.distances(), SubsetScope::AllDistances).unwrap().is_unique() {
            for (a, b) in fwd.initial().iter().zip(bwd.terminal.weights().iter().rev()) {
                prop_assert!((a - b).abs() <= 1e-5);
            }
        }
    }
}

#[test]
fn oracle_on_example_one() {
    let s = ObservationSeries::from_scalars(&[6.13, 7.85, 6.47, 4.91, 5.54, 7.13]).unwrap();
    let problem = build_problem(&s, &Metric::L2, 4.0, false).unwrap();
    let exact = solve_exact_small(&problem).unwrap();
    assert!((exact.objective + 8.7052).abs() < 1e-3, "{}", exact.objective);
    assert!(exact.gap <= 1e-10);
}
