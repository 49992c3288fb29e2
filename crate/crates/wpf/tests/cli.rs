use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpf")).args(args).output().expect("spawn wpf")
}

fn example_one_csv(dir: &Path) -> String {
    let path = dir.join("example1.csv");
    let rows = ["time,value", "1,6.13", "2,7.85", "3,6.47", "4,4.91", "5,5.54", "6,7.13"];
    fs::write(&path, rows.join("\n") + "\n").unwrap();
    path.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn estimate_example_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = example_one_csv(dir.path());
    let out = dir.path().join("out");
    let res = wpf(&["estimate", "--input", &input, "--lambda", "4", "--metric", "l2", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_csv(&out.join("weights.csv"));
    assert_eq!(rows.len(), 6);
    let weight = |i: usize| rows[i - 1][2].parse::<f64>().unwrap();
    for (i, want) in [(2, 0.275), (3, 0.021), (5, 0.325), (6, 0.379)] {
        assert!((weight(i) - want).abs() < 1e-3, "row {i}: {}", weight(i));
    }
    assert!(weight(1) < 1e-6 && weight(4) < 1e-6);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("components=[{1,3,6},{2},{4,5}]"), "{summary}");
    assert!(summary.starts_with("lambda=4\n"));
    assert_eq!(read_csv(&out.join("node_mass.csv")).len(), 6);
}

#[test]
fn empty_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    fs::write(&input, "").unwrap();
    let res = wpf(&["estimate", "--input", input.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_ne!(res.status.code(), Some(0));
    assert!(!res.stderr.is_empty());
    let res = wpf(&["estimate", "--input", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn lambda_grid_writes_one_file_each() {
    let dir = tempfile::tempdir().unwrap();
    let input = example_one_csv(dir.path());
    let out = dir.path().join("sweep");
    let res = wpf(&["estimate", "--input", &input, "--lambda", "0.5,4,40", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    for l in ["0.5", "4", "40"] {
        assert!(out.join(format!("weights_lambda_{l}.csv")).exists(), "{l}");
        assert!(out.join(format!("summary_lambda_{l}.txt")).exists(), "{l}");
    }
    let sweep = read_csv(&out.join("lambda_sweep.csv"));
    assert_eq!(sweep.len(), 3);
    let objectives: Vec<f64> = sweep.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(objectives.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn saa_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eval");
    let res = wpf(&[
        "evaluate", "--synthetic", "markov", "--length", "40", "--warmup", "10", "--methods", "saa", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_csv(&out.join("comparison.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "SAA");
    assert_eq!(&rows[0][2..], ["0", "0"]);
    let text = fs::read_to_string(out.join("comparison.txt")).unwrap();
    assert!(text.contains("Average testing cost"));
    assert!(text.contains("±0"));
}

#[test]
fn evaluation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = wpf(&[
            "evaluate", "--synthetic", "drift", "--length", "36", "--warmup", "12", "--seed", "3", "--methods",
            "saa,window,smoothing,wpf", "--metric", "l2", "--lambda", "10,100", "--out", out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        (
            fs::read_to_string(out.join("comparison.csv")).unwrap(),
            fs::read_to_string(out.join("trace.csv")).unwrap(),
        )
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(a.0.lines().count(), 5);
}

#[test]
fn appendix_single_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("app");
    let res = wpf(&["appendix", "--t", "9", "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let rows = read_csv(&out.join("appendix.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "9");
    assert!((rows[0][1].parse::<f64>().unwrap() - 0.25).abs() < 1e-3);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = example_one_csv(dir.path());
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("cfg_out");
    fs::write(&cfg, format!("input = {input}\nlambda = 4\nmetric = l1\nout = {}\n", out.display())).unwrap();
    // the command line overrides the file's metric
    let res = wpf(&["estimate", "--config", cfg.to_str().unwrap(), "--metric", "l2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("components=[{1,3,6},{2},{4,5}]"), "{summary}");
}

#[test]
fn usage_errors() {
    assert_eq!(wpf(&["estimate"]).status.code(), Some(1));
    assert_eq!(wpf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(wpf(&["--help"]).status.code(), Some(0));
    let res = wpf(&["evaluate", "--synthetic", "markov", "--length", "5", "--warmup", "10", "--methods", "saa"]);
    assert_eq!(res.status.code(), Some(1));
}
