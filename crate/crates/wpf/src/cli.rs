//! The `wpf` command line: `estimate`, `evaluate` and `appendix`.
//!
//! Every flag can also be given in a flat `key = value` file passed with
//! `--config`; flags on the command line win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wpf_core::downstream::{cvar_portfolio, weighted_regression_fit, PortfolioSpec};
use wpf_core::model::build_problem;
use wpf_core::{solve, Metric, SolverOptions};

use crate::harness::{
    compare, dropout_probe, generate_synthetic, instability_probe, pair_series, rolling_evaluate,
    ComparisonRow, CostTrace, EvaluationConfig, Method, ParameterGrid, Phase, SyntheticSpec, Task,
};
use crate::io::{csv_text, fmt_num, indexed_csv, parse_key_values, read_dataset, read_to_string, write_file, Summary};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "wpf", version, about = "Wasserstein probability flow estimation", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Terminal distribution and solution summary for one or more penalties.
    Estimate(EstimateArgs),
    /// Rolling train/test comparison of weighting schemes.
    Evaluate(EvaluateArgs),
    /// Weight of the first nonzero observation on the constructed sequence.
    Appendix(AppendixArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    L1,
    L2,
    Linf,
}

impl MetricArg {
    fn metric(self, delta0: Option<f64>) -> Result<Metric> {
        let base = match self {
            MetricArg::L1 => Metric::L1,
            MetricArg::L2 => Metric::L2,
            MetricArg::Linf => Metric::Linf,
        };
        Ok(match delta0 {
            Some(d) => Metric::adjusted(base, d)?,
            None => base,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Forecast,
    Portfolio,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SyntheticArg {
    Markov,
    Drift,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Flat key=value file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with a `time` column, optional `period`, then features.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "l2")]
    metric: MetricArg,
    /// Added to every nonzero distance.
    #[arg(long)]
    delta0: Option<f64>,
    /// A penalty or a comma-separated grid.
    #[arg(long, default_value = "1")]
    lambda: String,
    /// Forbid transitions within a period.
    #[arg(long)]
    grouped: bool,
    #[arg(long, value_enum, default_value = "none")]
    task: TaskArg,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV input; omit to use a synthetic series.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    synthetic: Option<SyntheticArg>,
    /// Length of the synthetic series.
    #[arg(long, default_value_t = 168)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of saa, window, smoothing, wpf.
    #[arg(long, default_value = "saa,window,smoothing,wpf")]
    methods: String,
    /// WPF metrics, comma-separated.
    #[arg(long, default_value = "l1,l2,linf")]
    metric: String,
    #[arg(long)]
    delta0: Option<f64>,
    /// Penalty grid override, comma-separated.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    grouped: bool,
    #[arg(long, value_enum, default_value = "forecast")]
    task: TaskArg,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 24)]
    tuning_window: usize,
    #[arg(long, default_value_t = 24)]
    warmup: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AppendixArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence lengths, comma-separated.
    #[arg(long = "t", default_value = "9,16,31")]
    lengths: String,
    /// Also solve the six-point support dropout example.
    #[arg(long)]
    dropout: bool,
    /// Penalties for the dropout example.
    #[arg(long, default_value = "2.7,3")]
    lambda: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    use wpf_core::downstream::LpError;
    use wpf_core::Error as E;
    match err {
        Error::Core(E::NotConverged { .. } | E::Singular(_) | E::Lp(LpError::IterationLimit { .. })) => EXIT_SOLVER,
        Error::Core(E::NegativeFlow { .. } | E::InfeasibleFlow(_) | E::ZeroNodeMass { .. } | E::Lp(_)) => {
            EXIT_INTERNAL
        }
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Messages go to stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match with_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Estimate(a) => estimate(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Appendix(a) => appendix(&a),
    };
    match outcome {
        Ok(files) => {
            for (path, contents) in &files {
                if let Err(e) = write_file(path, contents) {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

const SWITCHES: [&str; 2] = ["grouped", "dropout"];

/// Splices `--key value` pairs from the `--config` file in front of the
/// user's own flags so the latter override them.
fn with_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let a = a.to_string_lossy();
        if a == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    if args.len() < 2 {
        return Ok(args);
    }
    let mut injected = Vec::new();
    for (k, v) in parse_key_values(&read_to_string(&path)?)? {
        let key = k.replace('_', "-");
        if SWITCHES.contains(&key.as_str()) {
            match v.as_str() {
                "true" | "1" | "yes" => injected.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" => {}
                _ => return Err(Error::Config(format!("`{key}` expects true or false, found `{v}`"))),
            }
        } else {
            injected.push(OsString::from(format!("--{key}")));
            injected.push(OsString::from(v));
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    let v = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad {what} `{}`", s.trim())))
        })
        .collect::<Result<Vec<T>>>()?;
    if v.is_empty() {
        return Err(Error::Parse(format!("empty {what} list")));
    }
    Ok(v)
}

type Files = Vec<(PathBuf, String)>;

fn estimate(a: &EstimateArgs) -> Result<Files> {
    let data = read_dataset(&a.input)?;
    let metric = a.metric.metric(a.delta0)?;
    let lambdas: Vec<f64> = parse_list(&a.lambda, "lambda")?;
    let spec = PortfolioSpec::new(a.rho, a.beta)?;
    let (series, times) = match a.task {
        TaskArg::Forecast => (pair_series(&data.series)?, data.times[..data.times.len() - 1].to_vec()),
        _ => (data.series.clone(), data.times.clone()),
    };
    let single = lambdas.len() == 1;
    let mut files = Files::new();
    let mut sweep = Vec::new();
    for &lambda in &lambdas {
        let problem = build_problem(&series, &metric, lambda, a.grouped)?;
        let sol = solve(&problem, &SolverOptions::default())?;
        let summary = Summary::new(lambda, &sol);
        let suffix = if single { String::new() } else { format!("_lambda_{}", fmt_num(lambda)) };
        let weights = sol.terminal.weights();
        files.push((a.out.join(format!("weights{suffix}.csv")), indexed_csv("weight", &times, weights)?));
        files.push((a.out.join(format!("node_mass{suffix}.csv")), indexed_csv("mass", &times, &sol.node_mass)?));
        files.push((a.out.join(format!("summary{suffix}.txt")), summary.to_string()));
        match a.task {
            TaskArg::Forecast => {
                let pts: Vec<&[f64]> = data.series.points().collect();
                let model = weighted_regression_fit(&pts, weights)?;
                let next = model.predict(pts[pts.len() - 1])?;
                let rows: Vec<Vec<String>> = data
                    .features
                    .iter()
                    .zip(&next)
                    .map(|(f, v)| vec![f.clone(), fmt_num(*v)])
                    .collect();
                files.push((a.out.join(format!("forecast{suffix}.csv")), csv_text(&["feature", "forecast"], &rows)?));
            }
            TaskArg::Portfolio => {
                let pts: Vec<&[f64]> = data.series.points().collect();
                let d = cvar_portfolio(&pts, weights, &spec)?;
                let rows: Vec<Vec<String>> = data
                    .features
                    .iter()
                    .zip(&d.x)
                    .map(|(f, v)| vec![f.clone(), fmt_num(*v)])
                    .collect();
                files.push((a.out.join(format!("allocation{suffix}.csv")), csv_text(&["asset", "weight"], &rows)?));
            }
            TaskArg::None => {}
        }
        if single {
            print!("{summary}");
        }
        sweep.push(vec![
            fmt_num(lambda),
            fmt_num(sol.objective),
            fmt_num(sol.mu_path),
            fmt_num(sol.gap),
            sol.terminal.support(1e-6).len().to_string(),
            summary.components.len().to_string(),
        ]);
    }
    if !single {
        let table = csv_text(&["lambda", "objective", "mu_path", "gap", "support", "components"], &sweep)?;
        print!("{table}");
        files.push((a.out.join("lambda_sweep.csv"), table));
    }
    Ok(files)
}

fn evaluate(a: &EvaluateArgs) -> Result<Files> {
    let task = match a.task {
        TaskArg::Forecast => Task::Forecast,
        TaskArg::Portfolio => Task::Portfolio(PortfolioSpec::new(a.rho, a.beta)?),
        TaskArg::None => return Err(Error::Config("evaluate needs --task forecast or portfolio".into())),
    };
    let mut files = Files::new();
    let series = match (&a.input, a.synthetic) {
        (Some(path), _) => read_dataset(path)?.series,
        (None, kind) => {
            let spec = match kind.unwrap_or(SyntheticArg::Markov) {
                SyntheticArg::Markov => SyntheticSpec::markov_default(a.length),
                SyntheticArg::Drift => SyntheticSpec::drift_default(a.length),
            };
            let s = generate_synthetic(&spec, a.seed)?;
            let rows: Vec<Vec<String>> = s
                .points()
                .enumerate()
                .map(|(t, p)| std::iter::once((t + 1).to_string()).chain(p.iter().map(|v| fmt_num(*v))).collect())
                .collect();
            let names: Vec<String> = (1..=s.dim()).map(|k| format!("x{k}")).collect();
            let header: Vec<&str> = std::iter::once("time").chain(names.iter().map(String::as_str)).collect();
            files.push((a.out.join("series.csv"), csv_text(&header, &rows)?));
            s
        }
    };
    let mut grid = match task {
        Task::Forecast => ParameterGrid::forecasting(),
        Task::Portfolio(_) => ParameterGrid::portfolio(),
    };
    if let Some(l) = &a.lambda {
        grid.lambdas = parse_list(l, "lambda")?;
    }
    let config = EvaluationConfig {
        train_fraction: a.train_frac,
        warmup: a.warmup,
        tuning_window: a.tuning_window,
        grid,
        grouped: a.grouped,
        solver: SolverOptions::default(),
    };
    config.validate()?;
    let mut methods = Vec::new();
    for name in a.methods.split(',').map(str::trim) {
        match name {
            "saa" => methods.push(Method::Saa),
            "window" => methods.push(Method::Window),
            "smoothing" => methods.push(Method::Smoothing),
            "wpf" => {
                for m in parse_list::<String>(&a.metric, "metric")? {
                    let arg = MetricArg::from_str(&m, true).map_err(|_| Error::Parse(format!("unknown metric `{m}`")))?;
                    methods.push(Method::Wpf(arg.metric(a.delta0)?));
                }
            }
            other => return Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
    let traces: Vec<CostTrace> = methods
        .iter()
        .map(|m| rolling_evaluate(&series, m, &task, &config))
        .collect::<Result<_>>()?;
    let saa = traces.iter().find(|t| t.method == Method::Saa.name());
    let rows = compare(&traces, saa, &task)?;
    let table = comparison_text(&rows, &task);
    print!("{table}");
    files.push((a.out.join("comparison.txt"), table));
    files.push((a.out.join("comparison.csv"), comparison_csv(&rows)?));
    files.push((a.out.join("trace.csv"), trace_csv(&traces)?));
    Ok(files)
}

/// Method columns with the testing cost and the paired difference from the
/// baseline, standard error underneath.
pub fn comparison_text(rows: &[ComparisonRow], task: &Task) -> String {
    let label = match task {
        Task::Forecast => "Average testing cost",
        Task::Portfolio(_) => "Risk-adjusted average testing cost",
    };
    let diff_label = "Difference from SAA";
    let lw = label.len().max(diff_label.len());
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            let (d, se) = match r.difference {
                Some((d, se)) => (fmt_num(d), format!("±{}", fmt_num(se))),
                None => (String::new(), String::new()),
            };
            [r.method.clone(), fmt_num(r.testing_cost), d, se]
        })
        .collect();
    let widths: Vec<usize> = cells
        .iter()
        .map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (line, first) in [(0, ""), (1, label), (2, diff_label), (3, "")] {
        let mut s = format!("{first:<lw$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(s, "  {:>w$}", c[line], w = *w);
        }
        out.push_str(s.trim_end());
        out.push('\n');
    }
    out
}

fn comparison_csv(rows: &[ComparisonRow]) -> Result<String> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let (d, se) = match r.difference {
                Some((d, se)) => (fmt_num(d), fmt_num(se)),
                None => (String::new(), String::new()),
            };
            vec![r.method.clone(), fmt_num(r.testing_cost), d, se]
        })
        .collect();
    csv_text(&["method", "testing_cost", "difference", "std_error"], &body)
}

fn trace_csv(traces: &[CostTrace]) -> Result<String> {
    let mut rows = Vec::new();
    for t in traces {
        for e in &t.entries {
            rows.push(vec![
                t.method.clone(),
                e.period.to_string(),
                match e.phase {
                    Phase::Train => "train".into(),
                    Phase::Test => "test".into(),
                },
                e.parameter.map(fmt_num).unwrap_or_default(),
                fmt_num(e.cost),
            ]);
        }
    }
    csv_text(&["method", "period", "phase", "parameter", "cost"], &rows)
}

fn appendix(a: &AppendixArgs) -> Result<Files> {
    let lengths: Vec<usize> = parse_list(&a.lengths, "length")?;
    let opts = SolverOptions::default();
    let probe = instability_probe(&lengths, &opts)?;
    let rows: Vec<Vec<String>> = probe.iter().map(|(t, w)| vec![t.to_string(), fmt_num(*w)]).collect();
    let table = csv_text(&["T", "weight"], &rows)?;
    print!("{table}");
    let mut files = vec![(a.out.join("appendix.csv"), table)];
    if a.dropout {
        let lambdas: Vec<f64> = parse_list(&a.lambda, "lambda")?;
        let mut rows = Vec::new();
        for (l, w) in dropout_probe(&lambdas, &opts)? {
            for (i, (&x, &p)) in crate::harness::DROPOUT_VALUES.iter().zip(w.weights()).enumerate() {
                rows.push(vec![fmt_num(l), (i + 1).to_string(), fmt_num(x), fmt_num(p)]);
            }
        }
        let table = csv_text(&["lambda", "index", "value", "weight"], &rows)?;
        print!("{table}");
        files.push((a.out.join("dropout.csv"), table));
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metric_name;

    #[test]
    fn config_injection_keeps_cli_last() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "metric = l1\ngrouped = true\ntrain_frac = 0.6\n").unwrap();
        let args: Vec<OsString> = ["wpf", "estimate", "--config", cfg.to_str().unwrap(), "--metric", "linf"]
            .iter()
            .map(OsString::from)
            .collect();
        let out = with_config(args).unwrap();
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s[..8], ["wpf", "estimate", "--metric", "l1", "--grouped", "--train-frac", "0.6", "--config"]);
        assert_eq!(s.last().unwrap(), "linf");
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("1, 2.5", "x").unwrap(), [1.0, 2.5]);
        assert!(parse_list::<f64>("1,,2", "x").is_err());
        assert!(parse_list::<usize>("a", "x").is_err());
    }

    #[test]
    fn metric_names() {
        assert_eq!(metric_name(&MetricArg::Linf.metric(None).unwrap()), "Linf");
        assert!(MetricArg::L1.metric(Some(-1.0)).is_err());
    }
}
