//! CSV datasets, result tables and `key=value` text files.

use std::fmt;
use std::fs;
use std::path::Path;

use wpf_core::analysis::{components, SUPPORT_THRESHOLD};
use wpf_core::{FlowSolution, ObservationSeries};

use crate::{Error, Result};

/// A series read from CSV: a `time` column, an optional `period` column and
/// feature columns in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<i64>,
    pub features: Vec<String>,
    pub series: ObservationSeries,
    /// Whether the file carried a `period` column.
    pub has_periods: bool,
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file)
}

pub fn parse_dataset<R: std::io::Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let time_col = headers
        .iter()
        .position(|h| h == "time")
        .ok_or_else(|| Error::Parse("missing `time` column".into()))?;
    let period_col = headers.iter().position(|h| h == "period");
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != time_col && Some(i) != period_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Parse("no feature columns".into()));
    }
    let mut times = Vec::new();
    let mut labels = Vec::new();
    let mut points = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let int = |col: usize, what: &str| -> Result<i64> {
            rec[col]
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: {what} `{}` is not an integer", &rec[col])))
        };
        times.push(int(time_col, "time")?);
        if let Some(c) = period_col {
            labels.push(int(c, "period")?);
        }
        let p = feature_cols
            .iter()
            .map(|&c| {
                rec[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("line {line}: `{}` is not a finite number", &rec[c])))
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parse("`time` must be strictly increasing".into()));
    }
    let series = if period_col.is_some() {
        if labels.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parse("`period` must be nondecreasing".into()));
        }
        let mut periods = Vec::with_capacity(labels.len());
        let mut current = 1u32;
        for (i, l) in labels.iter().enumerate() {
            if i > 0 && *l != labels[i - 1] {
                current += 1;
            }
            periods.push(current);
        }
        ObservationSeries::with_periods(&points, periods)?
    } else {
        ObservationSeries::new(&points)?
    };
    Ok(Dataset {
        times,
        features: feature_cols.iter().map(|&c| headers[c].to_string()).collect(),
        series,
        has_periods: period_col.is_some(),
    })
}

/// Six significant digits, shortest form.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..6).contains(&exp) {
        trim_zeros(format!("{:.*}", (5 - exp) as usize, x))
    } else {
        format!("{}e{}", trim_zeros(mant.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Renders rows as CSV text.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// `index,time,<column>` rows, 1-based index.
pub fn indexed_csv(column: &str, times: &[i64], values: &[f64]) -> Result<String> {
    let rows: Vec<Vec<String>> = values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), times[i].to_string(), fmt_num(*v)])
        .collect();
    csv_text(&["index", "time", column], &rows)
}

/// Solution summary written as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub lambda: f64,
    pub objective: f64,
    pub mu_path: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Observation indices (1-based) of each support component.
    pub components: Vec<Vec<usize>>,
}

impl Summary {
    pub fn new(lambda: f64, solution: &FlowSolution) -> Self {
        Self {
            lambda,
            objective: solution.objective,
            mu_path: solution.mu_path,
            gap: solution.gap,
            iterations: solution.iterations,
            components: components(solution, SUPPORT_THRESHOLD)
                .into_iter()
                .map(|c| c.nodes)
                .collect(),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lambda={}", fmt_num(self.lambda))?;
        writeln!(f, "objective={}", fmt_num(self.objective))?;
        writeln!(f, "mu_path={}", fmt_num(self.mu_path))?;
        writeln!(f, "gap={}", fmt_num(self.gap))?;
        writeln!(f, "iterations={}", self.iterations)?;
        let comps: Vec<String> = self
            .components
            .iter()
            .map(|c| {
                let ids: Vec<String> = c.iter().map(|n| n.to_string()).collect();
                format!("{{{}}}", ids.join(","))
            })
            .collect();
        writeln!(f, "components=[{}]", comps.join(","))
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                return None;
            }
            Some(match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
                _ => Err(Error::Parse(format!("line {}: expected key=value", i + 1))),
            })
        })
        .collect()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(0.274940123), "0.27494");
        assert_eq!(fmt_num(-8.70520449), "-8.7052");
        assert_eq!(fmt_num(3.637121), "3.63712");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(123456789.0), "1.23457e8");
        assert_eq!(fmt_num(1.234e-9), "1.234e-9");
        assert_eq!(fmt_num(9.9999996), "10");
        assert_eq!(fmt_num(0.000123456789), "0.000123457");
    }

    #[test]
    fn six_digit_round_trip() {
        for &x in &[0.1234567891, -98765.4321, 3.0e-12, 7.77e15, 1.0 / 3.0] {
            let back: f64 = fmt_num(x).parse().unwrap();
            assert!(((back - x) / x).abs() <= 5e-6, "{x}");
        }
    }

    #[test]
    fn dataset() {
        let d = parse_dataset("time,period,a,b\n1,7,0.5,1\n2,7,0.25,2\n3,9,1e-3,3\n".as_bytes()).unwrap();
        assert_eq!(d.times, [1, 2, 3]);
        assert_eq!(d.features, ["a", "b"]);
        assert_eq!(d.series.periods(), &[1, 1, 2]);
        assert_eq!(d.series.point(2), &[1e-3, 3.0]);
        let d = parse_dataset("value,time\n6.13,1\n7.85,2\n".as_bytes()).unwrap();
        assert!(!d.has_periods);
        assert_eq!(d.series.periods(), &[1, 2]);
    }

    #[test]
    fn dataset_errors() {
        assert!(parse_dataset("".as_bytes()).is_err());
        assert!(parse_dataset("time,x\n".as_bytes()).is_err());
        assert!(parse_dataset("t,x\n1,2\n".as_bytes()).is_err());
        assert!(parse_dataset("time\n1\n".as_bytes()).is_err());
        assert!(parse_dataset("time,x\n1,abc\n".as_bytes()).is_err());
        assert!(parse_dataset("time,x\n2,1\n1,1\n".as_bytes()).is_err());
        assert!(parse_dataset("time,period,x\n1,2,1\n2,1,1\n".as_bytes()).is_err());
        assert!(parse_dataset("time,x\n1.5,1\n".as_bytes()).is_err());
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# sweep\nmetric = l1\n\nlambda=1,2 # grid\n").unwrap();
        assert_eq!(kv, [("metric".into(), "l1".into()), ("lambda".into(), "1,2".into())]);
        assert!(parse_key_values("oops\n").is_err());
    }

    #[test]
    fn tables() {
        let t = indexed_csv("weight", &[10, 11], &[0.25, 0.75]).unwrap();
        assert_eq!(t, "index,time,weight\n1,10,0.25\n2,11,0.75\n");
    }
}
