//! Metric rows, checks and CSV output.

use std::fmt;
use std::io::Write;

use anyhow::Result;

pub const CSV_HEADER: [&str; 6] = ["scenario", "seed", "param1", "param2", "metric", "value"];

/// One measurement. `param1` and `param2` are scenario specific, for example
/// the scale n, or the world count m and mutation percentage x.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub scenario: String,
    pub seed: u64,
    pub param1: String,
    pub param2: String,
    pub metric: String,
    pub value: f64,
}

/// A pass/fail assertion about a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(scenario: &str, seed: u64) -> Self {
        Report {
            scenario: scenario.to_owned(),
            seed,
            ..Report::default()
        }
    }

    pub fn row(&mut self, param1: impl ToString, param2: impl ToString, metric: &str, value: f64) {
        self.rows.push(Row {
            scenario: self.scenario.clone(),
            seed: self.seed,
            param1: param1.to_string(),
            param2: param2.to_string(),
            metric: metric.to_owned(),
            value,
        });
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_owned(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Rows with the given metric, in insertion order.
    pub fn metric(&self, metric: &str) -> impl Iterator<Item = &Row> {
        let metric = metric.to_owned();
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.metric(metric).map(|r| r.value).collect()
    }

    pub fn merge(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.checks.extend(other.checks);
    }

    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if header {
            w.write_record(CSV_HEADER)?;
        }
        for r in &self.rows {
            w.write_record([
                r.scenario.as_str(),
                &r.seed.to_string(),
                &r.param1,
                &r.param2,
                &r.metric,
                &r.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares line through the points: `(slope, intercept, r_squared)`.
/// R² is 1 when the ys are constant and fit exactly.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (m, b, r2) = linear_fit(&xs, &ys);
        assert!((m - 2.0).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_of_noise_is_poor() {
        let (_, _, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, -1.0, 1.0, -1.0]);
        assert!(r2 < 0.5);
    }

    #[test]
    fn csv_schema() {
        let mut r = Report::new("temporal", 7);
        r.row(10000, "", "insert_per_s", 1.5);
        let mut out = Vec::new();
        r.write_csv(&mut out, true).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "scenario,seed,param1,param2,metric,value\ntemporal,7,10000,,insert_per_s,1.5\n"
        );
    }
}
