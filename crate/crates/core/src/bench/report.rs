use std::fmt::Write as _;

use super::experiment::{ExperimentReport, Metric};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "algorithm,modes,T,metric,median,p5,p95,repeats,failed";

/// Formats like C's `%.6g`.
pub fn format_g6(x: f64) -> String {
    const PRECISION: i32 = 6;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // the exponent after rounding to six significant digits
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    format_g6(v.unwrap_or(f64::NAN))
}

pub fn report_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.algorithm,
            r.modes,
            r.t,
            r.metric.name(),
            opt(r.median),
            opt(r.p5),
            opt(r.p95),
            r.repeats,
            r.failed
        );
    }
    out
}

pub fn report_to_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// A row of the summary table, recovered from either report format.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub t: usize,
    pub metric: String,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

fn parse_number(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("invalid number {field:?} in report")))
}

/// Reads a JSON or CSV report into summary rows.
pub fn parse_report(text: &str) -> Result<Vec<SummaryRow>> {
    if text.trim_start().starts_with('{') {
        let report: ExperimentReport =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON report: {e}")))?;
        return Ok(report
            .rows
            .into_iter()
            .map(|r| SummaryRow {
                algorithm: r.algorithm,
                t: r.t,
                metric: r.metric.name().to_string(),
                median: r.median.unwrap_or(f64::NAN),
                p5: r.p5.unwrap_or(f64::NAN),
                p95: r.p95.unwrap_or(f64::NAN),
            })
            .collect());
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Config(format!("report must be JSON or CSV with header {CSV_HEADER:?}"))),
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Config(format!("malformed report line {line:?}")));
            }
            Ok(SummaryRow {
                algorithm: f[0].to_string(),
                t: f[2]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid T {:?} in report", f[2])))?,
                metric: f[3].to_string(),
                median: parse_number(f[4])?,
                p5: parse_number(f[5])?,
                p95: parse_number(f[6])?,
            })
        })
        .collect()
}

/// One line per (algorithm, metric, statistic) with a column per round `1..=T`.
///
/// Algorithms with fewer rounds leave trailing cells empty.
pub fn plot_columns(rows: &[SummaryRow]) -> String {
    let max_t = rows.iter().map(|r| r.t).max().unwrap_or(0);
    let mut out = String::from("series");
    for t in 1..=max_t {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');

    let mut series: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.algorithm.clone(), r.metric.clone());
        if !series.contains(&key) {
            series.push(key);
        }
    }
    for (algorithm, metric) in &series {
        for (stat, pick) in [
            ("median", (|r: &SummaryRow| r.median) as fn(&SummaryRow) -> f64),
            ("p5", |r| r.p5),
            ("p95", |r| r.p95),
        ] {
            let _ = write!(out, "{algorithm}:{metric}:{stat}");
            for t in 1..=max_t {
                let cell = rows
                    .iter()
                    .find(|r| &r.algorithm == algorithm && &r.metric == metric && r.t == t)
                    .map(|r| format_g6(pick(r)))
                    .unwrap_or_default();
                let _ = write!(out, ",{cell}");
            }
            out.push('\n');
        }
    }
    out
}

/// Names of the metrics present in a report, in a stable order.
pub fn metric_names(report: &ExperimentReport) -> Vec<Metric> {
    let mut m: Vec<Metric> = report.rows.iter().map(|r| r.metric).collect();
    m.sort();
    m.dedup();
    m
}
