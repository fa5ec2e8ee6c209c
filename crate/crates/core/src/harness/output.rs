//! CSV artifacts. Schemas:
//!
//! - `metrics.csv`: `iter,split,metric,value,ci95`
//! - `weights.csv`: `iter,i,j,w_ij`
//! - `summary.csv`: `run,inner,outer,split,metric,mean,ci95,n_episodes`
//! - `params.csv`: `index,value`
//! - `checks.csv`: `path,n_params,max_rel_error,tol,passed`
//!
//! Floats use Rust's shortest round-trip formatting; nothing time-dependent is written.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::check::PathCheck;
use super::run::{EvalSummary, MetricsRecord, WeightRow};

pub const METRICS_HEADER: &str = "iter,split,metric,value,ci95";
pub const WEIGHTS_HEADER: &str = "iter,i,j,w_ij";
pub const SUMMARY_HEADER: &str = "run,inner,outer,split,metric,mean,ci95,n_episodes";

/// One `summary.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run: String,
    pub inner: String,
    pub outer: String,
    pub split: String,
    pub summary: EvalSummary,
}

pub fn metrics_csv(split: &str, records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    append_metrics(&mut s, split, records);
    format!("{METRICS_HEADER}\n{s}")
}

/// Rows for `records` under `split` (and `eval` rows for periodic evaluations), without a header.
pub fn append_metrics(s: &mut String, split: &str, records: &[MetricsRecord]) {
    for r in records {
        let _ = writeln!(s, "{},{split},query_loss,{},{}", r.meta_iter, r.train_loss, r.train_loss_ci95);
        let _ = writeln!(s, "{},{split},query_metric,{},", r.meta_iter, r.train_metric);
        let _ = writeln!(s, "{},{split},solves,{},", r.meta_iter, r.solves);
        let _ = writeln!(s, "{},{split},inner_steps,{},", r.meta_iter, r.inner_steps);
        if let Some(e) = &r.eval {
            let _ = writeln!(s, "{},eval,{},{},{}", r.meta_iter, e.metric.label(), e.mean_metric, e.ci95_halfwidth);
        }
    }
}

pub fn weights_csv(rows: &[WeightRow]) -> String {
    let mut s = format!("{WEIGHTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.iter, r.i, r.j, r.w_ij);
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let e = &r.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.run,
            r.inner,
            r.outer,
            r.split,
            e.metric.label(),
            e.mean_metric,
            e.ci95_halfwidth,
            e.n_episodes
        );
    }
    s
}

pub fn params_csv(flat: &[f64]) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in flat.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    s
}

pub fn parse_params_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("index,value") {
        return Err(Error::Config("params file must start with an `index,value` header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, line)| {
            let (i, v) = line.split_once(',').ok_or_else(|| Error::Config(format!("params line {}: {line}", k + 2)))?;
            if i.trim().parse::<usize>().ok() != Some(k) {
                return Err(Error::Config(format!("params line {}: index out of order", k + 2)));
            }
            v.trim().parse::<f64>().map_err(|e| Error::Config(format!("params line {}: {e}", k + 2)))
        })
        .collect()
}

pub fn checks_csv(checks: &[PathCheck]) -> String {
    let mut s = String::from("path,n_params,max_rel_error,tol,passed\n");
    for c in checks {
        let r = &c.report;
        let _ = writeln!(s, "{},{},{},{},{}", c.path, r.n_params, r.max_rel_error, r.tol, r.passed);
    }
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}
