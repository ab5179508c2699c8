//! CSV files written by the experiment runner. Column order is fixed; the
//! plotting scripts depend on it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fdcr_core::algo::ConvergenceTrace;
use serde::{Deserialize, Serialize};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const OUTAGE_FILE: &str = "outage.csv";
pub const TRACES_DIR: &str = "traces";

/// One row of `results.csv`. Per-user rates are `;`-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub param: String,
    pub value: Option<f64>,
    pub seed: u64,
    pub sum_rate: f64,
    pub dl_rates: String,
    pub ul_rates: String,
    pub outer_iters: usize,
    pub w_rank_ratio: f64,
    /// Largest verified leakage over all PUs (W).
    pub max_leakage: f64,
    /// Largest verified leakage divided by the PU's tolerance.
    pub leakage_ratio: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub param: String,
    pub value: Option<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scheme: String,
    pub value: Option<f64>,
    pub seed: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRow {
    pub scheme: String,
    pub p_tar_dbm: f64,
    pub outage_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCsvRow {
    /// Sub-problem index; only the half-duplex scheme has two.
    pub part: usize,
    pub outer_iter: usize,
    pub inner_stage: String,
    pub inner_iter: usize,
    pub objective: f64,
    pub rank_ratio_max: Option<f64>,
    pub max_safe_leakage: Option<f64>,
}

pub fn join_rates(rates: &[f64]) -> String {
    rates.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn trace_rows(parts: &[&ConvergenceTrace]) -> Vec<TraceCsvRow> {
    let mut out = Vec::new();
    for (part, trace) in parts.iter().enumerate() {
        for r in &trace.rows {
            out.push(TraceCsvRow {
                part,
                outer_iter: r.outer_iter,
                inner_stage: r.stage.label().to_string(),
                inner_iter: r.inner_iter,
                objective: r.objective,
                rank_ratio_max: r.rank_ratio_max,
                max_safe_leakage: r.max_safe_leakage,
            });
        }
    }
    out
}

/// Writes a trace; the header is written even for an empty trace.
pub fn write_trace(path: &Path, rows: &[TraceCsvRow]) -> anyhow::Result<()> {
    if rows.is_empty() {
        let mut f = File::create(path)?;
        writeln!(f, "part,outer_iter,inner_stage,inner_iter,objective,rank_ratio_max,max_safe_leakage")?;
        return Ok(());
    }
    write_rows(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let row = ResultRow {
            scheme: "proposed".into(),
            param: String::new(),
            value: None,
            seed: 3,
            sum_rate: 1.25,
            dl_rates: join_rates(&[0.5, 0.25]),
            ul_rates: join_rates(&[0.5]),
            outer_iters: 4,
            w_rank_ratio: 1e-9,
            max_leakage: 1e-12,
            leakage_ratio: 0.9,
            status: "ok".into(),
        };
        write_rows(&path, std::slice::from_ref(&row)).unwrap();
        let back: Vec<ResultRow> = read_rows(&path).unwrap();
        assert_eq!(back, vec![row]);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("scheme,param,value,seed,sum_rate,dl_rates,ul_rates,"));
    }

    #[test]
    fn empty_trace_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trace(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "part,outer_iter,inner_stage,inner_iter,objective,rank_ratio_max,max_safe_leakage");
    }
}
