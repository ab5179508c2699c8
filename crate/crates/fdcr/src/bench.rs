//! Monte-Carlo experiment runner: one run per (scheme, sweep value, seed),
//! each verified against its uncertainty sets, collected in canonical order.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use fdcr_core::algo::RunStatus;
use fdcr_core::baselines::{run_scheme, Scheme, SchemeOutcome};
use fdcr_core::conic::ConicSolver;
use fdcr_core::model::{generate_scenario, Scenario};
use fdcr_core::robust::{sampled_leakages, verify_robust_leakage};
use rayon::prelude::*;

use crate::config::{dbm_to_watts, ExperimentConfig};
use crate::io::{self, OutageRow, ResultRow, SummaryRow, TimingRow};

/// Thread-count override for the worker pool.
pub const THREADS_ENV: &str = "FDCR_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scheme: Scheme,
    pub seed: u64,
    pub value: Option<f64>,
    pub sum_rate: f64,
    pub dl_rates: Vec<f64>,
    pub ul_rates: Vec<f64>,
    pub outer_iters: usize,
    pub wall_time_s: f64,
    pub w_rank_ratio: f64,
    pub max_leakage: f64,
    pub leakage_ratio: f64,
    pub status: RunStatus,
    pub notes: Vec<String>,
}

impl RunRecord {
    pub fn leakage_ok(&self) -> bool {
        self.leakage_ratio <= 1.0
    }
}

/// A finished run with its outcome kept for traces and further checks.
#[derive(Debug, Clone)]
pub struct Run {
    pub record: RunRecord,
    pub outcome: Option<SchemeOutcome>,
}

fn pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
        b = b.num_threads(n.max(1));
    }
    Ok(b.build()?)
}

fn failed(scheme: Scheme, seed: u64, value: Option<f64>, msg: String, t: Instant) -> Run {
    Run {
        record: RunRecord {
            scheme,
            seed,
            value,
            sum_rate: f64::NAN,
            dl_rates: Vec::new(),
            ul_rates: Vec::new(),
            outer_iters: 0,
            wall_time_s: t.elapsed().as_secs_f64(),
            w_rank_ratio: f64::NAN,
            max_leakage: f64::NAN,
            leakage_ratio: f64::NAN,
            status: RunStatus::Degraded,
            notes: vec![msg],
        },
        outcome: None,
    }
}

/// Largest verified leakage and leakage-to-tolerance ratio over every PU of
/// every part.
pub fn verify_outcome(out: &SchemeOutcome, samples: usize, seed: u64) -> (f64, f64) {
    let (mut leak, mut ratio) = (0.0f64, 0.0f64);
    for part in &out.parts {
        for i in 0..part.scenario.i_pu() {
            let chk = verify_robust_leakage(&part.scenario, &part.alloc, i, samples, seed);
            leak = leak.max(chk.max_leak);
            ratio = ratio.max(chk.max_leak / part.scenario.params.p_tol[i]);
        }
    }
    (leak, ratio)
}

/// Runs one scheme on one seeded scenario. Failures become degraded
/// records instead of errors.
pub fn run_one<S: ConicSolver + Sync + ?Sized>(
    solver: &S,
    cfg: &ExperimentConfig,
    scheme: Scheme,
    seed: u64,
    value: Option<f64>,
) -> Run {
    let t = Instant::now();
    let cfg = match cfg.at(value) {
        Ok(c) => c,
        Err(e) => return failed(scheme, seed, value, e.to_string(), t),
    };
    let s = match generate_scenario(&cfg.scenario, seed) {
        Ok(s) => s,
        Err(e) => return failed(scheme, seed, value, format!("scenario: {e}"), t),
    };
    let out = match run_scheme(solver, &s, scheme, seed, &cfg.algo) {
        Ok(o) => o,
        Err(e) => return failed(scheme, seed, value, format!("{}: {e}", scheme.name()), t),
    };
    let wall = t.elapsed().as_secs_f64();
    let (max_leakage, leakage_ratio) = verify_outcome(&out, cfg.verify_samples, seed);
    Run {
        record: RunRecord {
            scheme,
            seed,
            value,
            sum_rate: out.sum_rate,
            dl_rates: out.dl_rates.clone(),
            ul_rates: out.ul_rates.clone(),
            outer_iters: out.outer_iters,
            wall_time_s: wall,
            w_rank_ratio: out.w_rank_ratio,
            max_leakage,
            leakage_ratio,
            status: out.status,
            notes: out.notes.clone(),
        },
        outcome: Some(out),
    }
}

/// Every (scheme, sweep value, seed) job in canonical order.
pub fn jobs(cfg: &ExperimentConfig) -> Vec<(Scheme, Option<f64>, u64)> {
    let mut schemes = cfg.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let values: Vec<Option<f64>> = match &cfg.sweep {
        Some(sw) => {
            let mut v = sw.values.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.into_iter().map(Some).collect()
        }
        None => vec![None],
    };
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let mut out = Vec::new();
    for &sch in &schemes {
        for &v in &values {
            for &seed in &seeds {
                out.push((sch, v, seed));
            }
        }
    }
    out
}

/// Runs every job on a bounded pool; results come back in canonical order.
pub fn run_all<S: ConicSolver + Sync + ?Sized>(solver: &S, cfg: &ExperimentConfig) -> anyhow::Result<Vec<Run>> {
    let jobs = jobs(cfg);
    let pool = pool()?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(sch, v, seed)| {
                let run = run_one(solver, cfg, sch, seed, v);
                log::info!(
                    "{} seed {seed}{}: {:.4} ({:?})",
                    sch.name(),
                    v.map(|x| format!(" value {x}")).unwrap_or_default(),
                    run.record.sum_rate,
                    run.record.status
                );
                run
            })
            .collect()
    }))
}

fn status_label(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Ok => "ok",
        RunStatus::Degraded => "degraded",
    }
}

pub fn result_rows(cfg: &ExperimentConfig, runs: &[Run]) -> Vec<ResultRow> {
    let param = cfg.sweep.as_ref().map(|s| s.param.clone()).unwrap_or_default();
    runs.iter()
        .map(|r| {
            let rec = &r.record;
            ResultRow {
                scheme: rec.scheme.name().to_string(),
                param: param.clone(),
                value: rec.value,
                seed: rec.seed,
                sum_rate: rec.sum_rate,
                dl_rates: io::join_rates(&rec.dl_rates),
                ul_rates: io::join_rates(&rec.ul_rates),
                outer_iters: rec.outer_iters,
                w_rank_ratio: rec.w_rank_ratio,
                max_leakage: rec.max_leakage,
                leakage_ratio: rec.leakage_ratio,
                status: status_label(rec.status).to_string(),
            }
        })
        .collect()
}

/// Mean and standard error of the sum rate per (scheme, value) cell, from
/// the rows of `results.csv`. Failed runs (NaN rates) are left out.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut cell: Vec<f64> = Vec::new();
    let flush = |out: &mut Vec<SummaryRow>, cell: &mut Vec<f64>, r: &ResultRow| {
        let n = cell.len();
        let mean = if n > 0 { cell.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let stderr = if n > 1 {
            let var = cell.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        out.push(SummaryRow { scheme: r.scheme.clone(), param: r.param.clone(), value: r.value, mean, stderr, n });
        cell.clear();
    };
    for (idx, r) in rows.iter().enumerate() {
        if r.sum_rate.is_finite() {
            cell.push(r.sum_rate);
        }
        let last = rows.get(idx + 1).map_or(true, |next| next.scheme != r.scheme || next.value != r.value);
        if last {
            flush(&mut out, &mut cell, r);
        }
    }
    out
}

fn trace_path(dir: &Path, cfg: &ExperimentConfig, run: &RunRecord) -> std::path::PathBuf {
    let name = format!("{}_{}.csv", run.scheme.name(), run.seed);
    match (&cfg.sweep, run.value) {
        (Some(sw), Some(v)) => dir.join(io::TRACES_DIR).join(format!("{}_{v}", sw.param)).join(name),
        _ => dir.join(io::TRACES_DIR).join(name),
    }
}

/// Writes `results.csv`, `summary.csv`, `timings.csv` and the traces.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, runs: &[Run]) -> anyhow::Result<Vec<SummaryRow>> {
    std::fs::create_dir_all(dir.join(io::TRACES_DIR)).with_context(|| format!("creating {}", dir.display()))?;
    let rows = result_rows(cfg, runs);
    io::write_rows(&dir.join(io::RESULTS_FILE), &rows)?;
    let summary = summarize(&rows);
    io::write_rows(&dir.join(io::SUMMARY_FILE), &summary)?;
    let timings: Vec<TimingRow> = runs
        .iter()
        .map(|r| TimingRow {
            scheme: r.record.scheme.name().to_string(),
            value: r.record.value,
            seed: r.record.seed,
            wall_time_s: r.record.wall_time_s,
        })
        .collect();
    io::write_rows(&dir.join(io::TIMINGS_FILE), &timings)?;
    for run in runs {
        let path = trace_path(dir, cfg, &run.record);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let traces: Vec<_> = run.outcome.iter().flat_map(|o| o.parts.iter().map(|p| &p.trace)).collect();
        io::write_trace(&path, &io::trace_rows(&traces))?;
    }
    Ok(summary)
}

/// Runs the configured experiment and writes its files to `dir`.
pub fn run_experiment<S: ConicSolver + Sync + ?Sized>(
    solver: &S,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> anyhow::Result<Vec<Run>> {
    let runs = run_all(solver, cfg)?;
    write_outputs(dir, cfg, &runs)?;
    Ok(runs)
}

/// Leakage samples of every PU of every part of a finished run.
fn leakage_samples(out: &SchemeOutcome, samples: usize, seed: u64) -> Vec<f64> {
    let mut all = Vec::new();
    for part in &out.parts {
        for i in 0..part.scenario.i_pu() {
            all.extend(sampled_leakages(&part.scenario, &part.alloc, i, samples, seed));
        }
    }
    all
}

/// Outage percentage per scheme and target: the share of (seed, PU,
/// sampled true channel) triples whose leakage exceeds the target.
pub fn outage_rows(runs: &[Run], targets_dbm: &[f64], samples: usize) -> Vec<OutageRow> {
    let mut schemes: Vec<Scheme> = runs.iter().map(|r| r.record.scheme).collect();
    schemes.dedup();
    let mut out = Vec::new();
    for sch in schemes {
        let leaks: Vec<f64> = runs
            .par_iter()
            .filter(|r| r.record.scheme == sch)
            .filter_map(|r| r.outcome.as_ref().map(|o| leakage_samples(o, samples, r.record.seed)))
            .flatten()
            .collect();
        for &t in targets_dbm {
            let limit = dbm_to_watts(t);
            let over = leaks.iter().filter(|&&x| x > limit).count();
            let pct = if leaks.is_empty() { f64::NAN } else { 100.0 * over as f64 / leaks.len() as f64 };
            out.push(OutageRow { scheme: sch.name().to_string(), p_tar_dbm: t, outage_pct: pct });
        }
    }
    out
}

/// Runs the configured schemes without a sweep and writes `outage.csv`
/// next to the usual result files.
pub fn outage_experiment<S: ConicSolver + Sync + ?Sized>(
    solver: &S,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> anyhow::Result<(Vec<Run>, Vec<OutageRow>)> {
    let mut base = cfg.clone();
    base.sweep = None;
    let runs = run_all(solver, &base)?;
    write_outputs(dir, &base, &runs)?;
    let rows = pool()?.install(|| outage_rows(&runs, &cfg.outage.targets_dbm, cfg.outage.samples));
    io::write_rows(&dir.join(io::OUTAGE_FILE), &rows)?;
    Ok((runs, rows))
}

/// Scenario of a run, regenerated from its seed.
pub fn scenario_for(cfg: &ExperimentConfig, value: Option<f64>, seed: u64) -> anyhow::Result<Scenario> {
    let c = cfg.at(value)?;
    Ok(generate_scenario(&c.scenario, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, value: Option<f64>, seed: u64, rate: f64) -> ResultRow {
        ResultRow {
            scheme: scheme.into(),
            param: "m".into(),
            value,
            seed,
            sum_rate: rate,
            dl_rates: String::new(),
            ul_rates: String::new(),
            outer_iters: 1,
            w_rank_ratio: 0.0,
            max_leakage: 0.0,
            leakage_ratio: 0.0,
            status: "ok".into(),
        }
    }

    #[test]
    fn summary_cells_follow_rows() {
        let rows = vec![
            row("proposed", Some(2.0), 0, 1.0),
            row("proposed", Some(2.0), 1, 3.0),
            row("proposed", Some(4.0), 0, 5.0),
            row("baseline1", Some(2.0), 0, f64::NAN),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].mean, s[0].n), (2.0, 2));
        assert!((s[0].stderr - 1.0).abs() < 1e-15);
        assert_eq!((s[1].mean, s[1].n, s[1].stderr), (5.0, 1, 0.0));
        assert_eq!(s[2].n, 0);
    }

    #[test]
    fn jobs_are_canonical() {
        let mut cfg = ExperimentConfig::default();
        cfg.schemes = vec![Scheme::Baseline2, Scheme::Proposed];
        cfg.seeds = vec![3, 1];
        cfg.sweep = Some(crate::config::Sweep { param: "m".into(), values: vec![4.0, 2.0] });
        let j = jobs(&cfg);
        assert_eq!(j.len(), 8);
        assert_eq!(j[0], (Scheme::Proposed, Some(2.0), 1));
        assert_eq!(j[1], (Scheme::Proposed, Some(2.0), 3));
        assert_eq!(j[2], (Scheme::Proposed, Some(4.0), 1));
        assert_eq!(j[4].0, Scheme::Baseline2);
    }
}
