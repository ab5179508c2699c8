use std::fs;
use std::path::{Path, PathBuf};

use fdcr::cli::{run, EXIT_CONFIG, EXIT_DEGRADED, EXIT_OK};
use fdcr::io::{read_rows, ResultRow, SummaryRow, OUTAGE_FILE, RESULTS_FILE, SUMMARY_FILE, TIMINGS_FILE, TRACES_DIR};

const SMALL: &str = r#"
[scenario]
n_t = 4
m = 4
k_dl = 2
j_ul = 2
i_pu = 2
p_max_dl_dbm = 30.0
p_tol_dbm = -90.0

[algo]
starts = 1

[experiment]
schemes = ["proposed", "non_robust"]
seeds = [0, 1]
verify_samples = 500

[outage]
targets_dbm = [-92.0, -90.0, -88.0]
samples = 500
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(&path, body).unwrap();
    path
}

fn fdcr(args: &[&str]) -> i32 {
    run(std::iter::once("fdcr").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_exits_with_config_error() {
    assert_eq!(fdcr(&["run", "--config", "/nonexistent/fdcr.toml"]), EXIT_CONFIG);
}

#[test]
fn unknown_flag_exits_with_config_error() {
    assert_eq!(fdcr(&["run", "--bogus"]), EXIT_CONFIG);
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(fdcr(&["--help"]), EXIT_OK);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nn_antennas = 4\n");
    assert_eq!(fdcr(&["run", "--config", path_str(&cfg)]), EXIT_CONFIG);
}

#[test]
fn bad_sweep_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(fdcr(&["sweep", "--config", path_str(&cfg), "--param", "m", "--values", "2,x"]), EXIT_CONFIG);
    assert_eq!(fdcr(&["sweep", "--config", path_str(&cfg), "--param", "nope", "--values", "2"]), EXIT_CONFIG);
}

#[test]
fn run_writes_every_output_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(fdcr(&["run", "--config", path_str(&cfg), "--out", path_str(&a)]), EXIT_OK);
    assert_eq!(fdcr(&["run", "--config", path_str(&cfg), "--out", path_str(&b)]), EXIT_OK);
    for f in [RESULTS_FILE, SUMMARY_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }
    assert!(a.join(TIMINGS_FILE).exists());
    for scheme in ["proposed", "non_robust"] {
        for seed in [0, 1] {
            assert!(a.join(TRACES_DIR).join(format!("{scheme}_{seed}.csv")).exists());
        }
    }

    // Summary cells recomputed from the per-run rows.
    let rows: Vec<ResultRow> = read_rows(&a.join(RESULTS_FILE)).unwrap();
    let summary: Vec<SummaryRow> = read_rows(&a.join(SUMMARY_FILE)).unwrap();
    assert_eq!(rows.len(), 4);
    for cell in &summary {
        let vals: Vec<f64> =
            rows.iter().filter(|r| r.scheme == cell.scheme && r.sum_rate.is_finite()).map(|r| r.sum_rate).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_eq!(cell.n, vals.len());
        assert!((cell.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((cell.stderr - (var / n).sqrt()).abs() <= 1e-12 * mean.abs().max(1.0));
    }
}

#[test]
fn sweep_produces_one_cell_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace(r#"schemes = ["proposed", "non_robust"]"#, r#"schemes = ["proposed"]"#).replace("seeds = [0, 1]", "seeds = [0]");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("sweep");
    let code = fdcr(&["sweep", "--config", path_str(&cfg), "--param", "m", "--values", "2,4,6", "--out", path_str(&out)]);
    assert_eq!(code, EXIT_OK);
    let summary: Vec<SummaryRow> = read_rows(&out.join(SUMMARY_FILE)).unwrap();
    let values: Vec<Option<f64>> = summary.iter().map(|r| r.value).collect();
    assert_eq!(values, vec![Some(2.0), Some(4.0), Some(6.0)]);
    assert!(summary.iter().all(|r| r.param == "m" && r.n == 1));
    assert!(out.join(TRACES_DIR).join("m_4").join("proposed_0.csv").exists());
}

#[test]
fn outage_reports_every_scheme_and_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("outage");
    assert_eq!(fdcr(&["outage", "--config", path_str(&cfg), "--out", path_str(&out)]), EXIT_OK);
    let rows: Vec<fdcr::io::OutageRow> = read_rows(&out.join(OUTAGE_FILE)).unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r.scheme == "proposed" && r.p_tar_dbm >= -90.0) {
        assert_eq!(r.outage_pct, 0.0);
    }
}

#[test]
fn strict_mode_reports_degraded_runs() {
    let dir = tempfile::tempdir().unwrap();
    // One interior-point iteration cannot solve any subproblem.
    let body = SMALL.replace("starts = 1", "starts = 1\nsolver.max_iters = 1").replace("seeds = [0, 1]", "seeds = [0]");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("strict");
    assert_eq!(fdcr(&["run", "--config", path_str(&cfg), "--out", path_str(&out)]), EXIT_OK);
    assert_eq!(fdcr(&["--strict", "run", "--config", path_str(&cfg), "--out", path_str(&out)]), EXIT_DEGRADED);
}

#[test]
fn verify_passes_on_a_desk_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(fdcr(&["verify", "--config", path_str(&cfg), "--seed", "0"]), EXIT_OK);
}
