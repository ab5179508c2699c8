//! Command-line front end. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fdcr_core::algo::RunStatus;

use crate::bench::{self, Run};
use crate::config::{parse_values, ExperimentConfig, Sweep};
use crate::verify;
use crate::ClarabelSolver;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DEGRADED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fdcr", version, about = "Robust resource allocation for IRS-assisted full-duplex cognitive radio")]
pub struct Cli {
    /// Exit with status 2 if any run ends degraded or a check fails.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured (scheme, sweep value, seed) job.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `experiment.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run with the sweep replaced by `--param` over `--values`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated list, e.g. `20,25,30`.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Outage probability of every scheme at the given targets (dBm).
    Outage {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list; defaults to `outage.targets_dbm`.
        #[arg(long)]
        targets: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite on one seed; exits with 2 if a check fails.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, i32> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

fn finish(runs: &[Run], strict: bool) -> i32 {
    let degraded = runs.iter().filter(|r| r.record.status == RunStatus::Degraded).count();
    println!("{} runs, {degraded} degraded", runs.len());
    if strict && degraded > 0 {
        EXIT_DEGRADED
    } else {
        EXIT_OK
    }
}

fn print_summary(dir: &std::path::Path) {
    match crate::io::read_rows::<crate::io::SummaryRow>(&dir.join(crate::io::SUMMARY_FILE)) {
        Ok(rows) => {
            for r in rows {
                let v = r.value.map(|v| format!(" {}={v}", r.param)).unwrap_or_default();
                println!("{:<10}{v}: {:.4} +- {:.4} (n={})", r.scheme, r.mean, r.stderr, r.n);
            }
        }
        Err(e) => eprintln!("warning: cannot read summary: {e}"),
    }
}

fn experiment(cfg: &ExperimentConfig, out: Option<PathBuf>, strict: bool) -> i32 {
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    match bench::run_experiment(&ClarabelSolver, cfg, &dir) {
        Ok(runs) => {
            print_summary(&dir);
            finish(&runs, strict)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

fn execute(cli: Cli) -> i32 {
    let solver = ClarabelSolver;
    match cli.command {
        Command::Run { config, out } => match load(&config) {
            Ok(cfg) => experiment(&cfg, out, cli.strict),
            Err(code) => code,
        },
        Command::Sweep { config, param, values, out } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let values = match parse_values(&values) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            cfg.sweep = Some(Sweep { param, values });
            if let Err(e) = cfg.validate() {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
            experiment(&cfg, out, cli.strict)
        }
        Command::Outage { config, targets, out } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(t) = targets {
                match parse_values(&t) {
                    Ok(v) => cfg.outage.targets_dbm = v,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_CONFIG;
                    }
                }
            }
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            match bench::outage_experiment(&solver, &cfg, &dir) {
                Ok((runs, rows)) => {
                    for r in rows {
                        println!("{:<10} p_tar {:>7.2} dBm: {:.3}%", r.scheme, r.p_tar_dbm, r.outage_pct);
                    }
                    finish(&runs, cli.strict)
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Verify { config, seed } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let seed = seed.unwrap_or(cfg.seeds[0]);
            match verify::run_checks(&solver, &cfg, seed) {
                Ok(checks) => {
                    let mut failed = 0;
                    for c in &checks {
                        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                        failed += usize::from(!c.passed);
                    }
                    if failed > 0 {
                        EXIT_DEGRADED
                    } else {
                        EXIT_OK
                    }
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_CONFIG
                }
            }
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
