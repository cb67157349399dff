//! Command-line entry point.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use super::{run, Experiment, ExperimentConfig};
use crate::error::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "zrp", about = "Zero-range processes in random environments")]
struct Cli {
    #[arg(value_enum)]
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `experiment.out`, then `out/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs one experiment and returns the process exit code.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let cfg = match ExperimentConfig::from_path(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let cfg = match cli.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    };
    let out = cli
        .out
        .or_else(|| cfg.experiment.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cli.experiment.name()));
    let report = match run(cli.experiment, &cfg) {
        Ok(report) => report,
        Err(e @ Error::StateCorruption(_)) => {
            eprintln!("{}: {e}", cli.experiment.name());
            return EXIT_FAIL;
        }
        Err(e) => {
            eprintln!("{}: {e}", cli.experiment.name());
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = report.write_to(&out) {
        eprintln!("cannot write {}: {e}", out.display());
        return EXIT_CONFIG;
    }
    println!("{}", report.one_line());
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
