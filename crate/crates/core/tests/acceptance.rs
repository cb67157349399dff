//! Acceptance run: evaluates every criterion on the shipped configurations
//! and prints one `ACn PASS|FAIL` line each. Exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use zrp::experiments::{run, Experiment, ExperimentConfig, Report};

struct Criterion {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn config(name: &str) -> ExperimentConfig {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn timed(experiment: Experiment, cfg: &ExperimentConfig) -> (Report, Duration) {
    let start = Instant::now();
    let report = run(experiment, cfg).unwrap_or_else(|e| panic!("{}: {e}", experiment.name()));
    (report, start.elapsed())
}

fn checks(report: &Report, names: &[&str]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in names {
        match report.get_check(name) {
            Some(c) => {
                pass &= c.pass;
                parts.push(format!("[{}] {}", c.name, c.detail));
            }
            None => {
                pass = false;
                parts.push(format!("[{name}] missing"));
            }
        }
    }
    (pass, parts.join("; "))
}

fn csv_files(report: &Report) -> Vec<(String, Vec<u8>)> {
    report.files.iter().filter(|(n, _)| n.ends_with(".csv")).cloned().collect()
}

fn main() {
    let mut results: Vec<Criterion> = Vec::new();
    let mut reports: Vec<(Experiment, ExperimentConfig, Report)> = Vec::new();
    let mut record = |id, pass, detail: String| {
        println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
        results.push(Criterion { id, pass, detail });
    };

    let cfg = config("oracle");
    let (rep, took) = timed(Experiment::Oracle, &cfg);
    let (ok, detail) = checks(&rep, &["tv_below_tolerance"]);
    let fast = took < Duration::from_secs(1);
    record("AC1", ok && fast, format!("{detail}; runtime {:.3}s (limit 1s)", took.as_secs_f64()));
    reports.push((Experiment::Oracle, cfg, rep));

    let cfg = config("stationarity");
    let (rep, took) = timed(Experiment::Stationarity, &cfg);
    let (ok, detail) = checks(&rep, &["site_means_within_3se"]);
    let fast = took < Duration::from_secs(60);
    record("AC2", ok && fast, format!("{detail}; runtime {:.1}s (limit 60s)", took.as_secs_f64()));
    let (ok, detail) = checks(&rep, &["exit_rate_equals_v", "firing_rate_equals_v"]);
    record("AC3", ok, detail);
    reports.push((Experiment::Stationarity, cfg, rep));

    let cfg = config("domination");
    let (rep, _) = timed(Experiment::Domination, &cfg);
    let (ok, detail) = checks(&rep, &["no_order_violations", "event_budget"]);
    record("AC4", ok, detail);
    reports.push((Experiment::Domination, cfg, rep));

    let cfg = config("walkers");
    let (rep, _) = timed(Experiment::Walkers, &cfg);
    let (ok, detail) = checks(&rep, &["hit_origin_bound", "censoring"]);
    record("AC5", ok, detail);
    let names: Vec<String> = cfg.experiment.range_n.iter().map(|n| format!("range_tail_{n}")).collect();
    let (ok, detail) = checks(&rep, &names.iter().map(String::as_str).collect::<Vec<_>>());
    record("AC6", ok, detail);
    reports.push((Experiment::Walkers, cfg, rep));

    let cfg = config("couple");
    let (rep, _) = timed(Experiment::Couple, &cfg);
    let (ok, detail) = checks(&rep, &["probes_converge", "ledger_consistent"]);
    record("AC7", ok, detail);
    reports.push((Experiment::Couple, cfg, rep));

    let cfg = config("lemma2");
    let (rep, _) = timed(Experiment::Lemma2, &cfg);
    let (ok, detail) = checks(&rep, &["emptying_recurs"]);
    record("AC8", ok, detail);
    reports.push((Experiment::Lemma2, cfg, rep));

    let cfg = config("escape");
    let (rep, took) = timed(Experiment::Escape, &cfg);
    let (ok, detail) = checks(
        &rep,
        &["bulk_density_decreases", "bulk_density_near_critical", "condensate_at_slow_site", "tagged_marginal_converges"],
    );
    let fast = took < Duration::from_secs(600);
    record("AC9", ok && fast, format!("{detail}; runtime {:.0}s (target 600s)", took.as_secs_f64()));

    // Determinism: every experiment again on the same configuration. The
    // escape rerun uses a shortened horizon, run twice.
    let mut mismatched = Vec::new();
    let mut compared = 0usize;
    for (experiment, cfg, first) in &reports {
        let (again, _) = timed(*experiment, cfg);
        compared += first.files.len();
        if csv_files(first) != csv_files(&again) {
            mismatched.push(experiment.name());
        }
    }
    let mut short = cfg.clone();
    short.dynamics.t_end = 20_000.0;
    short.dynamics.sample_every = Some(2_000.0);
    let (a, _) = timed(Experiment::Escape, &short);
    let (b, _) = timed(Experiment::Escape, &short);
    compared += a.files.len();
    if csv_files(&a) != csv_files(&b) {
        mismatched.push("escape");
    }
    record(
        "AC10",
        mismatched.is_empty(),
        format!("{compared} files compared across {} experiments; mismatched: {mismatched:?}", reports.len() + 1),
    );

    let failed: Vec<&str> = results.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    println!("{}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        for c in results.iter().filter(|c| !c.pass) {
            eprintln!("{} failed: {}", c.id, c.detail);
        }
        std::process::exit(1);
    }
}
