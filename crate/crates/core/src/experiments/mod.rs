//! Experiment drivers, configuration and reporting.
//!
//! Each experiment returns a [`Report`]: named pass/fail checks, free-form
//! notes, and the CSV files it produced, held in memory until
//! [`Report::write_to`] puts them on disk next to `summary.txt`.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod oracle;
mod runs;

use std::fmt::Display;
use std::path::Path;

pub use config::{Experiment, ExperimentConfig};
pub use runs::spread_fast_sites;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub experiment: Experiment,
    pub checks: Vec<Check>,
    pub notes: Vec<(String, String)>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn new(experiment: Experiment) -> Self {
        Self { experiment, checks: Vec::new(), notes: Vec::new(), files: Vec::new() }
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    pub fn note(&mut self, key: &str, value: impl Display) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn file(&mut self, name: &str, contents: Vec<u8>) {
        self.files.push((name.into(), contents));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn get_file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    /// `summary.txt`: notes as `key = value`, then one `PASS`/`FAIL` line per check.
    pub fn summary(&self) -> String {
        let mut out = format!("experiment = {}\n", self.experiment.name());
        for (k, v) in &self.notes {
            out += &format!("{k} = {v}\n");
        }
        for c in &self.checks {
            out += &format!("{} {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        out
    }

    pub fn one_line(&self) -> String {
        let passed = self.checks.iter().filter(|c| c.pass).count();
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let mut line = format!(
            "{}: {} ({passed}/{} checks)",
            self.experiment.name(),
            if failed.is_empty() { "PASS" } else { "FAIL" },
            self.checks.len()
        );
        if let Some((k, v)) = self.notes.iter().find(|(k, _)| k == "violations" || k == "tv") {
            line += &format!(" {k}={v}");
        }
        if !failed.is_empty() {
            line += &format!(" failed: {}", failed.join(", "));
        }
        line
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check_tag(experiment)?;
    match experiment {
        Experiment::Oracle => runs::oracle(cfg),
        Experiment::Stationarity => runs::stationarity(cfg),
        Experiment::Domination => runs::domination(cfg),
        Experiment::Couple => runs::couple(cfg),
        Experiment::Walkers => runs::walkers(cfg),
        Experiment::Escape => runs::escape(cfg),
        Experiment::Lemma2 => runs::lemma2(cfg),
    }
}
