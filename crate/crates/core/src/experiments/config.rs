//! TOML experiment configuration.
//!
//! ```toml
//! [environment]
//! c = 0.2
//! beta = 3.0
//! dims = [64]
//! kernel = "nearest_neighbor"
//!
//! [measure]
//! v = 0.15
//! g = "constant"
//!
//! [dynamics]
//! t_end = 500.0
//!
//! [experiment]
//! seed = 7
//! replicas = 32
//! ```
//!
//! Every key has a default, so an empty file is a valid (small) run.
//! Seeds not given explicitly are derived from `experiment.seed`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::environment::{sample_environment, EnvDistribution, JumpKernel, RateField, Torus};
use crate::error::{Error, Result};
use crate::measures::{mean_density, Density, RateFunction, DEFAULT_TOL};
use crate::rng::{derive_seed, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Oracle,
    Stationarity,
    Domination,
    Couple,
    Walkers,
    Escape,
    Lemma2,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Oracle,
        Experiment::Stationarity,
        Experiment::Domination,
        Experiment::Couple,
        Experiment::Walkers,
        Experiment::Escape,
        Experiment::Lemma2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Oracle => "oracle",
            Experiment::Stationarity => "stationarity",
            Experiment::Domination => "domination",
            Experiment::Couple => "couple",
            Experiment::Walkers => "walkers",
            Experiment::Escape => "escape",
            Experiment::Lemma2 => "lemma2",
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub measure: MeasureSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub c: f64,
    pub beta: f64,
    pub dims: Vec<usize>,
    pub seed: Option<u64>,
    /// `nearest_neighbor`, `totally_asymmetric` or `asymmetric`.
    pub kernel: String,
    /// Right-jump probability for the one-dimensional `asymmetric` kernel.
    pub kernel_right: f64,
    /// Explicit per-site rates; overrides sampling.
    pub rates: Option<Vec<f64>>,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            c: 0.2,
            beta: 3.0,
            dims: vec![64],
            seed: None,
            kernel: "nearest_neighbor".into(),
            kernel_right: 0.5,
            rates: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum GSpec {
    Name(String),
    Table(Vec<f64>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    pub v: Option<f64>,
    /// Alternative to `v`: the environment-averaged density to aim for.
    pub target_density: Option<f64>,
    /// `constant`, `k_over_k1`, or a table `[g(1), g(2), ...]` constant past its end.
    pub g: GSpec,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self { v: None, target_density: None, g: GSpec::Name("constant".into()) }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub t_end: f64,
    /// Defaults to `t_end / 100`.
    pub sample_every: Option<f64>,
    pub alpha: f64,
    pub seed: Option<u64>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { t_end: 100.0, sample_every: None, alpha: 0.2, seed: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Optional guard: when present it must match the subcommand.
    pub tag: Option<Experiment>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub replicas: Option<u64>,
    /// Fraction of replicas (or sites) that must pass.
    pub pass_fraction: f64,

    // oracle
    pub particles: u32,
    pub tolerance: f64,

    // couple / lemma2
    pub probes: Option<Vec<usize>>,
    pub n_probes: usize,
    pub probe: Option<usize>,
    pub trailing_fraction: f64,

    // domination
    pub min_events: u64,

    // walkers
    pub walk_alpha: Option<f64>,
    pub theta: Option<f64>,
    pub max_steps: Option<u64>,
    pub start_norm: u64,
    pub range_n: Vec<usize>,
    pub shell_cutoff: usize,
    pub initial_occupancy: u64,
    pub confidence: f64,
    pub tail_bound_max: f64,
    pub censor_max: f64,

    // escape
    pub initial_multiple: f64,
    pub fast_margin: f64,
    pub density_tolerance: f64,
    pub slow_quantile: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            tag: None,
            seed: 1,
            out: None,
            replicas: None,
            pass_fraction: 0.95,
            particles: 4,
            tolerance: 1e-10,
            probes: None,
            n_probes: 4,
            probe: None,
            trailing_fraction: 0.1,
            min_events: 0,
            walk_alpha: None,
            theta: None,
            max_steps: None,
            start_norm: 8,
            range_n: vec![2, 4, 8, 16],
            shell_cutoff: 40,
            initial_occupancy: 2,
            confidence: 0.99,
            tail_bound_max: 1e-3,
            censor_max: 0.01,
            initial_multiple: 2.0,
            fast_margin: 0.1,
            density_tolerance: 0.2,
            slow_quantile: 0.01,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<()> {
        let e = &self.environment;
        if !(e.c > 0.0 && e.c < 1.0) || !(e.beta > 0.0) {
            return Err(Error::Config(format!("need 0 < c < 1 and beta > 0, got c = {}, beta = {}", e.c, e.beta)));
        }
        if !(self.dynamics.t_end > 0.0) {
            return Err(Error::Config("dynamics.t_end must be positive".into()));
        }
        if self.dynamics.sample_every.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Config("dynamics.sample_every must be positive".into()));
        }
        if !(self.dynamics.alpha > 0.0) {
            return Err(Error::Config("dynamics.alpha must be positive".into()));
        }
        if self.measure.v.is_some() && self.measure.target_density.is_some() {
            return Err(Error::Config("give measure.v or measure.target_density, not both".into()));
        }
        let x = &self.experiment;
        if !(x.pass_fraction > 0.0 && x.pass_fraction <= 1.0) || !(x.confidence > 0.0 && x.confidence < 1.0) {
            return Err(Error::Config("pass_fraction and confidence must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Replaces the master seed (the `--seed` override).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.experiment.seed = seed;
        self
    }

    pub fn check_tag(&self, experiment: Experiment) -> Result<()> {
        match self.experiment.tag {
            Some(tag) if tag != experiment => Err(Error::Config(format!(
                "config is tagged {} but the subcommand is {}",
                tag.name(),
                experiment.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.experiment.seed
    }

    pub fn environment_seed(&self) -> u64 {
        self.environment.seed.unwrap_or_else(|| derive_seed(self.experiment.seed, tag::ENVIRONMENT, 0))
    }

    /// Seed from which the per-replica dynamics, initial-state and label
    /// streams are derived.
    pub fn dynamics_seed(&self) -> u64 {
        self.dynamics.seed.unwrap_or_else(|| derive_seed(self.experiment.seed, tag::DYNAMICS, 0))
    }

    pub fn distribution(&self) -> Result<EnvDistribution<f64>> {
        EnvDistribution::power_law(self.environment.c, self.environment.beta)
    }

    pub fn kernel(&self) -> Result<JumpKernel<f64>> {
        let dim = self.environment.dims.len();
        match self.environment.kernel.as_str() {
            "nearest_neighbor" => JumpKernel::nearest_neighbor(dim),
            "totally_asymmetric" if dim == 1 => JumpKernel::one_d(1.0),
            "asymmetric" if dim == 1 => JumpKernel::one_d(self.environment.kernel_right),
            other => Err(Error::Config(format!("unknown kernel {other:?} for dimension {dim}"))),
        }
    }

    pub fn rate_function(&self) -> Result<RateFunction<f64>> {
        match &self.measure.g {
            GSpec::Name(name) => match name.as_str() {
                "constant" | "geometric" => Ok(RateFunction::Geometric),
                "k_over_k1" => Ok(RateFunction::KOverK1),
                other => Err(Error::Config(format!("unknown rate function {other:?}"))),
            },
            GSpec::Table(values) => RateFunction::table(values.clone()),
        }
    }

    /// The environment: explicit `rates` on a cycle, or sampled on the torus.
    pub fn field(&self) -> Result<RateField<f64>> {
        let dist = self.distribution()?;
        match &self.environment.rates {
            Some(rates) => RateField::from_rates(Torus::new(&[rates.len()])?, rates.clone(), dist),
            None => sample_environment(&dist, &self.environment.dims, self.environment_seed()),
        }
    }

    pub fn sample_every(&self) -> f64 {
        self.dynamics.sample_every.unwrap_or(self.dynamics.t_end / 100.0)
    }

    /// Fugacity `v`: given directly, solved from `target_density`, or `c`.
    pub fn fugacity(&self) -> Result<f64> {
        let c = self.environment.c;
        if let Some(v) = self.measure.v {
            if !(v > 0.0 && v <= c) {
                return Err(Error::Config(format!("measure.v = {v} must lie in (0, c = {c}]")));
            }
            return Ok(v);
        }
        let Some(target) = self.measure.target_density else {
            return Ok(c);
        };
        let dist = self.distribution()?;
        let g = self.rate_function()?;
        let rho = |v: f64| mean_density(v, &dist, &g, DEFAULT_TOL);
        if let Density::Finite(max) = rho(c)? {
            if target > max {
                return Err(Error::Config(format!("target_density {target} exceeds the critical density {max}")));
            }
        }
        let (mut lo, mut hi) = (0.0, c);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            match rho(mid)? {
                Density::Finite(r) if r < target => lo = mid,
                _ => hi = mid,
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
