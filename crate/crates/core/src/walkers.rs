//! Discrete-time kernel random walks on `Z^d`, absorbed at slow sites of a
//! lazily evaluated environment.
//!
//! A walk's path depends only on its own RNG (one kernel draw per step),
//! never on the environment, so walks sharing a seed under different
//! truncation levels follow the same skeleton.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::environment::{theta, EnvDistribution, JumpKernel, LazyEnvironment};
use crate::error::{Error, Result};
use crate::rng::{self, tag, SimRng};
use crate::scalar::Scalar;
use crate::stats::Proportion;

#[derive(Clone, Debug, PartialEq)]
pub struct AbsorptionOutcome {
    pub start: Vec<i64>,
    pub index: u32,
    /// Steps until the walk first stands on a slow site; equals `max_steps`
    /// when censored.
    pub tau: u64,
    pub censored: bool,
    /// Number of `n <= tau` with the walk at the origin.
    pub origin_visits: u64,
    /// First and last such `n`.
    pub first_origin_visit: Option<u64>,
    pub last_origin_visit: Option<u64>,
    /// Distinct sites visited up to and including step `tau`.
    pub distinct_sites: usize,
    /// Distinct fast sites visited before absorption.
    pub fast_sites: usize,
}

impl AbsorptionOutcome {
    /// The walk stood on the origin at some step strictly before `tau`.
    pub fn hit_origin_before_absorption(&self) -> bool {
        self.first_origin_visit.is_some_and(|n| n < self.tau)
    }
}

/// Runs one walk from `start` until it stands on a slow site or `max_steps`
/// steps have elapsed.
pub fn simulate_walk<T: Scalar>(
    start: &[i64],
    kernel: &JumpKernel<T>,
    env: &LazyEnvironment<T>,
    alpha: T,
    max_steps: u64,
    rng: &mut SimRng,
) -> AbsorptionOutcome {
    assert!(max_steps > 0, "max_steps must be positive");
    assert_eq!(start.len(), kernel.dim(), "start dimension differs from kernel dimension");
    let mut pos = start.to_vec();
    let mut seen: HashMap<Vec<i64>, bool> = HashMap::new();
    let mut fast_sites = 0usize;
    let mut visits = 0u64;
    let mut first = None;
    let mut last = None;
    let mut n = 0u64;
    loop {
        let slow = match seen.get(pos.as_slice()) {
            Some(&slow) => slow,
            None => {
                let slow = env.is_slow(&pos, alpha);
                if !slow {
                    fast_sites += 1;
                }
                seen.insert(pos.clone(), slow);
                slow
            }
        };
        if pos.iter().all(|&c| c == 0) {
            visits += 1;
            first.get_or_insert(n);
            last = Some(n);
        }
        if slow || n == max_steps {
            return AbsorptionOutcome {
                start: start.to_vec(),
                index: 0,
                tau: n,
                censored: !slow,
                origin_visits: visits,
                first_origin_visit: first,
                last_origin_visit: last,
                distinct_sites: seen.len(),
                fast_sites,
            };
        }
        let step = kernel.displacement(kernel.select(rng.gen::<f64>()));
        for (p, s) in pos.iter_mut().zip(step) {
            *p += s;
        }
        n += 1;
    }
}

/// Default censoring cutoff `ceil(200 / theta)`.
pub fn default_max_steps(theta: f64) -> u64 {
    (200.0 / theta).ceil() as u64
}

/// Independent `(environment, walk)` pairs: replica `r` draws a fresh
/// environment and a fresh walk, all started from `start`.
pub fn independent_walks<T: Scalar>(
    start: &[i64],
    kernel: &JumpKernel<T>,
    dist: &EnvDistribution<T>,
    alpha: T,
    replicas: u64,
    max_steps: u64,
    master_seed: u64,
) -> Vec<AbsorptionOutcome> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = LazyEnvironment::new(*dist, rng::derive_seed(master_seed, tag::ENVIRONMENT, r));
            let mut walk_rng = rng::stream(master_seed, tag::WALKS, r);
            let mut out = simulate_walk(start, kernel, &env, alpha, max_steps, &mut walk_rng);
            out.index = r as u32;
            out
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct HitEstimate {
    pub start_norm: u64,
    pub hits: Proportion,
    pub censored: u64,
    /// `(1 - theta)^(k / M)`.
    pub bound: f64,
    pub walks: Vec<AbsorptionOutcome>,
}

impl HitEstimate {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.hits.trials as f64
    }
}

/// Probability that a walk from `(k, 0, ..., 0)` reaches the origin strictly
/// before absorption, over independent environment and walk draws.
pub fn hit_origin_probability<T: Scalar>(
    k: u64,
    kernel: &JumpKernel<T>,
    dist: &EnvDistribution<T>,
    alpha: T,
    replicas: u64,
    max_steps: u64,
    master_seed: u64,
) -> Result<HitEstimate> {
    if k == 0 {
        return Err(Error::Config("start norm must be at least 1".into()));
    }
    let th = theta(dist, alpha)?.as_f64();
    let mut start = vec![0i64; kernel.dim()];
    start[0] = k as i64;
    let walks = independent_walks(&start, kernel, dist, alpha, replicas, max_steps, master_seed);
    let hits = walks.iter().filter(|w| w.hit_origin_before_absorption()).count() as u64;
    let censored = walks.iter().filter(|w| w.censored).count() as u64;
    Ok(HitEstimate {
        start_norm: k,
        hits: Proportion::new(hits, replicas),
        censored,
        bound: (1.0 - th).powf(k as f64 / kernel.range() as f64),
        walks,
    })
}

/// Walks that visited at least `n` distinct fast sites before absorption.
pub fn range_tail(walks: &[AbsorptionOutcome], n: usize) -> Proportion {
    Proportion::new(walks.iter().filter(|w| w.fast_sites >= n).count() as u64, walks.len() as u64)
}

/// Initial occupancies on `Z^d`, described site by site and shell by shell.
pub trait LatticeProfile: Sync {
    fn occupancy(&self, coords: &[i64]) -> u64;

    /// `ln sum_{|x| = k} eta(x)` (sup-norm shells); `-inf` for an empty shell.
    fn log_shell_mass(&self, dim: usize, k: usize) -> f64 {
        let mut total = 0.0;
        for_each_in_shell(dim, k as i64, |x| total += self.occupancy(x) as f64);
        total.ln()
    }
}

/// `eta(x) = m` everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantProfile(pub u64);

impl LatticeProfile for ConstantProfile {
    fn occupancy(&self, _coords: &[i64]) -> u64 {
        self.0
    }

    fn log_shell_mass(&self, dim: usize, k: usize) -> f64 {
        (self.0 as f64 * shell_size(dim, k)).ln()
    }
}

/// Number of sites of sup-norm exactly `k` in `Z^d`.
pub fn shell_size(dim: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let outer = (2 * k + 1) as f64;
    let inner = (2 * k - 1) as f64;
    outer.powi(dim as i32) - inner.powi(dim as i32)
}

/// Visits every site of sup-norm exactly `k`.
pub fn for_each_in_shell(dim: usize, k: i64, mut f: impl FnMut(&[i64])) {
    let mut x = vec![-k; dim];
    loop {
        if x.iter().any(|c| c.abs() == k) || k == 0 {
            f(&x);
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                return;
            }
            if x[axis] < k {
                x[axis] += 1;
                break;
            }
            x[axis] = -k;
            axis += 1;
        }
    }
}

/// Sums `sum_{k >= start} exp(log_mass(k) + k ln q)` in the log domain.
/// Returns `None` when the terms do not settle into geometric decay.
pub fn shell_series(log_q: f64, start: usize, mut log_mass: impl FnMut(usize) -> f64) -> Option<f64> {
    const MAX_SHELLS: usize = 2_000_000;
    const WINDOW: usize = 64;
    let mut total = 0.0f64;
    let mut prev = f64::NEG_INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut since_reset = 0usize;
    for k in start..start + MAX_SHELLS {
        let log_term = log_mass(k) + k as f64 * log_q;
        if log_term > 700.0 {
            return None;
        }
        total += log_term.exp();
        if log_term.is_finite() && prev.is_finite() {
            max_ratio = max_ratio.max(log_term - prev);
        }
        if log_term.is_finite() {
            prev = log_term;
        }
        since_reset += 1;
        if since_reset == WINDOW {
            // the window's worst log-ratio bounds the remaining tail geometrically
            if max_ratio < 0.0 {
                let r = max_ratio.exp();
                let tail = prev.exp() * r / (1.0 - r);
                if tail <= 1e-13 * total.max(f64::MIN_POSITIVE) {
                    return Some(total + tail);
                }
            }
            since_reset = 0;
            max_ratio = f64::NEG_INFINITY;
        }
    }
    None
}

#[derive(Clone, Debug)]
pub struct LastVisitReport {
    pub walks: Vec<AbsorptionOutcome>,
    /// Largest origin-visit step over all walks; `None` when no walk visits
    /// (the `-inf` sentinel, including the empty configuration).
    pub last_visit: Option<u64>,
    /// Bound on the expected number of ignored walks (beyond the cutoff)
    /// that ever reach the origin before absorption.
    pub tail_bound: f64,
    pub censored: usize,
}

/// Launches the `eta0(x)` walks from every site with `|x| <= shell_cutoff`
/// in one fixed environment and reports the last origin visit.
#[allow(clippy::too_many_arguments)]
pub fn last_origin_visit<T: Scalar, P: LatticeProfile>(
    eta0: &P,
    kernel: &JumpKernel<T>,
    env: &LazyEnvironment<T>,
    alpha: T,
    shell_cutoff: usize,
    max_steps: u64,
    master_seed: u64,
) -> Result<LastVisitReport> {
    let dim = kernel.dim();
    let th = theta(&env.dist, alpha)?.as_f64();
    let log_q = (1.0 - th).ln() / kernel.range() as f64;
    let tail_bound = if th >= 1.0 {
        0.0
    } else {
        shell_series(log_q, shell_cutoff + 1, |k| eta0.log_shell_mass(dim, k)).ok_or_else(|| {
            Error::Input("weighted shell series does not converge: initial occupancy grows too fast".into())
        })?
    };
    let mut labels = Vec::new();
    for k in 0..=shell_cutoff as i64 {
        for_each_in_shell(dim, k, |x| {
            for i in 1..=eta0.occupancy(x) {
                labels.push((x.to_vec(), i as u32));
            }
        });
    }
    let walks: Vec<AbsorptionOutcome> = labels
        .into_par_iter()
        .map(|(x, i)| {
            let mut walk_rng = rng::stream(master_seed, tag::WALKS, rng::site_key(i as u64, &x));
            let mut out = simulate_walk(&x, kernel, env, alpha, max_steps, &mut walk_rng);
            out.index = i;
            out
        })
        .collect();
    Ok(LastVisitReport {
        last_visit: walks.iter().filter_map(|w| w.last_origin_visit).max(),
        censored: walks.iter().filter(|w| w.censored).count(),
        walks,
        tail_bound,
    })
}

/// CSV `label_x,label_i,tau,censored,origin_visits,distinct_sites`; multi-
/// dimensional labels are joined with `:`.
pub fn write_walk_report<W: Write>(mut w: W, walks: &[AbsorptionOutcome]) -> Result<()> {
    writeln!(w, "label_x,label_i,tau,censored,origin_visits,distinct_sites")?;
    for o in walks {
        let x: Vec<String> = o.start.iter().map(i64::to_string).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            x.join(":"),
            o.index,
            o.tau,
            o.censored as u8,
            o.origin_visits,
            o.distinct_sites
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn() -> JumpKernel<f64> {
        JumpKernel::nearest_neighbor(1).unwrap()
    }

    fn dist() -> EnvDistribution<f64> {
        EnvDistribution::power_law(0.2, 1.0).unwrap()
    }

    #[test]
    fn slow_start_absorbs_at_step_zero() {
        let d = dist();
        let env = LazyEnvironment::new(d, 3);
        // alpha = 1 - c makes every site slow
        let mut r = rng::stream(1, 0, 0);
        for x in [-3i64, 0, 5] {
            let o = simulate_walk(&[x], &nn(), &env, 0.8, 10, &mut r);
            assert_eq!(o.tau, 0);
            assert!(!o.censored);
            assert_eq!(o.origin_visits, u64::from(x == 0));
            assert!(!o.hit_origin_before_absorption());
        }
    }

    #[test]
    fn fast_origin_start_counts_as_hit() {
        let d = dist();
        let alpha = d.alpha_for_theta(0.25).unwrap();
        let seed = (0..)
            .find(|&s| !LazyEnvironment::new(d, s).is_slow(&[0], alpha))
            .unwrap();
        let env = LazyEnvironment::new(d, seed);
        let o = simulate_walk(&[0], &nn(), &env, alpha, 1000, &mut rng::stream(1, 0, 0));
        assert!(o.tau > 0);
        assert!(o.hit_origin_before_absorption());
    }

    #[test]
    fn nested_absorbing_sets_order_tau() {
        let d = dist();
        let (a1, a2) = (d.alpha_for_theta(0.1).unwrap(), d.alpha_for_theta(0.3).unwrap());
        for s in 0..200 {
            let env = LazyEnvironment::new(d, s);
            let o1 = simulate_walk(&[4], &nn(), &env, a1, 10_000, &mut rng::stream(s, 7, 0));
            let o2 = simulate_walk(&[4], &nn(), &env, a2, 10_000, &mut rng::stream(s, 7, 0));
            assert!(o2.tau <= o1.tau);
            assert!(o2.distinct_sites <= o1.distinct_sites);
        }
    }

    #[test]
    fn shell_enumeration_matches_count() {
        for dim in 1..=3 {
            for k in 0..5 {
                let mut n = 0;
                for_each_in_shell(dim, k, |x| {
                    assert_eq!(x.iter().map(|c| c.abs()).max().unwrap(), k);
                    n += 1;
                });
                assert_eq!(n as f64, shell_size(dim, k as usize));
            }
        }
    }

    #[test]
    fn shell_series_geometric_closed_form() {
        // sum_{k>=1} 2 * 2 * 0.75^k for constant occupancy 2 in d = 1
        let s = shell_series(0.75f64.ln(), 1, |k| ConstantProfile(2).log_shell_mass(1, k)).unwrap();
        assert!((s - 4.0 * 3.0).abs() < 1e-9, "{s}");
        assert!(shell_series(0.5, 1, |_| 0.0).is_none());
        assert!(shell_series(-1.0, 1, |k| 2.0 * k as f64).is_none());
    }

    #[test]
    fn empty_profile_has_no_visits() {
        let d = dist();
        let env = LazyEnvironment::new(d, 1);
        let r = last_origin_visit(&ConstantProfile(0), &nn(), &env, 0.1, 10, 100, 5).unwrap();
        assert!(r.walks.is_empty());
        assert_eq!(r.last_visit, None);
        assert_eq!(r.tail_bound, 0.0);
    }

    #[test]
    fn walk_report_csv_shape() {
        let d = dist();
        let env = LazyEnvironment::new(d, 1);
        let r = last_origin_visit(&ConstantProfile(1), &nn(), &env, 0.1, 2, 100, 5).unwrap();
        let mut buf = Vec::new();
        write_walk_report(&mut buf, &r.walks).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 5);
        assert!(text.starts_with("label_x,label_i,tau,censored,origin_visits,distinct_sites\n"));
    }
}
