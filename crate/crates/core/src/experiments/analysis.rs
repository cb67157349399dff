//! Finite-volume estimators: windowed densities, shell-series growth checks
//! and occupancy histograms.

use crate::dynamics::Configuration;
use crate::error::{Error, Result};
use crate::walkers::shell_series;

/// Windowed mean occupancy around site 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityEstimate {
    pub radius: usize,
    pub value: f64,
    /// Sites in the window holding `inf`, left out of the mean.
    pub excluded_infinite: usize,
}

/// `(2n + 1)^{-d} sum_{|x| <= n} eta(x)` over the finite sites of the window.
pub fn empirical_density(config: &Configuration, radius: usize) -> Result<DensityEstimate> {
    let torus = config.torus();
    if torus.dims().iter().any(|&l| 2 * radius + 1 > l) {
        return Err(Error::Config(format!("window radius {radius} does not fit in {:?}", torus.dims())));
    }
    let dim = torus.dim();
    let r = radius as i64;
    let mut offset = vec![-r; dim];
    let (mut sum, mut count, mut excluded) = (0u128, 0u64, 0usize);
    loop {
        match config.get(torus.index(&offset)).count() {
            Some(k) => {
                sum += k as u128;
                count += 1;
            }
            None => excluded += 1,
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                let value = if count == 0 { f64::NAN } else { sum as f64 / count as f64 };
                return Ok(DensityEstimate { radius, value, excluded_infinite: excluded });
            }
            if offset[axis] < r {
                offset[axis] += 1;
                break;
            }
            offset[axis] = -r;
            axis += 1;
        }
    }
}

/// Densities over a doubling grid of radii, with the min/max over the upper
/// half of the grid as finite stand-ins for the lower and upper asymptotic
/// densities.
#[derive(Clone, Debug)]
pub struct DensityProfile {
    pub estimates: Vec<DensityEstimate>,
    pub lower: f64,
    pub upper: f64,
}

pub fn density_profile(config: &Configuration) -> Result<DensityProfile> {
    let max_radius = (config.torus().dims().iter().min().copied().unwrap_or(1) - 1) / 2;
    let mut radii = vec![0usize];
    let mut r = 1;
    while r <= max_radius {
        radii.push(r);
        r *= 2;
    }
    if *radii.last().unwrap() != max_radius {
        radii.push(max_radius);
    }
    let estimates = radii.iter().map(|&r| empirical_density(config, r)).collect::<Result<Vec<_>>>()?;
    let top = &estimates[estimates.len() / 2..];
    let lower = top.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    let upper = top.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
    Ok(DensityProfile { estimates, lower, upper })
}

/// Outcome of the weighted shell-series test for one decay rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthCheck {
    pub beta: f64,
    /// `sum_n e^{-beta n} |shell n mass|`, or `None` when it diverges.
    pub series: Option<f64>,
}

/// Checks `sum_n e^{-beta n} sum_{|x| = n} eta(x) < inf` for each `beta`,
/// given the logarithm of the shell masses.
pub fn growth_condition_check(log_shell_mass: impl Fn(usize) -> f64, betas: &[f64]) -> (bool, Vec<GrowthCheck>) {
    let checks: Vec<GrowthCheck> = betas
        .iter()
        .map(|&beta| GrowthCheck { beta, series: shell_series(-beta, 0, &log_shell_mass) })
        .collect();
    (checks.iter().all(|c| c.series.is_some()), checks)
}

/// Normalized histogram of occupancy samples.
pub fn histogram(samples: impl IntoIterator<Item = u64>) -> Vec<f64> {
    let mut counts: Vec<u64> = Vec::new();
    let mut n = 0u64;
    for k in samples {
        let k = k as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
        n += 1;
    }
    counts.into_iter().map(|c| c as f64 / n.max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Torus;
    use crate::Occupancy;

    #[test]
    fn constant_and_empty_configurations() {
        let t = Torus::new(&[21]).unwrap();
        let empty = Configuration::empty(t.clone());
        assert_eq!(empirical_density(&empty, 3).unwrap().value, 0.0);
        let c = Configuration::from_counts(t, &[4; 21]).unwrap();
        for n in 0..=10 {
            assert_eq!(empirical_density(&c, n).unwrap().value, 4.0);
        }
        assert!(empirical_density(&c, 11).is_err());
    }

    #[test]
    fn window_wraps_and_excludes_inf() {
        let t = Torus::new(&[5, 5]).unwrap();
        let mut c = Configuration::empty(t.clone());
        c.set(t.index(&[-1, -1]), Occupancy::new(9));
        c.set(t.index(&[1, 0]), Occupancy::INF);
        let e = empirical_density(&c, 1).unwrap();
        assert_eq!(e.excluded_infinite, 1);
        assert_eq!(e.value, 9.0 / 8.0);
    }

    #[test]
    fn profile_bounds_bracket_top_half() {
        let t = Torus::new(&[65]).unwrap();
        let counts: Vec<u64> = (0..65).map(|i| (i % 3) as u64).collect();
        let p = density_profile(&Configuration::from_counts(t, &counts).unwrap()).unwrap();
        assert_eq!(p.estimates.last().unwrap().radius, 32);
        assert!(p.lower <= p.upper);
        assert!((p.estimates.last().unwrap().value - counts.iter().sum::<u64>() as f64 / 65.0).abs() < 1e-12);
    }

    #[test]
    fn growth_condition_examples() {
        let betas = [0.05, 0.5, 1.0, 3.0];
        let bounded = |n: usize| (if n == 0 { 1.0f64 } else { 2.0 }).ln();
        assert!(growth_condition_check(bounded, &betas).0);
        let exploding = |n: usize| 2.0 * n as f64;
        let (ok, checks) = growth_condition_check(exploding, &[1.0]);
        assert!(!ok && checks[0].series.is_none());
        let poly = |n: usize| 5.0 * (n.max(1) as f64).ln();
        let (ok, checks) = growth_condition_check(poly, &betas);
        assert!(ok);
        // sum_n n^5 e^{-n} (n >= 1) plus the n = 0 term 1, by direct summation
        let direct: f64 = 1.0 + (1..2000).map(|n| (n as f64).powi(5) * (-(n as f64)).exp()).sum::<f64>();
        let got = checks.iter().find(|c| c.beta == 1.0).unwrap().series.unwrap();
        assert!((got - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn histogram_normalizes() {
        assert_eq!(histogram([0, 2, 2, 1]), vec![0.25, 0.25, 0.5]);
    }
}
