//! Statistical checks of the environment sampler and the invariant marginals
//! against their analytic laws.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use zrp::environment::{sample_environment, EnvDistribution, LazyEnvironment};
use zrp::experiments::analysis::empirical_density;
use zrp::measures::{mean_density, sample_product_measure, MarginalLaw, RateFunction, DEFAULT_TOL};
use zrp::rng;

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Pearson statistic over the cells of `expected` (probabilities), lumping
/// cells with expected count below 5 into the last kept one.
fn chi_square(observed: &[u64], expected: &[f64], n: u64) -> (f64, usize) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for k in 0..expected.len().max(observed.len()) {
        o_acc += observed.get(k).copied().unwrap_or(0) as f64;
        e_acc += expected.get(k).copied().unwrap_or(0.0) * n as f64;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if let (Some(o), Some(e)) = (obs.last_mut(), exp.last_mut()) {
        *o += o_acc;
        *e += e_acc;
    }
    let stat = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    (stat, obs.len() - 1)
}

#[test]
fn sampled_rates_follow_power_law() {
    for beta in [0.5, 1.0, 3.0] {
        let dist = EnvDistribution::power_law(0.2, beta).unwrap();
        let field = sample_environment(&dist, &[100, 100], 42).unwrap();
        let d = ks_statistic(field.rates().to_vec(), |l| dist.cdf(l));
        let n = field.len() as f64;
        assert!(d < 1.63 / n.sqrt(), "beta {beta}: KS {d}");
        assert!(field.rates().iter().all(|&l| l > 0.2 && l <= 1.0));
    }
}

#[test]
fn torus_and_lazy_environment_agree() {
    let dist = EnvDistribution::power_law(0.2, 3.0).unwrap();
    let field = sample_environment(&dist, &[16, 9], 5).unwrap();
    let lazy = LazyEnvironment::new(dist, 5);
    for s in 0..field.len() {
        assert_eq!(field.rate(s), lazy.rate(&field.torus().coords(s)));
    }
}

#[test]
fn slow_fraction_matches_theta() {
    let dist = EnvDistribution::power_law(0.2, 1.0).unwrap();
    let alpha = dist.alpha_for_theta(0.25).unwrap();
    let field = sample_environment(&dist, &[40_000], 9).unwrap();
    let slow = (0..field.len()).filter(|&s| field.is_slow(s, alpha)).count() as f64;
    let n = field.len() as f64;
    let sd = (n * 0.25 * 0.75).sqrt();
    assert!((slow - 0.25 * n).abs() < 4.0 * sd, "{slow} slow of {n}");
}

#[test]
fn marginal_samples_match_pmf() {
    for (g, lambda, v) in [
        (RateFunction::Geometric, 0.5, 0.2),
        (RateFunction::KOverK1, 0.3, 0.2),
        (RateFunction::table(vec![0.25, 0.5, 0.75]).unwrap(), 0.9, 0.15),
    ] {
        let law = MarginalLaw::new(lambda, v, &g, DEFAULT_TOL).unwrap();
        let mut r = rng::stream(3, 1, 4);
        let n = 200_000u64;
        let mut counts = vec![0u64; 1];
        for _ in 0..n {
            let k = law.sample(&mut r) as usize;
            if k >= counts.len() {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        let (stat, df) = chi_square(&counts, law.pmf(), n);
        let crit = ChiSquared::new(df as f64).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "{g:?}: chi2 {stat} over {df} df (critical {crit})");
    }
}

#[test]
fn product_measure_density_matches_rho() {
    // window mean of a nu_(lambda, v) sample against rho(v); the spread
    // comes from independent environment-and-configuration replicas
    let dist = EnvDistribution::power_law(0.2, 3.0).unwrap();
    let g = RateFunction::Geometric;
    let v = 0.15;
    let rho = mean_density(v, &dist, &g, DEFAULT_TOL).unwrap().finite().unwrap();
    let estimates: Vec<f64> = (0..40)
        .map(|i| {
            let field = sample_environment(&dist, &[4001], 100 + i).unwrap();
            let config = sample_product_measure(&field, v, &g, &mut rng::stream(7, 0, i)).unwrap();
            empirical_density(&config, 2000).unwrap().value
        })
        .collect();
    let (mean, se) = zrp::stats::mean_se(&estimates);
    assert!((mean - rho).abs() < 3.0 * se, "window density {mean} +- {se}, rho(v) = {rho}");
}
