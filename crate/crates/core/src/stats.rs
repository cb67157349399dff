//! Small estimators shared by the experiments.

use statrs::distribution::{Beta, ContinuousCDF};

/// Binomial count with exact (Clopper–Pearson) confidence bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(successes <= trials, "successes exceed trials");
        Self { successes, trials }
    }

    pub fn estimate(&self) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        self.successes as f64 / self.trials as f64
    }

    /// One-sided upper bound at confidence `level` (e.g. 0.99).
    pub fn upper(&self, level: f64) -> f64 {
        let (x, n) = (self.successes as f64, self.trials as f64);
        if self.trials == 0 || self.successes == self.trials {
            return 1.0;
        }
        beta_quantile(x + 1.0, n - x, level)
    }

    /// One-sided lower bound at confidence `level`.
    pub fn lower(&self, level: f64) -> f64 {
        let (x, n) = (self.successes as f64, self.trials as f64);
        if self.successes == 0 {
            return 0.0;
        }
        beta_quantile(x, n - x + 1.0, 1.0 - level)
    }
}

/// Beta quantile by bisection on the regularized incomplete beta function,
/// to full double precision.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let dist = Beta::new(a, b).unwrap();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dist.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Total-variation distance between two probability vectors (missing
/// entries count as zero).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
        / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_edge_cases() {
        let p = Proportion::new(0, 100);
        // (1 - 0.99)^(1/100) complement: upper = 1 - 0.01^(1/100)
        assert!((p.upper(0.99) - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-9);
        assert_eq!(p.lower(0.99), 0.0);
        let p = Proportion::new(100, 100);
        assert_eq!(p.upper(0.99), 1.0);
        assert!((p.lower(0.99) - 0.01f64.powf(0.01)).abs() < 1e-9);
    }

    #[test]
    fn clopper_pearson_brackets_estimate() {
        let p = Proportion::new(37, 400);
        assert!(p.lower(0.99) < p.estimate() && p.estimate() < p.upper(0.99));
        assert!(p.upper(0.99) > p.upper(0.9));
    }

    #[test]
    fn mean_se_known_values() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tv_of_disjoint_supports_is_one() {
        assert_eq!(total_variation(&[1.0], &[0.0, 1.0]), 1.0);
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }
}
