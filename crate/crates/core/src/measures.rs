//! Single-site invariant laws and the functions built from them.
//!
//! The marginal at a site with rate `lambda` and fugacity `v` is
//! `P(k) = u^k / (g(k)! Z(u))` with `u = v / lambda`,
//! `g(k)! = g(1) ... g(k)` and `Z(u) = sum_k u^k / g(k)!`.
//! Series are truncated adaptively with a certified tail bound: for
//! nondecreasing `g`, the ratio of consecutive terms past index `k` is at
//! most `r = u / g(k + 1)`, so the remainder is geometric once `r < 1`.

use std::cell::RefCell;

use rand::Rng;

use crate::dynamics::{Configuration, Occupancy};
use crate::environment::{EnvDistribution, RateField};
use crate::error::{config_err, domain_err, Error, Result};
use crate::quad;
use crate::scalar::Scalar;

/// Default absolute tolerance for series and quadrature.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Fugacities above this are refused: the certified tail needs too many terms.
pub const MAX_FUGACITY: f64 = 1.0 - 1e-6;

const MAX_TERMS: u64 = 200_000_000;

/// Jump-rate function `g`: `g(0) = 0 < g(1)`, nondecreasing, bounded by
/// and converging to `g(inf) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum RateFunction<T> {
    /// `g(k) = 1` for `k >= 1`.
    Geometric,
    /// `g(k) = k / (k + 1)`.
    KOverK1,
    /// `g(k) = table[k - 1]` for `1 <= k <= len`, then `1`.
    Table(Vec<T>),
}

impl<T: Scalar> RateFunction<T> {
    pub fn table(values: Vec<T>) -> Result<Self> {
        let Some(&first) = values.first() else {
            return config_err("rate table is empty");
        };
        if !(first > T::zero()) {
            return config_err(format!("g(1) must be positive, got {first}"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return config_err("rate table must be nondecreasing");
        }
        if values.iter().any(|&v| !(v <= T::one())) {
            return config_err("rate table values must not exceed 1");
        }
        Ok(RateFunction::Table(values))
    }

    #[inline]
    pub fn at(&self, k: u64) -> T {
        if k == 0 {
            return T::zero();
        }
        match self {
            RateFunction::Geometric => T::one(),
            RateFunction::KOverK1 => {
                let k = T::from_u64(k).unwrap();
                k / (k + T::one())
            }
            RateFunction::Table(t) => t.get(k as usize - 1).copied().unwrap_or_else(T::one),
        }
    }

    /// `g` at an occupancy, with `g(inf) = 1`.
    #[inline]
    pub fn eval(&self, k: Occupancy) -> T {
        match k.count() {
            Some(k) => self.at(k),
            None => self.limit(),
        }
    }

    /// `g(inf)`.
    #[inline]
    pub fn limit(&self) -> T {
        T::one()
    }

    /// `g(k)! = g(1) ... g(k)`.
    pub fn factorial(&self, k: u64) -> T {
        (1..=k).map(|j| self.at(j)).fold(T::one(), |a, b| a * b)
    }
}

/// Partial sum of `Z(u)`, stopped once both the `Z` and first-moment remainders are certified below the tolerance.
#[derive(Clone, Copy, Debug)]
struct Series<T> {
    z: T,
    terms: u64,
}

fn check_fugacity<T: Scalar>(u: T) -> Result<()> {
    if !(u >= T::zero()) {
        return domain_err(format!("fugacity must be nonnegative, got {u}"));
    }
    if u >= T::one() {
        return domain_err(format!("fugacity {u} >= 1: series diverges"));
    }
    if u.as_f64() > MAX_FUGACITY {
        return Err(Error::NearCritical { u: u.as_f64() });
    }
    Ok(())
}

fn series<T: Scalar>(u: T, g: &RateFunction<T>, tol: T) -> Result<Series<T>> {
    check_fugacity(u)?;
    if !(tol > T::zero()) {
        return domain_err(format!("tolerance must be positive, got {tol}"));
    }
    let mut z = T::one();
    let mut term = T::one();
    let mut k: u64 = 0;
    if u == T::zero() {
        return Ok(Series { z, terms: 1 });
    }
    loop {
        let r = u / g.at(k + 1);
        if r < T::one() {
            // remainder bounds for sum_{j>k} t_j and sum_{j>k} j t_j
            let kk = T::from_u64(k).unwrap();
            let one_m = T::one() - r;
            let tail_z = term * r / one_m;
            let tail_m1 = term * (kk * r / one_m + r / (one_m * one_m));
            if tail_z < tol && tail_m1 < tol {
                return Ok(Series { z, terms: k + 1 });
            }
        }
        k += 1;
        if k > MAX_TERMS {
            return Err(Error::NearCritical { u: u.as_f64() });
        }
        term = term * r;
        z = z + term;
    }
}

/// `(Z(u), u Z'(u))` summed in closed form: every supported `g` is constant
/// from some index on, so the series ends in a geometric tail.
fn closed_form<T: Scalar>(u: T, g: &RateFunction<T>) -> (T, T) {
    let one = T::one();
    let q = one - u;
    match g {
        RateFunction::Geometric => (one / q, u / (q * q)),
        // g(k)! = 1 / (k + 1)
        RateFunction::KOverK1 => (one / (q * q), T::lit(2.0) * u / (q * q * q)),
        RateFunction::Table(t) => {
            let mut z = one;
            let mut m1 = T::zero();
            let mut term = one;
            for (k, &gk) in t.iter().enumerate() {
                term = term * u / gk;
                z = z + term;
                m1 = m1 + T::from_usize_lossy(k + 1) * term;
            }
            // beyond the table g = 1: sum_{k>L} u^k = u^L u / q and
            // sum_{k>L} k u^k = u^L u (L + 1 - L u) / q^2, both over g(L)!
            let len = T::from_usize_lossy(t.len());
            z = z + term * u / q;
            m1 = m1 + term * u * (len + one - len * u) / (q * q);
            (z, m1)
        }
    }
}

/// `Z(u) = sum_{k>=0} u^k / g(k)!`.
pub fn partition_function<T: Scalar>(u: T, g: &RateFunction<T>, tol: T) -> Result<T> {
    check_fugacity(u)?;
    if !(tol > T::zero()) {
        return domain_err(format!("tolerance must be positive, got {tol}"));
    }
    Ok(closed_form(u, g).0)
}

/// Mean occupancy `R(u) = u Z'(u) / Z(u)`.
pub fn mean_occupancy<T: Scalar>(u: T, g: &RateFunction<T>, tol: T) -> Result<T> {
    partition_function(u, g, tol)?;
    let (z, m1) = closed_form(u, g);
    Ok(m1 / z)
}

/// Inverse of `R` by bisection on `[0, MAX_FUGACITY]`.
pub fn fugacity_for_density<T: Scalar>(rho: T, g: &RateFunction<T>, tol: T) -> Result<T> {
    if !(rho >= T::zero()) {
        return domain_err(format!("density must be nonnegative, got {rho}"));
    }
    if rho == T::zero() {
        return Ok(T::zero());
    }
    let inner = tol * T::lit(0.1);
    let mut lo = T::zero();
    let mut hi = T::lit(MAX_FUGACITY);
    if mean_occupancy(hi, g, inner)? < rho {
        return Err(Error::NearCritical { u: MAX_FUGACITY });
    }
    let half = T::lit(0.5);
    for _ in 0..200 {
        let mid = (lo + hi) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        let r = mean_occupancy(mid, g, inner)?;
        if (r - rho).abs() < tol {
            return Ok(mid);
        }
        if r < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // interval collapsed to adjacent floats
    let rl = mean_occupancy(lo, g, inner)?;
    let rh = mean_occupancy(hi, g, inner)?;
    Ok(if (rl - rho).abs() <= (rh - rho).abs() { lo } else { hi })
}

/// Invariant single-site law `nu_{lambda, v}` truncated at a certified index.
#[derive(Clone, Debug)]
pub struct MarginalLaw<T> {
    lambda: T,
    v: T,
    u: T,
    z: T,
    pmf: Vec<T>,
    tail: T,
    g: RateFunction<T>,
}

impl<T: Scalar> MarginalLaw<T> {
    pub fn new(lambda: T, v: T, g: &RateFunction<T>, tol: T) -> Result<Self> {
        if !(lambda > T::zero()) {
            return domain_err(format!("site rate must be positive, got {lambda}"));
        }
        if !(v >= T::zero()) {
            return domain_err(format!("fugacity v must be nonnegative, got {v}"));
        }
        if v > lambda {
            return domain_err(format!("v = {v} exceeds site rate {lambda}"));
        }
        Self::from_fugacity(v / lambda, g, tol).map(|mut law| {
            law.lambda = lambda;
            law.v = v;
            law
        })
    }

    /// Law with `P(k) proportional to u^k / g(k)!`.
    pub fn from_fugacity(u: T, g: &RateFunction<T>, tol: T) -> Result<Self> {
        let s = series(u, g, tol)?;
        let mut pmf = Vec::with_capacity(s.terms as usize);
        let mut term = T::one();
        pmf.push(term / s.z);
        for k in 1..s.terms {
            term = term * u / g.at(k);
            pmf.push(term / s.z);
        }
        let kept: T = pmf.iter().copied().sum();
        let tail = (T::one() - kept).max(T::zero());
        Ok(Self { lambda: T::one(), v: u, u, z: s.z, pmf, tail, g: g.clone() })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn v(&self) -> T {
        self.v
    }

    pub fn fugacity(&self) -> T {
        self.u
    }

    pub fn normalizer(&self) -> T {
        self.z
    }

    /// Truncation index `K`: the pmf is stored for `k < K`.
    pub fn support_len(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[T] {
        &self.pmf
    }

    pub fn prob(&self, k: usize) -> T {
        self.pmf.get(k).copied().unwrap_or(T::zero())
    }

    /// Mass beyond the stored support (rounding included).
    pub fn tail_mass(&self) -> T {
        self.tail
    }

    pub fn mean(&self) -> T {
        self.pmf.iter().enumerate().map(|(k, &p)| T::from_usize_lossy(k) * p).sum()
    }

    pub fn cdf(&self, k: usize) -> T {
        self.pmf.iter().take(k + 1).copied().sum()
    }

    /// Inverse-CDF draw. Draws landing in the (sub-tolerance) tail keep
    /// generating series terms past the stored support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let target = rng.gen::<f64>();
        let mut acc = 0.0;
        for (k, &p) in self.pmf.iter().enumerate() {
            acc += p.as_f64();
            if target < acc {
                return k as u64;
            }
        }
        let mut k = self.pmf.len() as u64;
        let mut p = self.pmf.last().map(|p| p.as_f64()).unwrap_or(0.0);
        loop {
            p *= self.u.as_f64() / self.g.at(k).as_f64();
            acc += p;
            if target < acc || p < 1e-300 {
                return k;
            }
            k += 1;
        }
    }

    /// CSV dump `k,prob`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,prob")?;
        for (k, p) in self.pmf.iter().enumerate() {
            writeln!(w, "{k},{p}")?;
        }
        Ok(())
    }
}

/// One draw from `nu_{lambda, v}` at a single site.
pub fn sample_marginal<T: Scalar, R: Rng + ?Sized>(
    lambda: T,
    v: T,
    g: &RateFunction<T>,
    rng: &mut R,
) -> Result<u64> {
    Ok(MarginalLaw::new(lambda, v, g, T::lit(DEFAULT_TOL))?.sample(rng))
}

/// Independent draws from `nu_{lambda_x, v}` at every site of the field.
pub fn sample_product_measure<T: Scalar, R: Rng + ?Sized>(
    field: &RateField<T>,
    v: T,
    g: &RateFunction<T>,
    rng: &mut R,
) -> Result<Configuration> {
    if v > field.c() {
        return domain_err(format!("v = {v} exceeds c = {}", field.c()));
    }
    let tol = T::lit(DEFAULT_TOL);
    let counts = field
        .rates()
        .iter()
        .map(|&lambda| MarginalLaw::new(lambda, v, g, tol).map(|law| law.sample(rng)))
        .collect::<Result<Vec<_>>>()?;
    Configuration::from_counts(field.torus().clone(), &counts)
}

/// Environment-averaged density, or divergence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Density<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Density<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Density::Finite(x) => Some(x),
            Density::Infinite => None,
        }
    }
}

/// `rho(v) = E[R(v / lambda_0)]`.
///
/// With `lambda = c + (1 - c) s^(1/beta)` the environment law becomes
/// uniform in `s`, so `rho(v) = int_0^1 R(v / lambda(s)) ds` and the only
/// possible singularity sits at `s = 0` when `v = c`. That case is probed on
/// shrinking cutoffs `10^-j`: geometrically decaying decade contributions
/// give a finite value (plus the geometric remainder), anything else is
/// reported as divergent.
pub fn mean_density<T: Scalar>(
    v: T,
    dist: &EnvDistribution<T>,
    g: &RateFunction<T>,
    tol: T,
) -> Result<Density<T>> {
    let c = dist.c();
    if !(v >= T::zero()) || v > c {
        return domain_err(format!("v must lie in [0, c] = [0, {c}], got {v}"));
    }
    if v == T::zero() {
        return Ok(Density::Finite(T::zero()));
    }
    let span = T::one() - c;
    let inv_beta = dist.beta().recip();
    let lambda_of = |s: T| c + span * s.powf(inv_beta);
    let series_tol = tol * T::lit(1e-2);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |s: T| -> T {
        match mean_occupancy(v / lambda_of(s), g, series_tol) {
            Ok(r) => r,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                T::zero()
            }
        }
    };

    let near_critical = (v / c).as_f64() > 1.0 - 1e-4;
    if !near_critical {
        let (val, _) = quad::integrate(integrand, T::zero(), T::one(), tol);
        if let Some(e) = failure.take() {
            return Err(e);
        }
        return Ok(Density::Finite(val));
    }

    // u(s) = v / lambda(s) must stay below 1 - 1e-4 for the series to be cheap
    let ten = T::lit(10.0);
    let mut upper = T::one();
    let mut total = T::zero();
    let mut pieces: Vec<T> = Vec::new();
    for _ in 0..40 {
        let lower = upper / ten;
        if (v / lambda_of(lower)).as_f64() > 1.0 - 1e-4 {
            break;
        }
        let (piece, _) = quad::integrate(integrand, lower, upper, tol * T::lit(0.01));
        if let Some(e) = failure.take() {
            return Err(e);
        }
        total = total + piece;
        pieces.push(piece);
        upper = lower;
        if piece < tol * T::lit(1e-3) && pieces.len() >= 3 {
            return Ok(Density::Finite(total));
        }
    }
    if pieces.len() < 4 {
        return Err(Error::NearCritical { u: (v / lambda_of(upper)).as_f64() });
    }
    let n = pieces.len();
    let ratios: Vec<T> = (n - 3..n).map(|i| pieces[i] / pieces[i - 1]).collect();
    let worst = ratios.iter().copied().fold(T::zero(), T::max);
    if worst < T::lit(0.9) {
        Ok(Density::Finite(total + pieces[n - 1] * worst / (T::one() - worst)))
    } else {
        Ok(Density::Infinite)
    }
}

/// Marginal of the truncated invariant law at one site.
#[derive(Clone, Debug)]
pub enum SiteLaw<T> {
    Finite(MarginalLaw<T>),
    Infinite,
}

impl<T: Scalar> SiteLaw<T> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Occupancy {
        match self {
            SiteLaw::Finite(law) => Occupancy::new(law.sample(rng)),
            SiteLaw::Infinite => Occupancy::INF,
        }
    }
}

/// Per-site marginals of `nu^alpha_lambda`: fast sites use fugacity
/// `(c + alpha) / lambda_x`, slow sites are `inf` with probability one.
pub fn truncated_invariant_marginal<T: Scalar>(
    field: &RateField<T>,
    alpha: T,
    g: &RateFunction<T>,
) -> Result<Vec<SiteLaw<T>>> {
    if !(alpha > T::zero()) {
        return domain_err(format!("alpha must be positive, got {alpha}"));
    }
    let top = field.c() + alpha;
    let tol = T::lit(DEFAULT_TOL);
    (0..field.len())
        .map(|x| {
            if field.is_slow(x, alpha) {
                Ok(SiteLaw::Infinite)
            } else {
                MarginalLaw::new(field.rate(x), top, g, tol).map(SiteLaw::Finite)
            }
        })
        .collect()
}

/// Draws a configuration from `nu^alpha_lambda`.
pub fn sample_truncated_invariant<T: Scalar, R: Rng + ?Sized>(
    field: &RateField<T>,
    alpha: T,
    g: &RateFunction<T>,
    rng: &mut R,
) -> Result<Configuration> {
    let laws = truncated_invariant_marginal(field, alpha, g)?;
    let occ = laws.iter().map(|l| l.sample(rng)).collect();
    Configuration::from_occupancies(field.torus().clone(), occ)
}
