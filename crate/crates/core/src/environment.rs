//! Random rate fields, their truncation, and the jump kernel.

use std::io::Write;

use crate::error::{config_err, domain_err, Result};
use crate::rng::{open_unit, site_key};
use crate::scalar::Scalar;

/// Periodic box `Z_L1 x ... x Z_Ld` with row-major site indexing
/// (the first axis varies fastest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Torus {
    dims: Vec<usize>,
    len: usize,
}

impl Torus {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return config_err("torus needs at least one axis");
        }
        if dims.contains(&0) {
            return config_err(format!("torus side lengths must be positive, got {dims:?}"));
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &l| acc.checked_mul(l))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or_else(|| crate::Error::Config(format!("torus {dims:?} too large")))?;
        Ok(Self { dims: dims.to_vec(), len })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn coords(&self, mut site: usize) -> Vec<i64> {
        self.dims
            .iter()
            .map(|&l| {
                let c = site % l;
                site /= l;
                c as i64
            })
            .collect()
    }

    /// Index of the site at `coords`, wrapping each axis.
    pub fn index(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        let mut idx = 0usize;
        for (&c, &l) in coords.iter().zip(&self.dims).rev() {
            idx = idx * l + c.rem_euclid(l as i64) as usize;
        }
        idx
    }

    pub fn shift(&self, site: usize, disp: &[i64]) -> usize {
        let mut c = self.coords(site);
        for (ci, di) in c.iter_mut().zip(disp) {
            *ci += di;
        }
        self.index(&c)
    }

    /// Sup-norm distance to the origin using the shortest periodic image.
    pub fn norm(&self, site: usize) -> usize {
        self.coords(site)
            .iter()
            .zip(&self.dims)
            .map(|(&c, &l)| {
                let c = c as usize;
                c.min(l - c)
            })
            .max()
            .unwrap_or(0)
    }
}

/// Translation-invariant, finite-range jump kernel `p(.)` on `Z^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpKernel<T> {
    displacements: Vec<Vec<i64>>,
    probs: Vec<T>,
    cumulative: Vec<f64>,
    range: i64,
    dim: usize,
}

impl<T: Scalar> JumpKernel<T> {
    /// Builds a kernel from `(displacement, probability)` pairs. Zero-probability
    /// entries are dropped. The range `M` is the largest sup-norm in the support.
    pub fn new(entries: Vec<(Vec<i64>, T)>) -> Result<Self> {
        let entries: Vec<_> = entries.into_iter().filter(|(_, p)| *p != T::zero()).collect();
        let Some(dim) = entries.first().map(|(d, _)| d.len()) else {
            return config_err("kernel has empty support");
        };
        if dim == 0 {
            return config_err("kernel displacements must have at least one coordinate");
        }
        let mut total = 0.0;
        let mut cumulative = Vec::with_capacity(entries.len());
        for (d, p) in &entries {
            if d.len() != dim {
                return config_err("kernel displacements have mixed dimensions");
            }
            if !(*p > T::zero()) || !p.is_finite() {
                return config_err(format!("kernel probability {p} is not positive"));
            }
            total += p.as_f64();
            cumulative.push(total);
        }
        let tol = 1e-12f64.max(T::epsilon().as_f64() * 4.0 * entries.len() as f64);
        if (total - 1.0).abs() > tol {
            return config_err(format!("kernel probabilities sum to {total}, not 1"));
        }
        // absorb rounding so the last bucket always catches u < 1
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        let range = entries
            .iter()
            .map(|(d, _)| d.iter().map(|x| x.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        let (displacements, probs) = entries.into_iter().unzip();
        let kernel = Self { displacements, probs, cumulative, range, dim };
        if !kernel.generates_lattice() {
            return config_err("kernel is not irreducible: its support does not generate Z^d");
        }
        Ok(kernel)
    }

    /// Like [`JumpKernel::new`] but also enforces a declared range bound.
    pub fn with_range(entries: Vec<(Vec<i64>, T)>, max_range: i64) -> Result<Self> {
        let k = Self::new(entries)?;
        if k.range > max_range {
            return config_err(format!("kernel range {} exceeds declared M = {max_range}", k.range));
        }
        Ok(k)
    }

    /// Symmetric nearest-neighbour kernel in `d` dimensions.
    pub fn nearest_neighbor(dim: usize) -> Result<Self> {
        let p = T::one() / T::from_usize_lossy(2 * dim);
        let mut entries = Vec::with_capacity(2 * dim);
        for axis in 0..dim {
            for s in [1, -1] {
                let mut d = vec![0; dim];
                d[axis] = s;
                entries.push((d, p));
            }
        }
        Self::new(entries)
    }

    /// One-dimensional kernel `p(+1) = right`, `p(-1) = 1 - right`.
    pub fn one_d(right: T) -> Result<Self> {
        Self::new(vec![(vec![1], right), (vec![-1], T::one() - right)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Range `M`: the largest sup-norm of a displacement in the support.
    pub fn range(&self) -> i64 {
        self.range
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn displacement(&self, i: usize) -> &[i64] {
        &self.displacements[i]
    }

    pub fn prob(&self, i: usize) -> T {
        self.probs[i]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[i64], T)> {
        self.displacements.iter().map(Vec::as_slice).zip(self.probs.iter().copied())
    }

    /// Index of the displacement selected by a uniform `u` in `[0, 1)`.
    #[inline]
    pub fn select(&self, u: f64) -> usize {
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }

    /// Integer row reduction of the support vectors; the support generates
    /// `Z^d` iff the echelon form is square with unit pivots.
    fn generates_lattice(&self) -> bool {
        let d = self.dim;
        let mut rows: Vec<Vec<i64>> = self.displacements.clone();
        let mut rank = 0;
        for col in 0..d {
            loop {
                // smallest nonzero |entry| in this column among unreduced rows
                let pivot = (rank..rows.len())
                    .filter(|&r| rows[r][col] != 0)
                    .min_by_key(|&r| rows[r][col].abs());
                let Some(p) = pivot else { break };
                rows.swap(rank, p);
                let mut done = true;
                for r in rank + 1..rows.len() {
                    if rows[r][col] != 0 {
                        let q = rows[r][col].div_euclid(rows[rank][col]);
                        for j in 0..d {
                            rows[r][j] -= q * rows[rank][j];
                        }
                        if rows[r][col] != 0 {
                            done = false;
                        }
                    }
                }
                if done {
                    break;
                }
            }
            if rank >= rows.len() || rows[rank][col] == 0 {
                return false;
            }
            if rows[rank][col].abs() != 1 {
                return false;
            }
            rank += 1;
        }
        rank == d
    }
}

/// Law of a single environment value `lambda_0`:
/// `lambda_0 = c + (1 - c) B` with `P(B <= b) = b^beta` on `(0, 1]`,
/// so `P(lambda_0 <= c + eps) = (eps / (1 - c))^beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvDistribution<T> {
    c: T,
    beta: T,
}

impl<T: Scalar> EnvDistribution<T> {
    pub fn power_law(c: T, beta: T) -> Result<Self> {
        if !(c > T::zero() && c < T::one()) {
            return config_err(format!("c must lie in (0, 1), got {c}"));
        }
        if !(beta > T::zero()) || !beta.is_finite() {
            return config_err(format!("beta must be positive, got {beta}"));
        }
        Ok(Self { c, beta })
    }

    /// Uniform on `(c, 1]`.
    pub fn uniform(c: T) -> Result<Self> {
        Self::power_law(c, T::one())
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// `P(lambda_0 <= lambda)`.
    pub fn cdf(&self, lambda: T) -> T {
        if lambda <= self.c {
            T::zero()
        } else if lambda >= T::one() {
            T::one()
        } else {
            ((lambda - self.c) / (T::one() - self.c)).powf(self.beta)
        }
    }

    /// Quantile for `u` in `(0, 1)`; the result lies in `(c, 1]`.
    pub fn quantile(&self, u: T) -> T {
        let b = u.powf(self.beta.recip());
        let lambda = self.c + (T::one() - self.c) * b;
        // u^(1/beta) can round to 0 for tiny u and large beta
        if lambda > self.c {
            lambda
        } else {
            self.c + (T::one() - self.c) * T::min_positive_value().sqrt()
        }
    }

    /// Probability density of `lambda_0` on `(c, 1]`.
    pub fn density(&self, lambda: T) -> T {
        if lambda <= self.c || lambda > T::one() {
            return T::zero();
        }
        let span = T::one() - self.c;
        let b = (lambda - self.c) / span;
        self.beta * b.powf(self.beta - T::one()) / span
    }

    /// Truncation level `alpha` whose slow-site probability is `theta`.
    pub fn alpha_for_theta(&self, theta: T) -> Result<T> {
        if !(theta > T::zero() && theta <= T::one()) {
            return domain_err(format!("theta must lie in (0, 1], got {theta}"));
        }
        Ok((T::one() - self.c) * theta.powf(self.beta.recip()))
    }

    /// Environment value at `coords`, drawn from the splittable per-site stream.
    pub fn rate_at(&self, seed: u64, coords: &[i64]) -> T {
        self.quantile(T::lit(open_unit(site_key(seed, coords))))
    }
}

/// `theta = P(lambda_0 <= c + alpha)`.
pub fn theta<T: Scalar>(dist: &EnvDistribution<T>, alpha: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return domain_err(format!("alpha must be positive, got {alpha}"));
    }
    Ok(dist.cdf(dist.c + alpha))
}

/// An environment realised on a finite torus.
#[derive(Clone, Debug)]
pub struct RateField<T> {
    torus: Torus,
    rates: Vec<T>,
    c: T,
    seed: u64,
    dist: EnvDistribution<T>,
}

impl<T: Scalar> RateField<T> {
    /// Builds a field from explicit rates; every rate must lie in `(c, 1]`.
    pub fn from_rates(torus: Torus, rates: Vec<T>, dist: EnvDistribution<T>) -> Result<Self> {
        if rates.len() != torus.len() {
            return config_err(format!("{} rates for {} sites", rates.len(), torus.len()));
        }
        let c = dist.c();
        if let Some(bad) = rates.iter().find(|&&l| !(l > c && l <= T::one())) {
            return config_err(format!("rate {bad} outside ({c}, 1]"));
        }
        Ok(Self { torus, rates, c, seed: 0, dist })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    #[inline]
    pub fn rate(&self, site: usize) -> T {
        self.rates[site]
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distribution(&self) -> &EnvDistribution<T> {
        &self.dist
    }

    pub fn min_rate(&self) -> T {
        self.rates.iter().copied().fold(T::infinity(), T::min)
    }

    /// `x` is slow (in `Lambda^c`) iff `lambda_x <= c + alpha`.
    #[inline]
    pub fn is_slow(&self, site: usize, alpha: T) -> bool {
        self.rates[site] <= self.c + alpha
    }

    /// Sites sorted by increasing rate (ties by index).
    pub fn sites_by_rate(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.rates[a].partial_cmp(&self.rates[b]).unwrap().then(a.cmp(&b)));
        order
    }

    /// CSV dump `site_index,x0,...,lambda`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "site_index")?;
        for axis in 0..self.torus.dim() {
            write!(w, ",x{axis}")?;
        }
        writeln!(w, ",lambda")?;
        for (site, rate) in self.rates.iter().enumerate() {
            write!(w, "{site}")?;
            for c in self.torus.coords(site) {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{rate}")?;
        }
        Ok(())
    }
}

/// Samples i.i.d. rates on the torus. Site `x` gets `dist.rate_at(seed, coords(x))`,
/// the same value a lazily queried infinite lattice would return.
pub fn sample_environment<T: Scalar>(
    dist: &EnvDistribution<T>,
    dims: &[usize],
    seed: u64,
) -> Result<RateField<T>> {
    let torus = Torus::new(dims)?;
    let rates = (0..torus.len()).map(|s| dist.rate_at(seed, &torus.coords(s))).collect();
    Ok(RateField { torus, rates, c: dist.c(), seed, dist: *dist })
}

/// `lambda^alpha_x = max(lambda_x, c + alpha)`.
pub fn truncate_rates<T: Scalar>(field: &RateField<T>, alpha: T) -> RateField<T> {
    let floor = field.c + alpha;
    let rates = field.rates.iter().map(|&l| if l <= floor { floor } else { l }).collect();
    RateField { rates, ..field.clone() }
}

/// Splits the sites into the fast set `{lambda_x > c + alpha}` and its complement.
pub fn partition_sites<T: Scalar>(field: &RateField<T>, alpha: T) -> (Vec<usize>, Vec<usize>) {
    (0..field.len()).partition(|&s| !field.is_slow(s, alpha))
}

/// Lazy environment on the whole of `Z^d`.
#[derive(Clone, Copy, Debug)]
pub struct LazyEnvironment<T> {
    pub dist: EnvDistribution<T>,
    pub seed: u64,
}

impl<T: Scalar> LazyEnvironment<T> {
    pub fn new(dist: EnvDistribution<T>, seed: u64) -> Self {
        Self { dist, seed }
    }

    #[inline]
    pub fn rate(&self, coords: &[i64]) -> T {
        self.dist.rate_at(self.seed, coords)
    }

    #[inline]
    pub fn is_slow(&self, coords: &[i64], alpha: T) -> bool {
        self.rate(coords) <= self.dist.c() + alpha
    }
}
