//! Exact stationary law of a closed zero-range system on a small cycle.
//!
//! The state space is every composition of `N` particles into `n` sites,
//! listed in colexicographic order. The generator is assembled densely and
//! `pi Q = 0` is solved with one balance equation replaced by the
//! normalization row.

use std::collections::{HashMap, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::environment::JumpKernel;
use crate::error::{Error, Result};
use crate::measures::RateFunction;
use crate::scalar::Field;

pub const MAX_STATES: usize = 100_000;

/// A closed system on the cycle `Z / nZ`.
#[derive(Clone, Debug)]
pub struct ClosedSystem<F> {
    pub particles: u32,
    pub rates: Vec<F>,
    /// `g(1), ..., g(N)`.
    pub g: Vec<F>,
    /// `(displacement, probability)` pairs on the cycle.
    pub kernel: Vec<(i64, F)>,
}

#[derive(Clone, Debug)]
pub struct OracleSolution<F> {
    pub states: Vec<Vec<u32>>,
    /// Generator-solved stationary law.
    pub pi: Vec<F>,
    /// Product weights conditioned on the particle number.
    pub product: Vec<F>,
    pub tv: F,
}

/// `C(N + n - 1, n - 1)`, saturating.
pub fn state_count(sites: usize, particles: u32) -> usize {
    let mut acc: u128 = 1;
    let k = sites.saturating_sub(1) as u128;
    for i in 1..=k {
        acc = acc * (particles as u128 + i) / i;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Compositions of `particles` into `sites` parts, colexicographic order
/// (the last coordinate varies slowest).
pub fn compositions(sites: usize, particles: u32) -> Vec<Vec<u32>> {
    fn fill(prefix_from_end: &mut Vec<u32>, remaining_sites: usize, left: u32, out: &mut Vec<Vec<u32>>) {
        if remaining_sites == 1 {
            let mut state = vec![left];
            state.extend(prefix_from_end.iter().rev());
            out.push(state);
            return;
        }
        for k in 0..=left {
            prefix_from_end.push(k);
            fill(prefix_from_end, remaining_sites - 1, left - k, out);
            prefix_from_end.pop();
        }
    }
    let mut out = Vec::with_capacity(state_count(sites, particles));
    if sites > 0 {
        fill(&mut Vec::new(), sites, particles, &mut out);
    }
    out
}

fn strongly_connected(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let reach = |edges: &[Vec<usize>]| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            for &t in &edges[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen.into_iter().all(|b| b)
    };
    let mut rev = vec![Vec::new(); n];
    for (s, out) in adj.iter().enumerate() {
        for &t in out {
            rev[t].push(s);
        }
    }
    reach(adj) && reach(&rev)
}

/// Gaussian elimination with partial pivoting by absolute value. Exact over
/// rational fields.
fn solve_dense<F: Field>(mut a: Vec<Vec<F>>, mut b: Vec<F>) -> Result<Vec<F>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[r][col].is_zero())
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap())
            .ok_or_else(|| Error::Reducible("singular balance system".into()))?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col].clone();
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone() / p.clone();
            for c in col..n {
                let delta = factor.clone() * a[col][c].clone();
                a[r][c] = a[r][c].clone() - delta;
            }
            b[r] = b[r].clone() - factor * b[col].clone();
        }
    }
    let mut x = vec![F::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for c in r + 1..n {
            acc = acc - a[r][c].clone() * x[c].clone();
        }
        x[r] = acc / a[r][r].clone();
    }
    Ok(x)
}

/// Solves the closed system exactly and compares with the conditioned
/// product law `prod_x (1/lambda_x)^{k_x} / g(k_x)!`.
pub fn exact_stationary<F: Field>(system: &ClosedSystem<F>) -> Result<OracleSolution<F>> {
    let n = system.rates.len();
    let big_n = system.particles;
    if n == 0 {
        return Err(Error::Config("closed system needs at least one site".into()));
    }
    if system.g.len() < big_n as usize {
        return Err(Error::Config(format!("need g(1..={big_n}), got {} values", system.g.len())));
    }
    let size = state_count(n, big_n);
    if size > MAX_STATES {
        return Err(Error::StateSpaceTooLarge { size, limit: MAX_STATES });
    }
    let states = compositions(n, big_n);
    let index: HashMap<&[u32], usize> = states.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();

    // transpose of the generator, so row j holds the balance equation of state j
    let mut qt = vec![vec![F::zero(); size]; size];
    let mut adj = vec![Vec::new(); size];
    let mut scratch = vec![0u32; n];
    for (s, state) in states.iter().enumerate() {
        for x in 0..n {
            let k = state[x];
            if k == 0 {
                continue;
            }
            for (d, p) in &system.kernel {
                if p.is_zero() {
                    continue;
                }
                let y = (x as i64 + d).rem_euclid(n as i64) as usize;
                if y == x {
                    continue;
                }
                scratch.copy_from_slice(state);
                scratch[x] -= 1;
                scratch[y] += 1;
                let t = index[scratch.as_slice()];
                let rate = system.rates[x].clone() * system.g[k as usize - 1].clone() * p.clone();
                qt[t][s] = qt[t][s].clone() + rate.clone();
                qt[s][s] = qt[s][s].clone() - rate;
                adj[s].push(t);
            }
        }
    }
    if size > 1 && !strongly_connected(&adj) {
        return Err(Error::Reducible(format!("{n} sites, {big_n} particles")));
    }
    let mut rhs = vec![F::zero(); size];
    rhs[size - 1] = F::one();
    qt[size - 1] = vec![F::one(); size];
    let pi = solve_dense(qt, rhs)?;

    let mut g_fact = vec![F::one(); big_n as usize + 1];
    for k in 1..=big_n as usize {
        g_fact[k] = g_fact[k - 1].clone() * system.g[k - 1].clone();
    }
    let weights: Vec<F> = states
        .iter()
        .map(|state| {
            let mut w = F::one();
            for (x, &k) in state.iter().enumerate() {
                for _ in 0..k {
                    w = w / system.rates[x].clone();
                }
                w = w / g_fact[k as usize].clone();
            }
            w
        })
        .collect();
    let total = weights.iter().fold(F::zero(), |acc, w| acc + w.clone());
    let product: Vec<F> = weights.into_iter().map(|w| w / total.clone()).collect();
    let two = F::one() + F::one();
    let tv = pi
        .iter()
        .zip(&product)
        .fold(F::zero(), |acc, (p, q)| acc + (p.clone() - q.clone()).abs())
        / two;
    Ok(OracleSolution { states, pi, product, tv })
}

/// Floating-point closed system from the simulator's types. The kernel must
/// be one-dimensional.
pub fn closed_system_f64(
    rates: &[f64],
    particles: u32,
    g: &RateFunction<f64>,
    kernel: &JumpKernel<f64>,
) -> Result<ClosedSystem<f64>> {
    if kernel.dim() != 1 {
        return Err(Error::Config("the oracle runs on a cycle: kernel must be one-dimensional".into()));
    }
    Ok(ClosedSystem {
        particles,
        rates: rates.to_vec(),
        g: (1..=particles as u64).map(|k| g.at(k)).collect(),
        kernel: kernel.entries().map(|(d, p)| (d[0], p)).collect(),
    })
}

/// Exact rational from a decimal literal such as `"0.6"` or `"3/4"`.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::Config(format!("not a rational literal: {text:?}"));
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let den = BigInt::from(10u32).pow(frac.len() as u32);
    let value = BigRational::new(num, den);
    Ok(if neg { -value } else { value })
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
