//! Graphical construction of the zero-range dynamics.
//!
//! All randomness lives in an [`EventStream`]: a superposition of the
//! per-pair Poisson clocks (total rate = number of sites) where each event
//! carries an origin, a target drawn from the kernel, and a uniform mark.
//! A configuration is a deterministic function of the stream; two processes
//! fed the same stream are coupled.

use std::fmt;
use std::io::Write;

use rand::Rng;

use crate::environment::{JumpKernel, RateField, Torus};
use crate::error::{Error, Result};
use crate::measures::RateFunction;
use crate::rng::{open_unit, SimRng};
use crate::scalar::Scalar;

/// Particle count at a site, or `inf` at slow sites of a truncated process.
/// `inf + 1 = inf - 1 = inf`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Occupancy(u64);

impl Occupancy {
    pub const INF: Occupancy = Occupancy(u64::MAX);
    pub const ZERO: Occupancy = Occupancy(0);

    #[inline]
    pub fn new(k: u64) -> Self {
        assert!(k != u64::MAX, "occupancy overflow");
        Occupancy(k)
    }

    #[inline]
    pub fn is_infinite(self) -> bool {
        self.0 == u64::MAX
    }

    /// Finite count, or `None` for `inf`.
    #[inline]
    pub fn count(self) -> Option<u64> {
        (!self.is_infinite()).then_some(self.0)
    }

    #[inline]
    pub fn increment(&mut self) {
        if !self.is_infinite() {
            self.0 += 1;
        }
    }

    #[inline]
    pub fn decrement(&mut self) {
        if !self.is_infinite() {
            debug_assert!(self.0 > 0, "decrement of empty site");
            self.0 -= 1;
        }
    }
}

impl From<u64> for Occupancy {
    fn from(k: u64) -> Self {
        Occupancy::new(k)
    }
}

impl fmt::Display for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.count() {
            Some(k) => write!(f, "{k}"),
            None => f.write_str("inf"),
        }
    }
}

impl fmt::Debug for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Occupancies on a torus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    torus: Torus,
    occ: Vec<Occupancy>,
}

impl Configuration {
    pub fn empty(torus: Torus) -> Self {
        let n = torus.len();
        Self { torus, occ: vec![Occupancy::ZERO; n] }
    }

    pub fn from_counts(torus: Torus, counts: &[u64]) -> Result<Self> {
        if counts.len() != torus.len() {
            return Err(Error::Config(format!("{} counts for {} sites", counts.len(), torus.len())));
        }
        Ok(Self { torus, occ: counts.iter().map(|&k| Occupancy::new(k)).collect() })
    }

    pub fn from_occupancies(torus: Torus, occ: Vec<Occupancy>) -> Result<Self> {
        if occ.len() != torus.len() {
            return Err(Error::Config(format!("{} occupancies for {} sites", occ.len(), torus.len())));
        }
        Ok(Self { torus, occ })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    #[inline]
    pub fn get(&self, site: usize) -> Occupancy {
        self.occ[site]
    }

    #[inline]
    pub fn set(&mut self, site: usize, k: Occupancy) {
        self.occ[site] = k;
    }

    pub fn occupancies(&self) -> &[Occupancy] {
        &self.occ
    }

    /// Sum of the finite occupancies.
    pub fn total(&self) -> u64 {
        self.occ.iter().filter_map(|o| o.count()).sum()
    }

    pub fn has_infinite(&self) -> bool {
        self.occ.iter().any(|o| o.is_infinite())
    }

    /// Number of sites where `self(x) > other(x)`.
    pub fn order_violations(&self, other: &Configuration) -> usize {
        self.occ.iter().zip(&other.occ).filter(|(a, b)| a > b).count()
    }

    /// `self <= other` at every site.
    pub fn is_dominated_by(&self, other: &Configuration) -> bool {
        self.order_violations(other) == 0
    }

    #[inline]
    pub(crate) fn move_particle(&mut self, from: usize, to: usize) {
        self.occ[from].decrement();
        self.occ[to].increment();
    }
}

/// One Poisson event of the graphical construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphicalEvent<T> {
    pub time: f64,
    pub origin: usize,
    pub target: usize,
    /// Index into the kernel support.
    pub displacement: usize,
    pub mark: T,
}

/// Superposed Poisson clock over all `(x, y)` pairs of a torus.
///
/// Events arrive at rate `|torus|`; each picks a uniform origin and a kernel
/// displacement. Times are kept in `f64` regardless of the scalar type.
#[derive(Clone, Debug)]
pub struct EventStream<T> {
    rng: SimRng,
    now: f64,
    last: f64,
    pending: Option<GraphicalEvent<T>>,
    n_sites: usize,
    n_disp: usize,
    targets: Vec<u32>,
    kernel: JumpKernel<T>,
    emitted: u64,
}

impl<T: Scalar> EventStream<T> {
    pub fn new(torus: &Torus, kernel: JumpKernel<T>, rng: SimRng) -> Result<Self> {
        if kernel.dim() != torus.dim() {
            return Err(Error::Config(format!(
                "kernel dimension {} does not match torus dimension {}",
                kernel.dim(),
                torus.dim()
            )));
        }
        let n_disp = kernel.len();
        let mut targets = Vec::with_capacity(torus.len() * n_disp);
        for x in 0..torus.len() {
            for (d, _) in kernel.entries() {
                targets.push(torus.shift(x, d) as u32);
            }
        }
        Ok(Self {
            rng,
            now: 0.0,
            last: 0.0,
            pending: None,
            n_sites: torus.len(),
            n_disp,
            targets,
            kernel,
            emitted: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.now
    }

    pub fn kernel(&self) -> &JumpKernel<T> {
        &self.kernel
    }

    /// Total event rate: `sum_x sum_y p(y - x)` = number of sites.
    pub fn total_rate(&self) -> f64 {
        self.n_sites as f64
    }

    /// Number of events handed out so far.
    pub fn events_emitted(&self) -> u64 {
        self.emitted
    }

    fn generate(&mut self) -> GraphicalEvent<T> {
        let gap = -open_unit(self.rng.gen::<u64>()).ln() / self.n_sites as f64;
        self.last += gap;
        let origin = self.rng.gen_range(0..self.n_sites);
        let displacement = self.kernel.select(self.rng.gen::<f64>());
        let mark = T::lit(self.rng.gen::<f64>());
        GraphicalEvent {
            time: self.last,
            origin,
            target: self.targets[origin * self.n_disp + displacement] as usize,
            displacement,
            mark,
        }
    }

    /// Next event, advancing the stream time to it.
    pub fn next_event(&mut self) -> GraphicalEvent<T> {
        let ev = self.pending.take().unwrap_or_else(|| self.generate());
        self.now = ev.time;
        self.emitted += 1;
        ev
    }

    /// Next event if it occurs no later than `t_end`; otherwise the stream
    /// time moves to `t_end` and the event is held back.
    pub fn next_before(&mut self, t_end: f64) -> Option<GraphicalEvent<T>> {
        let ev = match self.pending.take() {
            Some(ev) => ev,
            None => self.generate(),
        };
        if ev.time <= t_end {
            self.now = ev.time;
            self.emitted += 1;
            Some(ev)
        } else {
            self.pending = Some(ev);
            if t_end > self.now {
                self.now = t_end;
            }
            None
        }
    }
}

/// Rule for the plain process: move one particle `x -> y` iff
/// `U < lambda_x g(eta(x))`. Returns whether the event fired.
#[inline]
pub fn apply_event<T: Scalar>(
    config: &mut Configuration,
    event: &GraphicalEvent<T>,
    field: &RateField<T>,
    g: &RateFunction<T>,
) -> bool {
    let x = event.origin;
    let k = config.get(x);
    debug_assert!(!k.is_infinite(), "plain configuration holds inf at site {x}");
    if event.mark < field.rate(x) * g.eval(k) {
        config.move_particle(x, event.target);
        true
    } else {
        false
    }
}

/// Rule for the `alpha`-truncated process. Fast origins use `lambda_x`
/// (equal to `lambda^alpha_x` there); slow origins hold `inf` and fire iff
/// `U < (c + alpha) g(inf)`, creating a particle at the target.
#[inline]
pub fn apply_event_truncated<T: Scalar>(
    config: &mut Configuration,
    event: &GraphicalEvent<T>,
    field: &RateField<T>,
    alpha: T,
    g: &RateFunction<T>,
) -> Result<bool> {
    let x = event.origin;
    let y = event.target;
    let k = config.get(x);
    let threshold = if field.is_slow(x, alpha) {
        if !k.is_infinite() {
            return Err(Error::StateCorruption(format!("slow site {x} holds finite occupancy {k}")));
        }
        (field.c() + alpha) * g.limit()
    } else {
        if k.is_infinite() {
            return Err(Error::StateCorruption(format!("fast site {x} holds inf")));
        }
        field.rate(x) * g.eval(k)
    };
    if event.mark < threshold {
        if config.get(y).is_infinite() && !field.is_slow(y, alpha) {
            return Err(Error::StateCorruption(format!("fast site {y} holds inf")));
        }
        config.move_particle(x, y);
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Truncation operator: keeps fast sites, sets slow sites to `inf`.
pub fn truncate_configuration<T: Scalar>(
    config: &Configuration,
    field: &RateField<T>,
    alpha: T,
) -> Configuration {
    let mut out = config.clone();
    for x in 0..out.len() {
        if field.is_slow(x, alpha) {
            out.set(x, Occupancy::INF);
        }
    }
    out
}

/// Checks that `config` has `inf` exactly on the slow sites.
pub fn check_truncated_pattern<T: Scalar>(
    config: &Configuration,
    field: &RateField<T>,
    alpha: T,
) -> Result<()> {
    for x in 0..config.len() {
        if config.get(x).is_infinite() != field.is_slow(x, alpha) {
            return Err(Error::StateCorruption(format!(
                "site {x}: occupancy {} but slow = {}",
                config.get(x),
                field.is_slow(x, alpha)
            )));
        }
    }
    Ok(())
}

/// Applies every event up to `t_end` in time order. `alpha = None` runs the
/// plain process; `Some(alpha)` the truncated one. `observe` sees each event
/// after it was applied, with its firing outcome.
pub fn evolve_observed<T: Scalar, F>(
    config: &mut Configuration,
    field: &RateField<T>,
    alpha: Option<T>,
    g: &RateFunction<T>,
    t_end: f64,
    stream: &mut EventStream<T>,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(&GraphicalEvent<T>, bool, &Configuration),
{
    if t_end < stream.time() {
        return Err(Error::Domain(format!("t_end {t_end} precedes stream time {}", stream.time())));
    }
    match alpha {
        None => {
            if config.has_infinite() {
                return Err(Error::StateCorruption("plain configuration holds inf".into()));
            }
            while let Some(ev) = stream.next_before(t_end) {
                let fired = apply_event(config, &ev, field, g);
                observe(&ev, fired, config);
            }
        }
        Some(alpha) => {
            check_truncated_pattern(config, field, alpha)?;
            while let Some(ev) = stream.next_before(t_end) {
                let fired = apply_event_truncated(config, &ev, field, alpha, g)?;
                observe(&ev, fired, config);
            }
        }
    }
    Ok(())
}

pub fn evolve<T: Scalar>(
    config: &mut Configuration,
    field: &RateField<T>,
    alpha: Option<T>,
    g: &RateFunction<T>,
    t_end: f64,
    stream: &mut EventStream<T>,
) -> Result<()> {
    evolve_observed(config, field, alpha, g, t_end, stream, |_, _, _| {})
}

/// Writes the `t,site_index,occupancy` trajectory CSV, sampling the
/// configuration at `0, dt, 2 dt, ...` up to `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn write_trajectory<T: Scalar, W: Write>(
    mut out: W,
    config: &mut Configuration,
    field: &RateField<T>,
    alpha: Option<T>,
    g: &RateFunction<T>,
    t_end: f64,
    sample_every: f64,
    stream: &mut EventStream<T>,
) -> Result<()> {
    if !(sample_every > 0.0) {
        return Err(Error::Config(format!("sample_every must be positive, got {sample_every}")));
    }
    writeln!(out, "t,site_index,occupancy")?;
    let mut n = 0u64;
    loop {
        let t = n as f64 * sample_every;
        if t > t_end {
            break;
        }
        evolve(config, field, alpha, g, t, stream)?;
        for (x, k) in config.occupancies().iter().enumerate() {
            writeln!(out, "{t},{x},{k}")?;
        }
        n += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvDistribution, RateField};
    use crate::rng;

    fn field(rates: &[f64]) -> RateField<f64> {
        let torus = Torus::new(&[rates.len()]).unwrap();
        RateField::from_rates(torus, rates.to_vec(), EnvDistribution::power_law(0.2, 3.0).unwrap())
            .unwrap()
    }

    fn event(origin: usize, target: usize, mark: f64) -> GraphicalEvent<f64> {
        GraphicalEvent { time: 1.0, origin, target, displacement: 0, mark }
    }

    #[test]
    fn infinity_arithmetic() {
        let mut k = Occupancy::INF;
        k.increment();
        assert!(k.is_infinite());
        k.decrement();
        assert!(k.is_infinite());
        assert_eq!(k.to_string(), "inf");
        assert!(Occupancy::new(5) < Occupancy::INF);
    }

    #[test]
    fn empty_origin_never_fires() {
        let f = field(&[0.8, 0.8]);
        let mut c = Configuration::from_counts(f.torus().clone(), &[0, 4]).unwrap();
        for mark in [0.0, 0.1, 0.5, 0.99] {
            assert!(!apply_event(&mut c, &event(0, 1, mark), &f, &RateFunction::Geometric));
        }
        assert_eq!(c.get(1), Occupancy::new(4));
    }

    #[test]
    fn mark_above_rate_never_fires() {
        let f = field(&[0.5, 0.8]);
        let mut c = Configuration::from_counts(f.torus().clone(), &[7, 0]).unwrap();
        assert!(!apply_event(&mut c, &event(0, 1, 0.9), &f, &RateFunction::Geometric));
    }

    #[test]
    fn firing_moves_one_particle() {
        let f = field(&[0.8, 0.8, 0.8]);
        let mut c = Configuration::from_counts(f.torus().clone(), &[3, 1, 0]).unwrap();
        assert!(apply_event(&mut c, &event(0, 1, 0.1), &f, &RateFunction::Geometric));
        assert_eq!(c.get(0), Occupancy::new(2));
        assert_eq!(c.get(1), Occupancy::new(2));
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn slow_origin_creation_rule() {
        // c = 0.2, alpha = 0.05: site 0 slow, site 1 fast
        let f = field(&[0.22, 0.9]);
        let g = RateFunction::Geometric;
        let base = truncate_configuration(
            &Configuration::from_counts(f.torus().clone(), &[2, 1]).unwrap(),
            &f,
            0.05,
        );
        assert!(base.get(0).is_infinite());

        let mut c = base.clone();
        assert!(!apply_event_truncated(&mut c, &event(0, 1, 0.3), &f, 0.05, &g).unwrap());
        assert_eq!(c, base);

        let mut c = base.clone();
        assert!(apply_event_truncated(&mut c, &event(0, 1, 0.2), &f, 0.05, &g).unwrap());
        assert_eq!(c.get(1), Occupancy::new(2));
        assert!(c.get(0).is_infinite());
    }

    #[test]
    fn fast_origin_matches_plain_rule() {
        let f = field(&[0.22, 0.9, 0.6]);
        let g = RateFunction::KOverK1;
        let plain = Configuration::from_counts(f.torus().clone(), &[0, 3, 1]).unwrap();
        let trunc = truncate_configuration(&plain, &f, 0.05);
        for mark in [0.1, 0.5, 0.67, 0.68, 0.9] {
            let mut a = plain.clone();
            let mut b = trunc.clone();
            let fa = apply_event(&mut a, &event(1, 2, mark), &f, &g);
            let fb = apply_event_truncated(&mut b, &event(1, 2, mark), &f, 0.05, &g).unwrap();
            assert_eq!(fa, fb);
            assert_eq!(a.get(2), b.get(2));
        }
    }

    #[test]
    fn inf_at_fast_site_is_corruption() {
        let f = field(&[0.22, 0.9]);
        let mut c = Configuration::from_occupancies(
            f.torus().clone(),
            vec![Occupancy::INF, Occupancy::INF],
        )
        .unwrap();
        let r = apply_event_truncated(&mut c, &event(1, 0, 0.1), &f, 0.05, &RateFunction::Geometric);
        assert!(matches!(r, Err(Error::StateCorruption(_))));
    }

    #[test]
    fn truncation_operator() {
        let f = field(&[0.22, 0.9, 0.24]);
        let c = Configuration::from_counts(f.torus().clone(), &[5, 2, 0]).unwrap();
        let t = truncate_configuration(&c, &f, 0.05);
        assert!(t.get(0).is_infinite());
        assert_eq!(t.get(1), Occupancy::new(2));
        assert!(t.get(2).is_infinite());
        assert!(c.is_dominated_by(&t));
        // no slow sites: identity
        assert_eq!(truncate_configuration(&c, &f, 0.01), c);
    }

    #[test]
    fn stream_rate_and_replay() {
        let torus = Torus::new(&[4]).unwrap();
        let k = JumpKernel::<f64>::nearest_neighbor(1).unwrap();
        let mut a = EventStream::new(&torus, k.clone(), rng::stream(1, rng::tag::DYNAMICS, 0)).unwrap();
        let mut b = EventStream::new(&torus, k, rng::stream(1, rng::tag::DYNAMICS, 0)).unwrap();
        assert_eq!(a.total_rate(), 4.0);
        let mut prev = 0.0;
        for _ in 0..1000 {
            let ea = a.next_event();
            assert_eq!(ea, b.next_event());
            assert!(ea.time > prev);
            assert!(ea.mark >= 0.0 && ea.mark < 1.0);
            let d = (ea.target as i64 - ea.origin as i64).rem_euclid(4);
            assert!(d == 1 || d == 3);
            prev = ea.time;
        }
    }

    #[test]
    fn next_before_holds_back_late_event() {
        let torus = Torus::new(&[4]).unwrap();
        let k = JumpKernel::<f64>::nearest_neighbor(1).unwrap();
        let mut a = EventStream::new(&torus, k.clone(), rng::stream(2, 0, 0)).unwrap();
        let mut b = EventStream::new(&torus, k, rng::stream(2, 0, 0)).unwrap();
        let mut seen = Vec::new();
        for t in [0.5, 1.0, 1.5, 2.0] {
            while let Some(ev) = a.next_before(t) {
                seen.push(ev);
            }
            assert_eq!(a.time(), t);
        }
        let direct: Vec<_> = std::iter::repeat_with(|| b.next_event()).take(seen.len() + 1).collect();
        assert_eq!(&direct[..seen.len()], &seen[..]);
        assert!(direct[seen.len()].time > 2.0);
    }

    #[test]
    fn evolve_to_current_time_is_identity() {
        let f = field(&[0.5, 0.7, 0.9]);
        let k = JumpKernel::nearest_neighbor(1).unwrap();
        let mut s = EventStream::new(f.torus(), k, rng::stream(3, 0, 0)).unwrap();
        let c0 = Configuration::from_counts(f.torus().clone(), &[1, 2, 3]).unwrap();
        let mut c = c0.clone();
        evolve(&mut c, &f, None, &RateFunction::Geometric, 0.0, &mut s).unwrap();
        assert_eq!(c, c0);
        assert!(evolve(&mut c, &f, None, &RateFunction::Geometric, 5.0, &mut s).is_ok());
        assert!(evolve(&mut c, &f, None, &RateFunction::Geometric, 1.0, &mut s).is_err());
    }

    #[test]
    fn empty_configuration_stays_empty() {
        let f = field(&[0.5, 0.7, 0.9, 0.3]);
        let k = JumpKernel::nearest_neighbor(1).unwrap();
        let mut s = EventStream::new(f.torus(), k, rng::stream(4, 0, 0)).unwrap();
        let mut c = Configuration::empty(f.torus().clone());
        evolve(&mut c, &f, None, &RateFunction::Geometric, 100.0, &mut s).unwrap();
        assert_eq!(c.total(), 0);
    }

    #[test]
    fn trajectory_csv_format() {
        let f = field(&[0.22, 0.9]);
        let k = JumpKernel::nearest_neighbor(1).unwrap();
        let mut s = EventStream::new(f.torus(), k, rng::stream(5, 0, 0)).unwrap();
        let mut c = truncate_configuration(
            &Configuration::from_counts(f.torus().clone(), &[0, 1]).unwrap(),
            &f,
            0.05,
        );
        let mut out = Vec::new();
        write_trajectory(&mut out, &mut c, &f, Some(0.05), &RateFunction::Geometric, 2.0, 1.0, &mut s)
            .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,site_index,occupancy");
        assert_eq!(lines[1], "0,0,inf");
        assert_eq!(lines[2], "0,1,1");
        assert_eq!(lines.len(), 1 + 3 * 2);
    }
}
