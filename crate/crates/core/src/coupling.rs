//! Basic coupling of two truncated processes driven by one event stream.
//!
//! Particles present in both marginals are coupled (first class); the
//! surplus of one marginal over the other at a site is a stack of labeled
//! discrepancies (second class). Discrepancies move only on events where
//! exactly one marginal fires, vanish on reaching a slow site, and
//! annihilate pairwise with the opposite type into a coupled particle.

use rand::Rng;

use crate::dynamics::{
    apply_event, apply_event_truncated, check_truncated_pattern, truncate_configuration,
    Configuration, EventStream, GraphicalEvent,
};
use crate::environment::RateField;
use crate::error::{Error, Result};
use crate::measures::RateFunction;
use crate::rng::SimRng;
use crate::scalar::Scalar;

/// Which marginal holds the surplus particle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiscrepancyKind {
    /// `xi(x) > eta(x)`.
    XiEta,
    /// `eta(x) > xi(x)`.
    EtaXi,
}

impl DiscrepancyKind {
    pub fn opposite(self) -> Self {
        match self {
            DiscrepancyKind::XiEta => DiscrepancyKind::EtaXi,
            DiscrepancyKind::EtaXi => DiscrepancyKind::XiEta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscrepancyStatus {
    Active,
    Coalesced,
    Absorbed,
}

/// History of one labeled discrepancy `(origin, index)`.
#[derive(Clone, Debug)]
pub struct DiscrepancyRecord {
    pub origin: usize,
    /// 1-based index among the discrepancies initially at `origin`.
    pub index: u32,
    pub kind: DiscrepancyKind,
    /// Current site, or the site where it coalesced or was absorbed.
    pub position: usize,
    pub status: DiscrepancyStatus,
    pub jumps: u32,
    /// Sites visited, starting with `origin`; empty unless skeletons are tracked.
    pub skeleton: Vec<u32>,
}

/// What a single event did to the coupled pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoupledOutcome {
    Nothing,
    /// Both marginals fired (a coupled particle moved, or was created).
    CoupledJump,
    /// One marginal fired; the labeled discrepancy moved and then survived,
    /// coalesced or was absorbed.
    DiscrepancyJump { record: u32, fate: DiscrepancyStatus },
}

#[derive(Clone, Debug)]
pub struct CoupledState {
    xi: Configuration,
    eta: Configuration,
    records: Vec<DiscrepancyRecord>,
    residents: Vec<Vec<u32>>,
    n_coalesced: u64,
    n_absorbed: u64,
    track_skeletons: bool,
    label_rng: SimRng,
}

impl CoupledState {
    pub fn xi(&self) -> &Configuration {
        &self.xi
    }

    pub fn eta(&self) -> &Configuration {
        &self.eta
    }

    pub fn records(&self) -> &[DiscrepancyRecord] {
        &self.records
    }

    /// Coupled count `min(xi(x), eta(x))`.
    pub fn coupled(&self, x: usize) -> crate::Occupancy {
        self.xi.get(x).min(self.eta.get(x))
    }

    /// `(#xi-eta, #eta-xi)` at `x`.
    pub fn discrepancies_at(&self, x: usize) -> (usize, usize) {
        let stack = &self.residents[x];
        match stack.first() {
            None => (0, 0),
            Some(&id) => match self.records[id as usize].kind {
                DiscrepancyKind::XiEta => (stack.len(), 0),
                DiscrepancyKind::EtaXi => (0, stack.len()),
            },
        }
    }

    pub fn active_discrepancies(&self) -> usize {
        self.residents.iter().map(Vec::len).sum()
    }

    pub fn n_coalesced(&self) -> u64 {
        self.n_coalesced
    }

    pub fn n_absorbed(&self) -> u64 {
        self.n_absorbed
    }

    /// Ledger consistency: one discrepancy type per site, and the stack
    /// sizes equal the occupancy differences at every finite site.
    pub fn check_ledger(&self) -> Result<()> {
        for x in 0..self.xi.len() {
            let (a, b) = (self.xi.get(x), self.eta.get(x));
            let (n_xe, n_ex) = self.discrepancies_at(x);
            if a.is_infinite() || b.is_infinite() {
                if a != b || n_xe + n_ex != 0 {
                    return Err(Error::StateCorruption(format!("slow site {x} carries discrepancies")));
                }
                continue;
            }
            let (a, b) = (a.count().unwrap() as i64, b.count().unwrap() as i64);
            if a - b != n_xe as i64 - n_ex as i64 {
                return Err(Error::StateCorruption(format!(
                    "site {x}: xi - eta = {} but ledger has {n_xe} xi-eta and {n_ex} eta-xi",
                    a - b
                )));
            }
            if self.residents[x]
                .iter()
                .any(|&id| self.records[id as usize].status != DiscrepancyStatus::Active)
            {
                return Err(Error::StateCorruption(format!("inactive record resident at {x}")));
            }
        }
        Ok(())
    }

    fn take_resident(&mut self, x: usize) -> u32 {
        let stack = &mut self.residents[x];
        let i = self.label_rng.gen_range(0..stack.len());
        stack.swap_remove(i)
    }

    fn move_discrepancy<T: Scalar>(
        &mut self,
        x: usize,
        y: usize,
        field: &RateField<T>,
        alpha: T,
    ) -> CoupledOutcome {
        let id = self.take_resident(x);
        let kind = self.records[id as usize].kind;
        let fate = if field.is_slow(y, alpha) {
            self.n_absorbed += 1;
            DiscrepancyStatus::Absorbed
        } else {
            let opposite_here = self.residents[y]
                .first()
                .is_some_and(|&other| self.records[other as usize].kind == kind.opposite());
            if opposite_here {
                let partner = self.take_resident(y);
                let rec = &mut self.records[partner as usize];
                rec.status = DiscrepancyStatus::Coalesced;
                self.n_coalesced += 1;
                DiscrepancyStatus::Coalesced
            } else {
                self.residents[y].push(id);
                DiscrepancyStatus::Active
            }
        };
        let rec = &mut self.records[id as usize];
        rec.position = y;
        rec.status = fate;
        rec.jumps += 1;
        if self.track_skeletons {
            rec.skeleton.push(y as u32);
        }
        CoupledOutcome::DiscrepancyJump { record: id, fate }
    }
}

/// Builds the coupled state and its initial ledger: `|xi0(y) - eta0(y)|`
/// labeled discrepancies at each finite site `y`.
pub fn init_coupled<T: Scalar>(
    xi0: Configuration,
    eta0: Configuration,
    field: &RateField<T>,
    alpha: T,
    label_rng: SimRng,
    track_skeletons: bool,
) -> Result<CoupledState> {
    if xi0.len() != field.len() || eta0.len() != field.len() {
        return Err(Error::Config("configuration size does not match the field".into()));
    }
    check_truncated_pattern(&xi0, field, alpha)?;
    check_truncated_pattern(&eta0, field, alpha)?;
    let mut records = Vec::new();
    let mut residents = vec![Vec::new(); field.len()];
    for y in 0..field.len() {
        let (Some(a), Some(b)) = (xi0.get(y).count(), eta0.get(y).count()) else {
            continue;
        };
        let kind = if a > b { DiscrepancyKind::XiEta } else { DiscrepancyKind::EtaXi };
        for i in 1..=a.abs_diff(b) {
            residents[y].push(records.len() as u32);
            records.push(DiscrepancyRecord {
                origin: y,
                index: i as u32,
                kind,
                position: y,
                status: DiscrepancyStatus::Active,
                jumps: 0,
                skeleton: if track_skeletons { vec![y as u32] } else { Vec::new() },
            });
        }
    }
    Ok(CoupledState {
        xi: xi0,
        eta: eta0,
        records,
        residents,
        n_coalesced: 0,
        n_absorbed: 0,
        track_skeletons,
        label_rng,
    })
}

/// Applies one event to both marginals with the same mark.
pub fn coupled_apply_event<T: Scalar>(
    state: &mut CoupledState,
    event: &GraphicalEvent<T>,
    field: &RateField<T>,
    alpha: T,
    g: &RateFunction<T>,
) -> Result<CoupledOutcome> {
    let x = event.origin;
    let y = event.target;
    if field.is_slow(x, alpha) {
        let fired = apply_event_truncated(&mut state.xi, event, field, alpha, g)?;
        let fired_eta = apply_event_truncated(&mut state.eta, event, field, alpha, g)?;
        debug_assert_eq!(fired, fired_eta);
        return Ok(if fired { CoupledOutcome::CoupledJump } else { CoupledOutcome::Nothing });
    }
    let (Some(a), Some(b)) = (state.xi.get(x).count(), state.eta.get(x).count()) else {
        return Err(Error::StateCorruption(format!("fast site {x} holds inf")));
    };
    let rate = field.rate(x);
    let fires_xi = event.mark < rate * g.at(a);
    let fires_eta = event.mark < rate * g.at(b);
    match (fires_xi, fires_eta) {
        (false, false) => Ok(CoupledOutcome::Nothing),
        (true, true) => {
            state.xi.move_particle(x, y);
            state.eta.move_particle(x, y);
            Ok(CoupledOutcome::CoupledJump)
        }
        (true, false) => {
            state.xi.move_particle(x, y);
            Ok(state.move_discrepancy(x, y, field, alpha))
        }
        (false, true) => {
            state.eta.move_particle(x, y);
            Ok(state.move_discrepancy(x, y, field, alpha))
        }
    }
}

/// One sample row of the coupling report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeSample {
    pub t: f64,
    pub probe: usize,
    pub n_xi_eta: usize,
    pub n_eta_xi: usize,
}

#[derive(Clone, Debug)]
pub struct CouplingReport {
    pub samples: Vec<ProbeSample>,
    pub probes: Vec<usize>,
    /// Last time each probe held a discrepancy; `None` if it never did.
    pub last_discrepancy_time: Vec<Option<f64>>,
    pub n_coalesced: u64,
    pub n_absorbed: u64,
    /// Ledger inconsistencies detected (zero for a correct run).
    pub violations: u64,
    pub t_end: f64,
    pub final_state: CoupledState,
}

impl CouplingReport {
    /// Every probe is discrepancy-free on `[fraction * t_end, t_end]`.
    pub fn trailing_window_clean(&self, fraction: f64) -> bool {
        let start = fraction * self.t_end;
        self.last_discrepancy_time.iter().all(|t| t.is_none_or(|t| t < start))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,probe_site,n_xi_eta,n_eta_xi")?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", s.t, s.probe, s.n_xi_eta, s.n_eta_xi)?;
        }
        Ok(())
    }

    pub fn write_summary<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for (p, t) in self.probes.iter().zip(&self.last_discrepancy_time) {
            match t {
                Some(t) => writeln!(w, "last_discrepancy_time[{p}] = {t}")?,
                None => writeln!(w, "last_discrepancy_time[{p}] = none")?,
            }
        }
        writeln!(w, "n_coalesced = {}", self.n_coalesced)?;
        writeln!(w, "n_absorbed = {}", self.n_absorbed)?;
        writeln!(w, "violations = {}", self.violations)?;
        Ok(())
    }
}

/// Runs the coupled pair to `t_end`, sampling probe discrepancy counts
/// every `sample_every` and tracking the last time each probe held one.
#[allow(clippy::too_many_arguments)]
pub fn run_coupling<T: Scalar>(
    mut state: CoupledState,
    field: &RateField<T>,
    alpha: T,
    g: &RateFunction<T>,
    t_end: f64,
    sample_every: f64,
    probes: &[usize],
    stream: &mut EventStream<T>,
    check_every_event: bool,
) -> Result<CouplingReport> {
    if let Some(&p) = probes.iter().find(|&&p| p >= field.len() || field.is_slow(p, alpha)) {
        return Err(Error::Config(format!("probe {p} is not a fast site")));
    }
    if !(sample_every > 0.0) {
        return Err(Error::Config("sample_every must be positive".into()));
    }
    let mut is_probe = vec![usize::MAX; field.len()];
    for (i, &p) in probes.iter().enumerate() {
        is_probe[p] = i;
    }
    let held = |s: &CoupledState, p: usize| s.residents[p].len();
    let mut last: Vec<Option<f64>> =
        probes.iter().map(|&p| (held(&state, p) > 0).then_some(0.0)).collect();
    let mut samples = Vec::new();
    let mut violations = 0u64;
    let mut next_sample = 0.0;
    let record = |s: &CoupledState, t: f64, out: &mut Vec<ProbeSample>| {
        for &p in probes {
            let (a, b) = s.discrepancies_at(p);
            out.push(ProbeSample { t, probe: p, n_xi_eta: a, n_eta_xi: b });
        }
    };
    let mut n_sample = 0u64;
    while next_sample <= t_end {
        while let Some(ev) = stream.next_before(next_sample) {
            let before: [usize; 2] = [held(&state, ev.origin), held(&state, ev.target)];
            coupled_apply_event(&mut state, &ev, field, alpha, g)?;
            for (site, had) in [ev.origin, ev.target].into_iter().zip(before) {
                let i = is_probe[site];
                if i != usize::MAX && had > 0 {
                    last[i] = Some(ev.time);
                }
            }
            if check_every_event && state.check_ledger().is_err() {
                violations += 1;
            }
        }
        record(&state, next_sample, &mut samples);
        n_sample += 1;
        next_sample = n_sample as f64 * sample_every;
    }
    while let Some(ev) = stream.next_before(t_end) {
        let before: [usize; 2] = [held(&state, ev.origin), held(&state, ev.target)];
        coupled_apply_event(&mut state, &ev, field, alpha, g)?;
        for (site, had) in [ev.origin, ev.target].into_iter().zip(before) {
            let i = is_probe[site];
            if i != usize::MAX && had > 0 {
                last[i] = Some(ev.time);
            }
        }
    }
    for (i, &p) in probes.iter().enumerate() {
        if held(&state, p) > 0 {
            last[i] = Some(t_end);
        }
    }
    if state.check_ledger().is_err() {
        violations += 1;
    }
    Ok(CouplingReport {
        samples,
        probes: probes.to_vec(),
        last_discrepancy_time: last,
        n_coalesced: state.n_coalesced,
        n_absorbed: state.n_absorbed,
        violations,
        t_end,
        final_state: state,
    })
}

#[derive(Clone, Debug)]
pub struct DominationReport {
    /// Site-level order violations `eta_t(x) > eta^alpha_t(x)` found after events.
    pub violations: u64,
    pub events: u64,
    pub t_end: f64,
    /// Time integrals of the occupancy under the plain process.
    pub plain_integral: Vec<f64>,
    /// Same under the truncated process; `inf` at slow sites.
    pub truncated_integral: Vec<f64>,
    pub plain: Configuration,
    pub truncated: Configuration,
}

/// Evolves `eta` (plain) and `T^alpha eta` (truncated) on the same events
/// and counts sites where the plain process exceeds the truncated one.
/// Only the two sites touched by an event can change, so those are checked
/// after every event and the full configuration at the end.
pub fn domination_run<T: Scalar>(
    eta0: &Configuration,
    field: &RateField<T>,
    alpha: T,
    g: &RateFunction<T>,
    t_end: f64,
    stream: &mut EventStream<T>,
) -> Result<DominationReport> {
    if eta0.has_infinite() {
        return Err(Error::Config("initial configuration must be finite".into()));
    }
    let mut plain = eta0.clone();
    let mut trunc = truncate_configuration(eta0, field, alpha);
    let n = field.len();
    let mut plain_int = vec![0.0; n];
    let mut trunc_int = vec![0.0; n];
    let mut last_change = vec![stream.time(); n];
    let mut violations = plain.order_violations(&trunc) as u64;
    let mut events = 0u64;
    let occ_f = |c: &Configuration, x: usize| c.get(x).count().map_or(f64::INFINITY, |k| k as f64);
    while let Some(ev) = stream.next_before(t_end) {
        events += 1;
        for &s in &[ev.origin, ev.target] {
            let dt = ev.time - last_change[s];
            plain_int[s] += occ_f(&plain, s) * dt;
            trunc_int[s] += occ_f(&trunc, s) * dt;
            last_change[s] = ev.time;
        }
        apply_event(&mut plain, &ev, field, g);
        apply_event_truncated(&mut trunc, &ev, field, alpha, g)?;
        for &s in &[ev.origin, ev.target] {
            if plain.get(s) > trunc.get(s) {
                violations += 1;
            }
        }
    }
    for s in 0..n {
        let dt = t_end - last_change[s];
        plain_int[s] += occ_f(&plain, s) * dt;
        trunc_int[s] += occ_f(&trunc, s) * dt;
    }
    violations += plain.order_violations(&trunc) as u64;
    Ok(DominationReport {
        violations,
        events,
        t_end,
        plain_integral: plain_int,
        truncated_integral: trunc_int,
        plain,
        truncated: trunc,
    })
}
