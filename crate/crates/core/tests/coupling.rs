use proptest::prelude::*;
use zrp::coupling::{coupled_apply_event, init_coupled, CoupledOutcome, DiscrepancyStatus};
use zrp::dynamics::{apply_event, apply_event_truncated, truncate_configuration, EventStream};
use zrp::environment::{sample_environment, EnvDistribution, JumpKernel, RateField, Torus};
use zrp::measures::{sample_truncated_invariant, RateFunction};
use zrp::rng::{self, tag};
use zrp::Configuration;

fn rate_functions() -> impl Strategy<Value = RateFunction<f64>> {
    prop_oneof![
        Just(RateFunction::Geometric),
        Just(RateFunction::KOverK1),
        proptest::collection::vec(0.05f64..1.0, 1..5).prop_map(|mut v| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            RateFunction::table(v).unwrap()
        }),
    ]
}

fn small_field(rates: Vec<f64>) -> RateField<f64> {
    let torus = Torus::new(&[rates.len()]).unwrap();
    RateField::from_rates(torus, rates, EnvDistribution::power_law(0.2, 2.0).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Ordered starts stay ordered under the shared graphical construction.
    #[test]
    fn attractive_for_nondecreasing_g(
        rates in proptest::collection::vec(0.21f64..1.0, 3..9),
        low in proptest::collection::vec(0u64..4, 9),
        extra in proptest::collection::vec(0u64..3, 9),
        g in rate_functions(),
        seed in any::<u64>(),
    ) {
        let field = small_field(rates);
        let n = field.len();
        let torus = field.torus().clone();
        let mut eta = Configuration::from_counts(torus.clone(), &low[..n]).unwrap();
        let high: Vec<u64> = (0..n).map(|i| low[i] + extra[i]).collect();
        let mut xi = Configuration::from_counts(torus.clone(), &high).unwrap();
        let mut stream = EventStream::new(&torus, JumpKernel::one_d(0.7).unwrap(), rng::stream(seed, 0, 0)).unwrap();
        for _ in 0..2000 {
            let ev = stream.next_event();
            apply_event(&mut xi, &ev, &field, &g);
            apply_event(&mut eta, &ev, &field, &g);
            prop_assert!(eta.is_dominated_by(&xi));
        }
    }

    /// The ledger matches `xi - eta` after every event, and the number of
    /// live discrepancies never grows.
    #[test]
    fn ledger_tracks_occupancy_difference(
        rates in proptest::collection::vec(0.21f64..1.0, 3..9),
        a in proptest::collection::vec(0u64..5, 9),
        b in proptest::collection::vec(0u64..5, 9),
        g in rate_functions(),
        alpha in 0.0f64..0.3,
        seed in any::<u64>(),
    ) {
        let field = small_field(rates);
        let n = field.len();
        let torus = field.torus().clone();
        let xi = truncate_configuration(&Configuration::from_counts(torus.clone(), &a[..n]).unwrap(), &field, alpha);
        let eta = truncate_configuration(&Configuration::from_counts(torus.clone(), &b[..n]).unwrap(), &field, alpha);
        let mut state = init_coupled(xi, eta, &field, alpha, rng::stream(seed, tag::LABELS, 0), true).unwrap();
        state.check_ledger().unwrap();
        let mut stream = EventStream::new(&torus, JumpKernel::one_d(0.4).unwrap(), rng::stream(seed, 0, 1)).unwrap();
        let mut active = state.active_discrepancies();
        for _ in 0..2000 {
            let ev = stream.next_event();
            let outcome = coupled_apply_event(&mut state, &ev, &field, alpha, &g).unwrap();
            state.check_ledger().unwrap();
            let now = state.active_discrepancies();
            prop_assert!(now <= active);
            match outcome {
                CoupledOutcome::DiscrepancyJump { fate: DiscrepancyStatus::Active, .. } => prop_assert_eq!(now, active),
                CoupledOutcome::DiscrepancyJump { fate: DiscrepancyStatus::Coalesced, .. } => prop_assert_eq!(now + 2, active),
                CoupledOutcome::DiscrepancyJump { fate: DiscrepancyStatus::Absorbed, .. } => prop_assert_eq!(now + 1, active),
                _ => prop_assert_eq!(now, active),
            }
            active = now;
        }
        let inactive = state.records().iter().filter(|r| r.status != DiscrepancyStatus::Active).count() as u64;
        prop_assert_eq!(inactive, 2 * state.n_coalesced() + state.n_absorbed());
        for r in state.records() {
            prop_assert_eq!(r.skeleton.len(), r.jumps as usize + 1);
            prop_assert_eq!(*r.skeleton.last().unwrap() as usize, r.position);
            if r.status == DiscrepancyStatus::Absorbed {
                prop_assert!(field.is_slow(r.position, alpha));
            }
        }
    }

    /// Raising the truncation level can only add particles.
    #[test]
    fn truncated_processes_ordered_in_alpha(
        rates in proptest::collection::vec(0.21f64..1.0, 3..9),
        counts in proptest::collection::vec(0u64..4, 9),
        g in rate_functions(),
        a1 in 0.0f64..0.4,
        gap in 0.0f64..0.4,
        seed in any::<u64>(),
    ) {
        let field = small_field(rates);
        let n = field.len();
        let torus = field.torus().clone();
        let a2 = a1 + gap;
        let start = Configuration::from_counts(torus.clone(), &counts[..n]).unwrap();
        let mut low = truncate_configuration(&start, &field, a1);
        let mut high = truncate_configuration(&start, &field, a2);
        let mut stream = EventStream::new(&torus, JumpKernel::one_d(0.5).unwrap(), rng::stream(seed, 0, 2)).unwrap();
        for _ in 0..2000 {
            let ev = stream.next_event();
            apply_event_truncated(&mut low, &ev, &field, a1, &g).unwrap();
            apply_event_truncated(&mut high, &ev, &field, a2, &g).unwrap();
            prop_assert!(low.is_dominated_by(&high));
        }
    }
}

/// Discrepancy steps are kernel steps, so their empirical step law is `p`.
#[test]
fn skeleton_steps_follow_kernel() {
    let dist = EnvDistribution::power_law(0.2, 1.0).unwrap();
    let field = sample_environment(&dist, &[64], 21).unwrap();
    let alpha = 0.05;
    let g = RateFunction::Geometric;
    let mut init = rng::stream(21, tag::INITIAL, 0);
    let (mut right, mut total) = (0u64, 0u64);
    for r in 0..20 {
        let xi = sample_truncated_invariant(&field, alpha, &g, &mut init).unwrap();
        let eta = sample_truncated_invariant(&field, alpha, &g, &mut init).unwrap();
        let mut state = init_coupled(xi, eta, &field, alpha, rng::stream(21, tag::LABELS, r), true).unwrap();
        let mut stream =
            EventStream::new(field.torus(), JumpKernel::one_d(0.7).unwrap(), rng::stream(21, tag::DYNAMICS, r)).unwrap();
        while let Some(ev) = stream.next_before(200.0) {
            coupled_apply_event(&mut state, &ev, &field, alpha, &g).unwrap();
        }
        for rec in state.records() {
            for w in rec.skeleton.windows(2) {
                let step = (w[1] as i64 - w[0] as i64).rem_euclid(64);
                assert!(step == 1 || step == 63, "non-kernel step {w:?}");
                right += (step == 1) as u64;
                total += 1;
            }
        }
    }
    assert!(total > 2000, "only {total} discrepancy steps");
    let p = 0.7;
    let sd = (total as f64 * p * (1.0 - p)).sqrt();
    assert!((right as f64 - p * total as f64).abs() < 4.0 * sd, "{right} of {total}");
}
