mod common;

use common::{affine_case, flat_model};
use deform_core::{run_funnel, Error, FailureReason, FunnelEvent, FunnelOutcome, FunnelPolicy, JacobianStore, Plant, ProbeConfig};
use proptest::prelude::*;

fn ticks(o: &FunnelOutcome) -> Vec<(usize, usize, bool)> {
    o.trace
        .iter()
        .filter_map(|e| match e {
            FunnelEvent::Tick { tick, jacobian_id, improved, .. } => Some((*tick, *jacobian_id, *improved)),
            _ => None,
        })
        .collect()
}

/// A probe after the first one is only allowed once the `stall` ticks
/// before it all failed to improve.
fn assert_reuse_before_probe(o: &FunnelOutcome, stall: usize) {
    let t = ticks(o);
    for e in &o.trace {
        if let FunnelEvent::Probe { tick, .. } = e {
            if *tick == 0 {
                continue;
            }
            let before: Vec<_> = t.iter().filter(|(k, _, _)| k <= tick).rev().take(stall).collect();
            assert_eq!(before.len(), stall, "probe at {tick} without enough ticks");
            assert!(before.iter().all(|(_, _, imp)| !imp), "probe at {tick} while improving");
        }
    }
}

#[test]
fn affine_plant_converges_with_one_probe() {
    let (mut plant, target) = affine_case(1, 3, 3, &[0.3, 0.5, 0.6], &[0.5, 0.45, 0.55]);
    let mut store = JacobianStore::new();
    let o = run_funnel(&mut plant, &flat_model(3, 3), &target, &mut store, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    assert!(o.success, "{o:?}");
    assert_eq!(o.probes, 1);
    assert_eq!(o.distinct_jacobians_used, 1);
    assert!(o.final_error_norm <= target.success_threshold);
    assert_eq!(store.len(), 1);
}

#[test]
fn start_inside_threshold_needs_no_work() {
    let (mut plant, target) = affine_case(2, 2, 2, &[0.5, 0.5], &[0.5, 0.5]);
    let mut store = JacobianStore::new();
    let o = run_funnel(&mut plant, &flat_model(2, 2), &target, &mut store, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    assert!(o.success);
    assert_eq!((o.ticks, o.probes), (0, 0));
    assert_eq!(plant.actuations, 0);
}

#[test]
fn zero_jacobian_cap_fails_without_touching_the_plant() {
    let (mut plant, target) = affine_case(3, 2, 2, &[0.3, 0.3], &[0.6, 0.6]);
    let policy = FunnelPolicy { max_distinct_jacobians: 0, ..FunnelPolicy::default() };
    let mut store = JacobianStore::new();
    let o = run_funnel(&mut plant, &flat_model(2, 2), &target, &mut store, &policy, &ProbeConfig::default()).unwrap();
    assert!(!o.success);
    assert_eq!(o.failure, Some(FailureReason::JacobianCap));
    assert_eq!(plant.actuations, 0);
    assert!(store.is_empty());
}

#[test]
fn everything_disabled_is_an_error() {
    let (mut plant, target) = affine_case(4, 2, 2, &[0.3, 0.3], &[0.6, 0.6]);
    plant.disable(&[0]).unwrap();
    let t = deform_core::ControlTarget { cols: vec![0], ..target };
    let mut store = JacobianStore::new();
    let r = run_funnel(&mut plant, &flat_model(2, 2), &t, &mut store, &FunnelPolicy::default(), &ProbeConfig::default());
    assert!(matches!(r, Err(Error::AllDisabled)), "{r:?}");
}

#[test]
fn unreachable_target_runs_out_of_jacobians_or_ticks() {
    // The goal lies outside the unit actuation box.
    let (mut plant, target) = affine_case(5, 2, 2, &[0.5, 0.5], &[1.8, -0.7]);
    let mut store = JacobianStore::new();
    let o = run_funnel(&mut plant, &flat_model(2, 2), &target, &mut store, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    assert!(!o.success);
    assert!(matches!(o.failure, Some(FailureReason::JacobianCap | FailureReason::TickBudget)));
    assert!(o.distinct_jacobians_used <= 5 && o.ticks <= 200);
    assert!(plant.actuation().within_bounds());
}

#[test]
fn warm_store_is_reused() {
    let (mut plant, target) = affine_case(6, 3, 2, &[0.2, 0.7], &[0.6, 0.4]);
    let model = flat_model(2, 3);
    let mut store = JacobianStore::new();
    let start = plant.actuation().values().to_vec();
    let cold = run_funnel(&mut plant, &model, &target, &mut store, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    plant.actuate(&start).unwrap();
    let warm = run_funnel(&mut plant, &model, &target, &mut store, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    assert!(cold.success && warm.success);
    assert!(warm.probes <= cold.probes);
    assert!(matches!(warm.trace[0], FunnelEvent::Reuse { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn funnel_invariants_on_affine_plants(
        seed in 0u64..1000,
        n in 2usize..5,
        m in 1usize..4,
        start in proptest::collection::vec(0.1f64..0.9, 3),
        goal in proptest::collection::vec(0.1f64..0.9, 3),
    ) {
        let (mut plant, target) = affine_case(seed, n, m, &start[..m], &goal[..m]);
        let model = flat_model(m, n);
        let mut store = JacobianStore::new();
        let before = store.clone();
        let policy = FunnelPolicy::default();
        let o = run_funnel(&mut plant, &model, &target, &mut store, &policy, &ProbeConfig::default()).unwrap();
        // Accounting and caps.
        prop_assert_eq!(o.distinct_jacobians_used, o.jacobian_ids().len());
        prop_assert!(o.distinct_jacobians_used <= policy.max_distinct_jacobians);
        prop_assert!(o.ticks <= policy.tick_budget);
        prop_assert_eq!(store.len(), before.len() + o.probes);
        prop_assert_eq!(o.success, o.final_error_norm <= target.success_threshold);
        prop_assert!(plant.actuation().within_bounds());
        assert_reuse_before_probe(&o, policy.stall_ticks);

        // A second run from the same start neither drops records nor
        // probes more.
        let snapshot: Vec<_> = store.records().iter().map(|r| r.jacobian.clone()).collect();
        plant.actuate(&start[..m]).unwrap();
        let warm = run_funnel(&mut plant, &model, &target, &mut store, &policy, &ProbeConfig::default()).unwrap();
        prop_assert!(store.len() >= snapshot.len());
        for (r, j) in store.records().iter().zip(&snapshot) {
            prop_assert_eq!(&r.jacobian, j);
        }
        if o.success {
            prop_assert!(warm.probes <= o.probes);
        }
    }
}
