//! The transposed-Jacobian step follows the true gradient of the cost after
//! the plant settles, with the free-motion derivative removed.

mod common;

use deform_core::jacobian::{control_error, cost, probe_jacobian};
use deform_core::synthetic::{affine_map, FnPlant};
use deform_core::{
    Bounds, ControlTarget, DeformationModel, FitConfig, FreeMotionModel, ModelGroup, NormalizationTable, Plant,
    ProbeConfig,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Free-motion model fitted to a smooth nonlinear map, so its derivative
/// is far from zero and not constant.
fn curved_model() -> &'static DeformationModel {
    static MODEL: std::sync::OnceLock<DeformationModel> = std::sync::OnceLock::new();
    MODEL.get_or_init(fit_curved_model)
}

fn fit_curved_model() -> DeformationModel {
    let f = |a: &[f64]| vec![(a[0] + 0.3 * a[1]).sin(), a[0] * a[1], 0.5 * a[1] * a[1]];
    let mut inputs = Vec::new();
    for i in 0..6 {
        for j in 0..6 {
            inputs.push(vec![i as f64 / 5.0, j as f64 / 5.0]);
        }
    }
    let targets: Vec<Vec<f64>> = inputs.iter().map(|a| f(a)).collect();
    let model = FreeMotionModel::fit(&inputs, &targets, &FitConfig { target_rmse: 1e-2, ..FitConfig::default() }).unwrap();
    let group = ModelGroup { name: "g".into(), actuation_channels: vec![0, 1], sensor_channels: vec![0, 1, 2], model };
    DeformationModel::new(2, NormalizationTable::identity(3), vec![group]).unwrap()
}

fn cost_at(plant: &mut impl Plant, model: &DeformationModel, target: &ControlTarget, a: &[f64]) -> f64 {
    plant.actuate(a).unwrap();
    let ds = model.compute_deformation(&plant.sensors(), plant.actuation().values()).unwrap();
    cost(&control_error(&ds, target).unwrap())
}

/// Largest difference between `J^T e` and the central-difference gradient
/// of the settled cost.
fn gradient_gap(model: &DeformationModel, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
    let b = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
    let a0 = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
    let target = ControlTarget {
        rows: vec![0, 1, 2],
        values: (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        cols: vec![0, 1],
        success_threshold: 0.0,
    };
    let mut plant = FnPlant::with_channels(&a0, Bounds::unit(), affine_map(m, b));
    let j = probe_jacobian(&mut plant, model, &ProbeConfig::default(), &target).unwrap();
    let ds = model.compute_deformation(&plant.sensors(), &a0).unwrap();
    let e = control_error(&ds, &target).unwrap();
    let jte = j.matrix.transpose() * DVector::from_column_slice(&e);
    let h = 1e-6;
    (0..2)
        .map(|c| {
            let mut up = a0;
            let mut down = a0;
            up[c] += h;
            down[c] -= h;
            let fd = (cost_at(&mut plant, model, &target, &up) - cost_at(&mut plant, model, &target, &down)) / (2.0 * h);
            (fd - jte[c]).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn transposed_jacobian_matches_numeric_gradient_at_twenty_states() {
    let model = curved_model();
    for seed in 0..20 {
        let gap = gradient_gap(model, seed);
        assert!(gap <= 1e-6, "state {seed}: gap {gap:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_identity(seed in 1000u64..100_000) {
        let model = curved_model();
        prop_assert!(gradient_gap(model, seed) <= 1e-6);
    }
}

#[test]
fn probing_a_slip_free_plant_restores_actuation_and_cost() {
    let model = curved_model();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let m = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5));
        let a0 = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let target =
            ControlTarget { rows: vec![0, 1, 2], values: vec![0.1, -0.2, 0.3], cols: vec![0, 1], success_threshold: 0.0 };
        let mut plant = FnPlant::with_channels(&a0, Bounds::unit(), affine_map(m, b));
        let before = cost_at(&mut plant, model, &target, &a0);
        probe_jacobian(&mut plant, model, &ProbeConfig::default(), &target).unwrap();
        assert_eq!(plant.actuation().values(), &a0);
        let ds = model.compute_deformation(&plant.sensors(), &a0).unwrap();
        let after = cost(&control_error(&ds, &target).unwrap());
        assert!((after - before).abs() <= 0.05 * before);
    }
}
