use deform_core::{Plant, PlantError, Wrench};
use deform_sim::config::{GravitySpec, Shape};
use deform_sim::model::Model;
use deform_sim::{scene, solver, SimPlant};
use proptest::prelude::*;

fn nominal() -> SimPlant {
    SimPlant::new(scene::default_scene()).unwrap()
}

fn central_gradient(model: &Model, q: &[f64], inputs: &deform_sim::model::Inputs) -> Vec<f64> {
    let mut qp = q.to_vec();
    (0..q.len())
        .map(|j| {
            let h = 1e-6;
            qp[j] = q[j] + h;
            let ep = model.energy(&qp, inputs, None);
            qp[j] = q[j] - h;
            let em = model.energy(&qp, inputs, None);
            qp[j] = q[j];
            (ep - em) / (2.0 * h)
        })
        .collect()
}

#[test]
fn settled_state_meets_the_solver_tolerance() {
    let p = nominal();
    let report = p.last_report().unwrap();
    assert!(report.residual <= p.config().solver.tolerance);
    assert!(!p.contacts().is_empty());
}

#[test]
fn re_evaluated_gradient_reproduces_the_residual() {
    let mut p = nominal();
    p.apply_demonstration_wrench(Wrench::new(0.2, 0.0, 0.1)).unwrap();
    let inputs = p.inputs();
    let mut q = p.state().to_vec();
    let report = solver::solve(p.model(), &mut q, &inputs, &p.config().solver, |_| {}).unwrap();
    let mut g = vec![0.0; q.len()];
    p.model().energy(&q, &inputs, Some(&mut g));
    let residual = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(report.residual <= p.config().solver.tolerance);
    assert!((residual - report.residual).abs() <= 1e-10);
}

#[test]
fn hand_carries_the_object_weight() {
    let p = nominal();
    let weight = p.config().object.as_ref().unwrap().mass * p.config().gravity.magnitude;
    let f = p.total_contact_force();
    assert!((f[1] - weight).abs() <= 1e-6, "{f:?}");
    assert!(f[0].abs() <= 1e-6, "{f:?}");
}

#[test]
fn energy_gradient_matches_finite_differences() {
    let mut p = nominal();
    p.apply_demonstration_wrench(Wrench::new(0.3, -0.2, 0.1)).unwrap();
    let inputs = p.inputs();
    let model = p.model();
    for k in 0..5 {
        let q: Vec<f64> = p.state().iter().enumerate().map(|(i, v)| v + 1e-3 * ((i * 7 + k * 3) % 11) as f64 / 11.0).collect();
        let mut g = vec![0.0; q.len()];
        model.energy(&q, &inputs, Some(&mut g));
        let fd = central_gradient(model, &q, &inputs);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn solver_energy_never_increases() {
    let p = nominal();
    let inputs = p.inputs();
    let mut q: Vec<f64> = p.state().iter().map(|v| v + 0.02).collect();
    let mut energies = Vec::new();
    solver::solve(p.model(), &mut q, &inputs, &p.config().solver, |it| energies.push(it.energy)).unwrap();
    assert!(energies.len() > 1);
    assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
}

#[test]
fn same_commands_give_bit_identical_states() {
    let run = || {
        let mut p = nominal();
        for step in 0..4 {
            let a: Vec<f64> = p.actuation().values().iter().map(|v| (v + 0.07 * step as f64).min(1.0)).collect();
            p.actuate(&a).unwrap();
        }
        (p.state().to_vec(), p.read_raw_sensors())
    };
    assert_eq!(run(), run());
}

#[test]
fn clone_evolves_like_the_original() {
    let mut a = nominal();
    let mut b = a.clone();
    let cmd: Vec<f64> = a.actuation().values().iter().map(|v| v * 0.8).collect();
    a.actuate(&cmd).unwrap();
    b.actuate(&cmd).unwrap();
    assert_eq!(a.state(), b.state());
}

#[test]
fn mirrored_scene_mirrors_the_equilibrium() {
    let cfg = scene::default_scene();
    let a = SimPlant::new(cfg.clone()).unwrap();
    let b = SimPlant::new(cfg.mirrored()).unwrap();
    let (pa, pb) = (a.object_pose().unwrap(), b.object_pose().unwrap());
    assert!((pa[0] + pb[0]).abs() < 1e-8 && (pa[1] - pb[1]).abs() < 1e-8 && (pa[2] + pb[2]).abs() < 1e-8);
    for (x, y) in a.read_raw_sensors().iter().zip(b.read_raw_sensors()) {
        assert!((x + y).abs() < 1e-8, "{x} vs {y}");
    }
}

#[test]
fn mirrored_wrench_mirrors_the_response() {
    let cfg = scene::default_scene();
    let mut a = SimPlant::new(cfg.clone()).unwrap();
    let mut b = SimPlant::new(cfg.mirrored()).unwrap();
    a.apply_demonstration_wrench(Wrench::new(-0.4, 0.1, 0.2)).unwrap();
    b.apply_demonstration_wrench(Wrench::new(0.4, 0.1, -0.2)).unwrap();
    let (pa, pb) = (a.object_pose().unwrap(), b.object_pose().unwrap());
    assert!((pa[0] + pb[0]).abs() < 1e-8 && (pa[1] - pb[1]).abs() < 1e-8 && (pa[2] + pb[2]).abs() < 1e-8);
}

#[test]
fn free_hand_touches_nothing() {
    let p = SimPlant::new(deform_sim::calibration::free_motion_config(&scene::default_scene())).unwrap();
    assert_eq!(p.total_contact_force(), [0.0, 0.0]);
    assert!(p.object_pose().is_none());
    assert!(p.contacts().iter().all(|c| !matches!(c.key, deform_sim::model::ContactKey::NodeObject(_))));
}

#[test]
fn soft_contact_trips_the_penetration_cap() {
    let mut cfg = scene::default_scene();
    cfg.contact.stiffness = 5.0;
    let err = SimPlant::new(cfg).unwrap_err();
    assert!(matches!(err, deform_sim::SimError::Plant(PlantError::PenetrationExceeded { .. })), "{err:?}");
}

#[test]
fn gravity_rotation_turns_the_load() {
    let mut p = nominal();
    let g = GravitySpec { angle: 0.0, ..p.config().gravity };
    p.rotate_gravity(g).unwrap();
    let f = p.total_contact_force();
    // The hand holds the object against gravity along +x.
    let weight = p.config().object.as_ref().unwrap().mass * g.magnitude;
    assert!((f[0] + weight).abs() < 0.02 * weight, "{f:?}");
    assert!(f[1].abs() < 0.05 * weight, "{f:?}");
}

#[test]
fn rectangle_distance_field() {
    let mut cfg = scene::default_scene();
    cfg.object.as_mut().unwrap().shape = Shape::Rectangle { half_width: 2.0, half_height: 1.0, corner_radius: 0.5 };
    let m = Model::new(cfg);
    let pose = [1.0, 2.0, std::f64::consts::FRAC_PI_2];
    let (d, n) = m.object_sdf(pose, [1.0, 5.0]);
    assert!((d - 1.0).abs() < 1e-12 && n[1] > 0.999_999);
    let (d, _) = m.object_sdf(pose, [1.0, 2.0]);
    assert!((d + 1.0).abs() < 1e-12);
    let (d, n) = m.object_sdf(pose, [3.0, 2.0]);
    assert!((d - 1.0).abs() < 1e-12 && n[0] > 0.999_999);
}

fn crosses(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> bool {
    let side = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    side(p0, p1, q0) * side(p0, p1, q1) < 0.0 && side(q0, q1, p0) * side(q0, q1, p1) < 0.0
}

/// Segments of every finger chain, joint to joint and on to the tip.
fn chain_segments(p: &SimPlant) -> Vec<([f64; 2], [f64; 2])> {
    let kin = p.kinematics();
    let mut out = Vec::new();
    for (f, &first) in p.model().finger_offset.iter().enumerate() {
        let count = p.config().fingers[f].joint_count();
        let mut pts: Vec<[f64; 2]> = kin.joints[first..first + count].to_vec();
        pts.push(kin.tips[f]);
        out.extend(pts.windows(2).map(|w| (w[0], w[1])));
    }
    out
}

#[test]
fn object_centre_never_crosses_a_finger() {
    let mut p = nominal();
    let mut wrenches = vec![Wrench::new(-1.5, 0.0, 0.0), Wrench::new(0.0, 0.0, 1.0), Wrench::new(1.0, -0.5, 0.0)];
    wrenches.extend((0..5).map(|k| Wrench::new(0.3 * k as f64, 0.0, -0.2 * k as f64)));
    for w in wrenches {
        let before = p.object_pose().unwrap();
        let segments = chain_segments(&p);
        if p.apply_demonstration_wrench(w).is_err() {
            break;
        }
        let after = p.object_pose().unwrap();
        let path = ([before[0], before[1]], [after[0], after[1]]);
        for (a, b) in segments.into_iter().chain(chain_segments(&p)) {
            assert!(!crosses(path.0, path.1, a, b));
        }
    }
}

#[test]
fn object_never_tunnels_through_a_closing_hand() {
    let mut p = nominal();
    let cap = p.config().contact.depth_cap_fraction * p.config().object.as_ref().unwrap().shape.size();
    for step in 1..=10 {
        let a: Vec<f64> = p.actuation().values().iter().map(|v| (v + 0.05 * step as f64).min(1.0)).collect();
        if p.actuate(&a).is_err() {
            break;
        }
        assert!(p.max_depth() <= cap);
        let pose = p.object_pose().unwrap();
        for node in p.kinematics().nodes {
            assert!(p.model().object_sdf(pose, node).0 > -cap);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn actuation_sweeps_settle_within_tolerance(delta in prop::collection::vec(-0.3f64..0.3, 10)) {
        let mut p = nominal();
        let a: Vec<f64> = p.actuation().values().iter().zip(&delta).map(|(v, d)| (v + d).clamp(0.0, 1.0)).collect();
        match p.actuate(&a) {
            Ok(()) => prop_assert!(p.last_report().unwrap().residual <= p.config().solver.tolerance),
            Err(e) => {
                let expected = matches!(e, PlantError::PenetrationExceeded { .. } | PlantError::ObjectEscaped);
                prop_assert!(expected, "{:?}", e);
            }
        }
    }
}
