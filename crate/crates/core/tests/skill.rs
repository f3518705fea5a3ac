mod common;

use common::{flat_model, PushPlant};
use deform_core::{
    build_skill, extract_target, read_trace, record_demonstration, run_funnel, run_sequence, ControlTarget, Error,
    FunnelPolicy, JacobianStore, Plant, ProbeConfig, SkillMode, SkillSpec, Threshold, TimedWrench, Wrench,
};
use nalgebra::DMatrix;

/// Two actuators driving three sensors; the push loads sensors 0 and 2.
fn plant() -> PushPlant {
    let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.1, 0.9, -0.3, 0.6]);
    let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.0, 0.1]);
    PushPlant::new(m, w, &[0.5, 0.5])
}

fn ramp(n: usize, peak: Wrench) -> Vec<TimedWrench> {
    (1..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            TimedWrench { t: i as f64 * 0.2, wrench: Wrench::new(peak.fx * s, peak.fy * s, peak.torque * s) }
        })
        .collect()
}

#[test]
fn demonstration_freezes_actuation_and_grows_loaded_channels() {
    let mut p = plant();
    let model = flat_model(2, 3);
    let demo = record_demonstration(&mut p, &model, &ramp(10, Wrench::new(0.4, 0.0, 0.0))).unwrap();
    assert_eq!(demo.ticks.len(), 10);
    assert!(demo.ticks.iter().all(|t| t.actuation == demo.ticks[0].actuation));
    assert!(demo.ticks.windows(2).all(|w| w[1].time > w[0].time));
    for ch in [0, 2] {
        assert!(demo.ticks.windows(2).all(|w| w[1].deformation[ch] > w[0].deformation[ch]));
    }
    // The push is released afterwards.
    assert_eq!(p.wrench, Wrench::default());
}

#[test]
fn zero_wrench_gives_a_constant_trajectory() {
    let mut p = plant();
    let demo = record_demonstration(&mut p, &flat_model(2, 3), &ramp(5, Wrench::default())).unwrap();
    assert!(demo.ticks.iter().all(|t| t.deformation == demo.ticks[0].deformation));
    assert_eq!(extract_target(&demo, &[1]).unwrap(), vec![demo.ticks[2].deformation[1]]);
}

#[test]
fn empty_demonstration_is_rejected() {
    let r = record_demonstration(&mut plant(), &flat_model(2, 3), &[]);
    assert!(matches!(r, Err(Error::EmptyDemonstration)));
}

#[test]
fn target_is_the_last_line_of_the_saved_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plant();
    let demo = record_demonstration(&mut p, &flat_model(2, 3), &ramp(7, Wrench::new(0.3, 0.0, 0.2))).unwrap();
    let path = dir.path().join("demo.csv");
    demo.save(&path).unwrap();

    // Parse the file independently of the trace reader.
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let expect: Vec<f64> = ["ds_s0", "ds_s2"].iter().map(|n| last[col(n)].parse().unwrap()).collect();
    assert_eq!(extract_target(&demo, &[0, 2]).unwrap(), expect);

    let loaded = deform_core::DemonstrationTrajectory::load(&path).unwrap();
    assert_eq!(loaded.ticks, read_trace(text.as_bytes()).unwrap());
    assert_eq!(loaded.actuation_labels, vec!["a0", "a1"]);
}

#[test]
fn build_skill_checks_channels_not_reachability() {
    let mut p = plant();
    let demo = record_demonstration(&mut p, &flat_model(2, 3), &ramp(3, Wrench::new(50.0, 0.0, 0.0))).unwrap();
    // Far outside what the actuators can reach, still a valid skill.
    let spec = build_skill("far", &demo, &[0, 2], &[0, 1], Threshold::Absolute(1e-3), p.actuation()).unwrap();
    assert_eq!(spec.mode, SkillMode::Feedback);
    assert!(matches!(build_skill("x", &demo, &[5], &[0], Threshold::default(), p.actuation()), Err(Error::InvalidChannels(_))));
    assert!(matches!(build_skill("x", &demo, &[0], &[], Threshold::default(), p.actuation()), Err(Error::InvalidChannels(_))));
    p.disable(&[0, 1]).unwrap_err();
    p.disable(&[1]).unwrap();
    assert!(build_skill("x", &demo, &[0], &[1], Threshold::default(), p.actuation()).is_err());
}

#[test]
fn skill_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = plant();
    let demo = record_demonstration(&mut p, &flat_model(2, 3), &ramp(3, Wrench::new(0.2, 0.0, 0.0))).unwrap();
    let spec = build_skill("push", &demo, &[0], &[0, 1], Threshold::Relative(0.25), p.actuation()).unwrap();
    let path = dir.path().join("push.toml");
    spec.save(&path).unwrap();
    assert_eq!(SkillSpec::load(&path).unwrap(), spec);
    let open = SkillSpec::open_loop("gait", vec![1], vec![-0.2]).unwrap();
    open.save(&path).unwrap();
    assert_eq!(SkillSpec::load(&path).unwrap(), open);
}

#[test]
fn relative_threshold_resolves_against_the_current_error() {
    let mut p = plant();
    let model = flat_model(2, 3);
    let demo = record_demonstration(&mut p, &model, &ramp(4, Wrench::new(0.4, 0.0, 0.0))).unwrap();
    let spec = build_skill("push", &demo, &[0], &[0, 1], Threshold::Relative(0.5), p.actuation()).unwrap();
    let t = spec.control_target(&p, &model).unwrap();
    let e0 = (p.sensors().values[0] - spec.target_values[0]).abs();
    assert!((t.success_threshold - 0.5 * e0).abs() < 1e-12);
}

#[test]
fn empty_sequence_succeeds_with_no_ticks() {
    let mut p = plant();
    let out = run_sequence(&mut p, &flat_model(2, 3), &[], &mut [], &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    assert!(out.success && out.stages.is_empty());
    assert_eq!(p.actuation().values(), &[0.5, 0.5]);
}

#[test]
fn single_stage_sequence_equals_a_direct_run() {
    let model = flat_model(2, 3);
    let mut p = plant();
    let demo = record_demonstration(&mut p, &model, &ramp(4, Wrench::new(0.4, 0.0, 0.0))).unwrap();
    let spec = build_skill("push", &demo, &[0, 2], &[0, 1], Threshold::Relative(0.1), p.actuation()).unwrap();

    let mut direct_plant = plant();
    let target: ControlTarget = spec.control_target(&direct_plant, &model).unwrap();
    let mut direct_store = JacobianStore::new();
    let direct = run_funnel(&mut direct_plant, &model, &target, &mut direct_store, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();

    let mut seq_plant = plant();
    let mut stores = [JacobianStore::new()];
    let out = run_sequence(&mut seq_plant, &model, &[spec], &mut stores, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    assert!(out.success);
    assert_eq!(out.stages[0].funnel.as_ref(), Some(&direct));
    assert_eq!(seq_plant.actuation().values(), direct_plant.actuation().values());
}

#[test]
fn stages_use_only_their_own_store_and_stop_at_failure() {
    let model = flat_model(2, 3);
    let mut p = plant();
    let demo = record_demonstration(&mut p, &model, &ramp(4, Wrench::new(0.4, 0.0, 0.0))).unwrap();
    let reach = build_skill("reach", &demo, &[0, 2], &[0, 1], Threshold::Relative(0.1), p.actuation()).unwrap();
    let shifted = SkillSpec::open_loop("shift", vec![1], vec![-0.1]).unwrap();
    let far_demo = record_demonstration(&mut p, &model, &ramp(2, Wrench::new(40.0, 0.0, 0.0))).unwrap();
    let far = build_skill("far", &far_demo, &[0], &[0], Threshold::Absolute(1e-4), p.actuation()).unwrap();
    let never = SkillSpec::open_loop("never", vec![0], vec![0.1]).unwrap();

    let mut stores = vec![JacobianStore::new(); 4];
    let out = run_sequence(&mut p, &model, &[reach, shifted, far, never], &mut stores, &FunnelPolicy::default(), &ProbeConfig::default()).unwrap();
    assert!(!out.success);
    let names: Vec<&str> = out.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["reach", "shift", "far"]);
    assert!(out.stages[0].success && out.stages[1].success && !out.stages[2].success);
    assert_eq!(stores[0].len(), out.stages[0].funnel.as_ref().unwrap().probes);
    assert!(stores[1].is_empty() && stores[3].is_empty());
    assert_eq!(stores[2].len(), out.stages[2].funnel.as_ref().unwrap().probes);
}

#[test]
fn store_count_must_match_skill_count() {
    let spec = SkillSpec::open_loop("gait", vec![0], vec![0.1]).unwrap();
    let r = run_sequence(&mut plant(), &flat_model(2, 3), &[spec], &mut [], &FunnelPolicy::default(), &ProbeConfig::default());
    assert!(matches!(r, Err(Error::ChannelMismatch { .. })));
}
