//! The default scene: thumb on the right, middle, ring and little fingers
//! on the left, a square block resting on the palm between them. The block
//! is a `Rectangle` so that size sweeps change its width only.

use std::f64::consts::FRAC_PI_2;

use deform_core::Bounds;

use crate::config::*;

fn strain_channels(prefix: &str, joints: usize) -> Vec<ChannelSpec> {
    let per = joints / 4;
    (0..4)
        .map(|i| ChannelSpec {
            label: format!("{prefix}_strain{i}"),
            kind: ChannelKind::Strain,
            joints: [i * per, if i == 3 { joints } else { (i + 1) * per }],
        })
        .collect()
}

fn compartment(segments: usize, length: f64, stiffness: f64, gain: f64, a0: f64) -> CompartmentSpec {
    CompartmentSpec {
        segments,
        segment_length: length,
        joint_stiffness: stiffness,
        rest_angle: 0.0,
        gain,
        nonlinearity: 0.3,
        initial_actuation: a0,
    }
}

/// A two-compartment finger standing on the palm with four strain
/// channels; negative gain curls it toward +x.
pub fn two_compartment_finger(name: &str, base_x: f64, segment_length: f64, gain: f64, a0: f64) -> FingerSpec {
    FingerSpec {
        name: name.into(),
        base: [base_x, 0.0],
        base_angle: FRAC_PI_2,
        thickness: 0.35,
        compartments: vec![
            compartment(4, segment_length, 12.0, gain, a0),
            compartment(4, segment_length, 12.0, gain, a0),
        ],
        channels: strain_channels(name, 8),
        groups: Vec::new(),
    }
}

/// Three single-bend scaffold compartments and a tip compartment carrying
/// two strain channels.
pub fn thumb(base_x: f64) -> FingerSpec {
    let mut channels: Vec<ChannelSpec> = (0..3)
        .map(|i| ChannelSpec { label: format!("thumb_bend{i}"), kind: ChannelKind::Bend, joints: [3 * i, 3 * i + 3] })
        .collect();
    channels.push(ChannelSpec { label: "thumb_strain0".into(), kind: ChannelKind::Strain, joints: [9, 11] });
    channels.push(ChannelSpec { label: "thumb_strain1".into(), kind: ChannelKind::Strain, joints: [11, 13] });
    FingerSpec {
        name: "thumb".into(),
        base: [base_x, 0.0],
        base_angle: FRAC_PI_2,
        thickness: 0.35,
        compartments: vec![
            compartment(3, 0.4, 30.0, 0.3, 0.5),
            compartment(3, 0.4, 30.0, 0.3, 0.5),
            compartment(3, 0.4, 30.0, 0.3, 0.5),
            compartment(4, 0.3, 20.0, 0.35, 0.5),
        ],
        channels,
        groups: vec![
            GroupSpec { name: "thumb_scaffold".into(), compartments: vec![0, 1, 2], channels: vec![0, 1, 2] },
            GroupSpec { name: "thumb_tip".into(), compartments: vec![3], channels: vec![3, 4] },
        ],
    }
}

pub const NOMINAL_SIZE: f64 = 4.5;

pub fn default_scene() -> PlantConfig {
    let h = 0.5 * NOMINAL_SIZE;
    PlantConfig {
        fingers: vec![
            thumb(3.4),
            two_compartment_finger("middle", -3.2, 0.55, -0.3, 0.0),
            two_compartment_finger("ring", -3.4, 0.52, -0.3, 0.5),
            two_compartment_finger("little", -3.6, 0.48, -0.3, 0.5),
        ],
        object: Some(ObjectSpec {
            shape: Shape::Rectangle { half_width: h, half_height: h, corner_radius: 0.3 },
            mass: 0.5,
            pose: [0.0, h, 0.0],
        }),
        gravity: GravitySpec { magnitude: 1.0, angle: -FRAC_PI_2, grasp_angle: Some(-FRAC_PI_2) },
        contact: ContactSpec {
            stiffness: 500.0,
            friction: 0.5,
            palm_friction: 0.1,
            table_friction: 0.3,
            stick_displacement: 2e-3,
            depth_cap_fraction: 0.02,
        },
        palm: Some(PalmSpec { y: 0.0, x_range: [-12.0, 12.0] }),
        table: None,
        carrier: None,
        solver: SolverSpec {
            tolerance: 1e-9,
            max_iterations: 200,
            max_step: 0.2,
            max_actuation_step: 0.05,
            max_wrench_step: 0.1,
            workspace_radius: 20.0,
        },
        seed: 0,
    }
}

/// Actuation channels of a scene in plant order, by label.
pub fn actuation_labels(config: &PlantConfig) -> Vec<String> {
    let mut out: Vec<String> = config
        .fingers
        .iter()
        .flat_map(|f| (0..f.compartments.len()).map(move |i| format!("{}_c{i}", f.name)))
        .collect();
    if config.carrier.is_some() {
        out.extend(["carrier_x".into(), "carrier_y".into()]);
    }
    out
}

/// One finger hanging from a carrier above a table with a raised step
/// ahead of it. The finger curls backwards so that it trails while the
/// carrier advances along +x.
pub fn slide_scene() -> PlantConfig {
    let mut finger = two_compartment_finger("index", 0.0, 0.5, -0.3, 0.2);
    finger.base_angle = -FRAC_PI_2;
    PlantConfig {
        fingers: vec![finger],
        object: None,
        palm: None,
        table: Some(TableSpec { height: -4.45, step: 0.4, step_x: 0.0, step_width: 0.5, direction: 1.0 }),
        carrier: Some(CarrierSpec {
            x_bounds: Bounds::new(-5.0, 15.0),
            y_bounds: Bounds::new(-2.0, 1.0),
            initial: [0.0, 0.0],
        }),
        contact: ContactSpec { table_friction: 0.05, ..default_scene().contact },
        ..default_scene()
    }
}

/// A narrower, rounder block held off-centre on a low-friction palm, so
/// that a torque pulse can turn it a quarter turn.
pub fn sequence_scene() -> PlantConfig {
    let (hw, hh) = (1.25, 1.95);
    let mut config = default_scene();
    config.fingers[0] = thumb(4.4);
    for (finger, a) in config.fingers.iter_mut().zip([0.52, 0.53, 0.66, 0.43]) {
        for c in &mut finger.compartments {
            c.initial_actuation = a;
        }
    }
    config.object = Some(ObjectSpec {
        shape: Shape::Rectangle { half_width: hw, half_height: hh, corner_radius: 0.8 },
        mass: 0.5,
        pose: [-0.95, hh, 0.0],
    });
    config.contact.palm_friction = 0.08;
    config
}
