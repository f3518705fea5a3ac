//! The simulated hand as a controllable plant.

use std::f64::consts::PI;

use deform_core::{
    ActuationVector, Bounds, DemonstrationPlant, NormalizationTable, Plant, PlantError, SensorVector, Wrench,
};

use crate::config::{ChannelKind, GravitySpec, PlantConfig};
use crate::error::SimError;
use crate::model::{penalty_force, ActiveContact, Anchor, ContactKey, Inputs, Kinematics, Model, V2};
use crate::solver::{self, Iterate, SolveReport};

/// Largest gravity rotation between settled equilibria.
pub const MAX_GRAVITY_STEP: f64 = PI / 12.0;

/// A global sensor channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorChannel {
    pub label: String,
    pub kind: ChannelKind,
    pub finger: usize,
    /// Global joint range.
    pub joints: std::ops::Range<usize>,
}

/// A free-motion group in global actuation and sensor indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout {
    pub name: String,
    pub actuations: Vec<usize>,
    pub sensors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorLayout {
    pub channels: Vec<SensorChannel>,
    pub groups: Vec<GroupLayout>,
    /// Actuation index of each compartment, by finger.
    pub compartment_channels: Vec<Vec<usize>>,
    /// Actuation indices of the carrier, if present.
    pub carrier_channels: Option<[usize; 2]>,
}

impl SensorLayout {
    fn new(config: &PlantConfig) -> Self {
        let mut channels = Vec::new();
        let mut groups = Vec::new();
        let mut compartment_channels = Vec::new();
        let mut joint = 0;
        let mut act = 0;
        for (fi, f) in config.fingers.iter().enumerate() {
            let first_sensor = channels.len();
            let comp: Vec<usize> = (act..act + f.compartments.len()).collect();
            for ch in &f.channels {
                channels.push(SensorChannel {
                    label: ch.label.clone(),
                    kind: ch.kind,
                    finger: fi,
                    joints: joint + ch.joints[0]..joint + ch.joints[1],
                });
            }
            for g in f.effective_groups() {
                groups.push(GroupLayout {
                    name: g.name.clone(),
                    actuations: g.compartments.iter().map(|&c| comp[c]).collect(),
                    sensors: g.channels.iter().map(|&s| first_sensor + s).collect(),
                });
            }
            act += f.compartments.len();
            joint += f.joint_count();
            compartment_channels.push(comp);
        }
        let carrier_channels = config.carrier.as_ref().map(|_| [act, act + 1]);
        Self { channels, groups, compartment_channels, carrier_channels }
    }

    pub fn labels(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.label.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimPlant {
    model: Model,
    layout: SensorLayout,
    q: Vec<f64>,
    actuation: ActuationVector,
    /// Actuation the current equilibrium was solved for.
    applied: Vec<f64>,
    wrench: Wrench,
    gravity: GravitySpec,
    anchors: Vec<Anchor>,
    /// Anchors the current equilibrium was solved with, before refreshing.
    solved_anchors: Vec<Anchor>,
    normalization: Option<NormalizationTable>,
    /// Equilibrium solves performed so far.
    pub solves: usize,
    pub newton_iterations: usize,
    last_report: Option<SolveReport>,
}

fn actuation_vector(config: &PlantConfig) -> Result<ActuationVector, SimError> {
    let mut labels = Vec::new();
    let mut bounds = Vec::new();
    let mut values = Vec::new();
    for f in &config.fingers {
        for (i, c) in f.compartments.iter().enumerate() {
            labels.push(format!("{}_c{i}", f.name));
            bounds.push(Bounds::unit());
            values.push(c.initial_actuation);
        }
    }
    if let Some(c) = &config.carrier {
        labels.extend(["carrier_x".to_string(), "carrier_y".to_string()]);
        bounds.extend([c.x_bounds, c.y_bounds]);
        values.extend(c.initial);
    }
    ActuationVector::new(labels, bounds, values).map_err(|e| SimError::Config(e.to_string()))
}

impl SimPlant {
    /// Builds the plant with every compartment relaxed, settles, then
    /// closes the hand to the configured initial actuation.
    pub fn new(config: PlantConfig) -> Result<Self, SimError> {
        config.validate()?;
        let initial = actuation_vector(&config)?;
        let mut actuation = initial.clone();
        let relaxed: Vec<f64> = initial
            .labels()
            .iter()
            .zip(initial.values())
            .map(|(l, &v)| if l.starts_with("carrier_") { v } else { 0.0 })
            .collect();
        actuation.set_values(&relaxed).map_err(|e| SimError::Config(e.to_string()))?;
        let layout = SensorLayout::new(&config);
        let gravity = GravitySpec { angle: config.gravity.grasp_angle.unwrap_or(config.gravity.angle), ..config.gravity };
        let final_gravity = config.gravity;
        let mut q = vec![0.0; 0];
        for f in &config.fingers {
            for c in &f.compartments {
                q.extend(std::iter::repeat_n(c.rest_angle + c.offset(0.0), c.segments));
            }
        }
        if let Some(o) = &config.object {
            q.extend(o.pose);
        }
        let model = Model::new(config);
        let applied = actuation.values().to_vec();
        let mut plant = Self {
            model,
            layout,
            q,
            actuation,
            applied,
            wrench: Wrench::default(),
            gravity,
            anchors: Vec::new(),
            solved_anchors: Vec::new(),
            normalization: None,
            solves: 0,
            newton_iterations: 0,
            last_report: None,
        };
        plant.step_to_equilibrium()?;
        plant.actuate(initial.values())?;
        plant.rotate_gravity(final_gravity)?;
        Ok(plant)
    }

    pub fn config(&self) -> &PlantConfig {
        &self.model.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn layout(&self) -> &SensorLayout {
        &self.layout
    }

    pub fn state(&self) -> &[f64] {
        &self.q
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn last_report(&self) -> Option<SolveReport> {
        self.last_report
    }

    pub fn set_normalization(&mut self, table: Option<NormalizationTable>) {
        self.normalization = table;
    }

    pub fn normalization(&self) -> Option<&NormalizationTable> {
        self.normalization.as_ref()
    }

    pub fn wrench(&self) -> Wrench {
        self.wrench
    }

    fn carrier_of(&self, a: &[f64]) -> V2 {
        match self.layout.carrier_channels {
            Some([x, y]) => [a[x], a[y]],
            None => [0.0, 0.0],
        }
    }

    pub fn carrier(&self) -> V2 {
        self.carrier_of(&self.applied)
    }

    fn rest_angles(&self, a: &[f64]) -> Vec<f64> {
        let mut rest = Vec::with_capacity(self.model.joint_count);
        for (fi, f) in self.model.config.fingers.iter().enumerate() {
            for (ci, c) in f.compartments.iter().enumerate() {
                let v = a[self.layout.compartment_channels[fi][ci]];
                rest.extend(std::iter::repeat_n(c.rest_angle + c.offset(v), c.segments));
            }
        }
        rest
    }

    fn inputs_for(&self, a: &[f64], w: Wrench) -> Inputs {
        Inputs {
            rest: self.rest_angles(a),
            carrier: self.carrier_of(a),
            gravity: self.gravity.vector(),
            force: [w.fx, w.fy],
            torque: w.torque,
            anchors: self.anchors.clone(),
        }
    }

    /// Inputs of the current equilibrium.
    pub fn inputs(&self) -> Inputs {
        self.inputs_for(&self.applied, self.wrench)
    }

    pub fn kinematics(&self) -> Kinematics {
        self.model.kinematics(&self.q, self.carrier())
    }

    pub fn contacts(&self) -> Vec<ActiveContact> {
        let inputs = self.inputs();
        self.model.contacts(&self.q, &inputs, &self.model.kinematics(&self.q, inputs.carrier))
    }

    pub fn object_pose(&self) -> Option<[f64; 3]> {
        self.model.pose(&self.q)
    }

    pub fn max_depth(&self) -> f64 {
        self.contacts().iter().fold(0.0, |m, c| m.max(c.depth))
    }

    fn depth_cap(&self) -> f64 {
        let size = self.model.config.object.as_ref().map_or(1.0, |o| o.shape.size());
        self.model.config.contact.depth_cap_fraction * size
    }

    /// Solves one equilibrium at fixed inputs and refreshes friction.
    fn solve_once(&mut self, a: &[f64], w: Wrench, observe: &mut dyn FnMut(&Iterate)) -> Result<(), PlantError> {
        let inputs = self.inputs_for(a, w);
        let mut q = self.q.clone();
        let report = solver::solve(&self.model, &mut q, &inputs, &self.model.config.solver, observe)?;
        self.solves += 1;
        self.newton_iterations += report.iterations;
        let kin = self.model.kinematics(&q, inputs.carrier);
        let depth = self.model.contacts(&q, &inputs, &kin).iter().fold(0.0, |m: f64, c| m.max(c.depth));
        let cap = self.depth_cap();
        if depth > cap {
            return Err(PlantError::PenetrationExceeded { depth, cap });
        }
        self.anchors = self.model.refresh_anchors(&q, &inputs);
        self.solved_anchors = inputs.anchors;
        self.q = q;
        self.applied = a.to_vec();
        self.wrench = w;
        self.last_report = Some(report);
        Ok(())
    }

    /// Moves quasi-statically to new actuation and wrench in sub-steps no
    /// larger than the configured limits. On error the plant keeps the last
    /// equilibrium reached.
    fn transition(&mut self, target: &[f64], wrench: Wrench, observe: &mut dyn FnMut(&Iterate)) -> Result<(), PlantError> {
        let spec = &self.model.config.solver;
        let da = self.applied.iter().zip(target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dw = [wrench.fx - self.wrench.fx, wrench.fy - self.wrench.fy, wrench.torque - self.wrench.torque]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let steps = ((da / spec.max_actuation_step).ceil().max((dw / spec.max_wrench_step).ceil()) as usize).max(1);
        let (a0, w0) = (self.applied.clone(), self.wrench);
        for k in 1..=steps {
            let t = k as f64 / steps as f64;
            let a: Vec<f64> = if k == steps {
                target.to_vec()
            } else {
                a0.iter().zip(target).map(|(x, y)| x + t * (y - x)).collect()
            };
            let w = if k == steps {
                wrench
            } else {
                Wrench::new(
                    w0.fx + t * (wrench.fx - w0.fx),
                    w0.fy + t * (wrench.fy - w0.fy),
                    w0.torque + t * (wrench.torque - w0.torque),
                )
            };
            self.solve_once(&a, w, observe)?;
        }
        Ok(())
    }

    /// Re-solves the current equilibrium with refreshed friction.
    pub fn step_to_equilibrium(&mut self) -> Result<(), PlantError> {
        let (a, w) = (self.applied.clone(), self.wrench);
        self.solve_once(&a, w, &mut |_| {})
    }

    /// Like `actuate`, reporting every Newton iterate to `observe`.
    pub fn actuate_observed(&mut self, values: &[f64], observe: &mut dyn FnMut(&Iterate)) -> Result<(), PlantError> {
        self.actuation.set_values(values).map_err(|e| PlantError::Other(e.to_string()))?;
        let target = self.actuation.values().to_vec();
        let w = self.wrench;
        self.transition(&target, w, observe)
    }

    pub fn apply_demonstration_wrench(&mut self, wrench: Wrench) -> Result<(), PlantError> {
        let a = self.applied.clone();
        self.transition(&a, wrench, &mut |_| {})
    }

    pub fn set_gravity(&mut self, gravity: GravitySpec) -> Result<(), PlantError> {
        self.gravity = gravity;
        self.model.config.gravity = gravity;
        self.step_to_equilibrium()
    }

    /// Turns gravity to `gravity.angle` along the shorter arc, settling at
    /// least every `MAX_GRAVITY_STEP` radians.
    pub fn rotate_gravity(&mut self, gravity: GravitySpec) -> Result<(), PlantError> {
        let start = self.gravity.angle;
        let arc = (gravity.angle - start + PI).rem_euclid(2.0 * PI) - PI;
        let steps = ((arc.abs() / MAX_GRAVITY_STEP).ceil() as usize).max(1);
        for k in 1..=steps {
            let angle = if k == steps { gravity.angle } else { start + arc * k as f64 / steps as f64 };
            self.set_gravity(GravitySpec { angle, ..gravity })?;
        }
        Ok(())
    }

    /// Raw sensor values: summed joint angles per channel.
    pub fn read_raw_sensors(&self) -> Vec<f64> {
        self.layout.channels.iter().map(|c| self.q[c.joints.clone()].iter().sum()).collect()
    }

    pub fn read_sensors(&self) -> Vec<f64> {
        let raw = self.read_raw_sensors();
        match &self.normalization {
            Some(t) => t.normalize(&raw),
            None => raw,
        }
    }

    /// Net force the hand (fingers and palm) exerts on the object.
    pub fn total_contact_force(&self) -> [f64; 2] {
        let Some(_) = self.object_pose() else { return [0.0, 0.0] };
        let inputs = Inputs { anchors: self.solved_anchors.clone(), ..self.inputs() };
        let hand = |k: &ContactKey| matches!(k, ContactKey::NodeObject(_) | ContactKey::ObjectPalm(_));
        let g = self.model.partial_gradient(&self.q, &inputs, hand);
        let o = self.model.joint_count;
        [-g[o], -g[o + 1]]
    }

    /// Normal force the finger nodes exert on the table.
    pub fn table_contact_force(&self) -> [f64; 2] {
        let k = self.model.config.contact.stiffness;
        self.contacts()
            .iter()
            .filter(|c| matches!(c.key, ContactKey::NodeTable(_)))
            .fold([0.0, 0.0], |f, c| {
                let n = penalty_force(c.depth, k);
                [f[0] - n * c.normal[0], f[1] - n * c.normal[1]]
            })
    }
}

impl Plant for SimPlant {
    fn actuation(&self) -> &ActuationVector {
        &self.actuation
    }

    fn actuate(&mut self, values: &[f64]) -> Result<(), PlantError> {
        self.actuate_observed(values, &mut |_| {})
    }

    fn settle(&mut self) -> Result<(), PlantError> {
        self.step_to_equilibrium()
    }

    fn sensors(&self) -> SensorVector {
        SensorVector::new(self.read_sensors())
    }

    fn sensor_labels(&self) -> Vec<String> {
        self.layout.labels()
    }

    fn disable(&mut self, channels: &[usize]) -> deform_core::Result<()> {
        self.actuation.disable(channels)
    }
}

impl DemonstrationPlant for SimPlant {
    fn apply_wrench(&mut self, wrench: Wrench) -> Result<(), PlantError> {
        self.apply_demonstration_wrench(wrench)
    }

    fn raw_sensors(&self) -> SensorVector {
        SensorVector::new(self.read_raw_sensors())
    }

    fn object_pose(&self) -> Option<[f64; 3]> {
        SimPlant::object_pose(self)
    }

    /// Force on the object, or on the table when there is no object.
    fn contact_force(&self) -> [f64; 2] {
        if self.model.has_object() {
            self.total_contact_force()
        } else {
            self.table_contact_force()
        }
    }
}
