//! Scene configuration: fingers, object, contact model, gravity and solver.
//!
//! Angles are radians, measured counter-clockwise from the hand-frame +x
//! axis. Lengths are dimensionless simulator units.

use serde::{Deserialize, Serialize};

use deform_core::Bounds;

use crate::error::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentSpec {
    /// Number of jointed segments, at least 3.
    pub segments: usize,
    pub segment_length: f64,
    /// Torsional stiffness of each joint.
    pub joint_stiffness: f64,
    /// Unactuated rest angle of each joint.
    #[serde(default)]
    pub rest_angle: f64,
    /// Rest-angle offset of each joint at full actuation.
    pub gain: f64,
    /// Curvature of the actuation map; 0 is linear.
    #[serde(default)]
    pub nonlinearity: f64,
    /// Actuation applied when the plant is built.
    #[serde(default)]
    pub initial_actuation: f64,
}

impl CompartmentSpec {
    /// Rest-angle offset for actuation `a`: `gain (a + c a^2) / (1 + c)`.
    pub fn offset(&self, a: f64) -> f64 {
        let c = self.nonlinearity;
        self.gain * (a + c * a * a) / (1.0 + c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Strain,
    Bend,
}

/// A sensor channel sums the joint angles of a contiguous joint range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub label: String,
    pub kind: ChannelKind,
    /// Joint range `[start, end)` within the finger.
    pub joints: [usize; 2],
}

/// Actuation and sensor channels that form one free-motion model group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    /// Compartment indices within the finger.
    pub compartments: Vec<usize>,
    /// Channel indices within the finger.
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerSpec {
    pub name: String,
    pub base: [f64; 2],
    pub base_angle: f64,
    /// Contact radius of the finger nodes.
    pub thickness: f64,
    pub compartments: Vec<CompartmentSpec>,
    pub channels: Vec<ChannelSpec>,
    /// Free-motion groups; defaults to one group spanning the finger.
    #[serde(default)]
    pub groups: Vec<GroupSpec>,
}

impl FingerSpec {
    pub fn joint_count(&self) -> usize {
        self.compartments.iter().map(|c| c.segments).sum()
    }

    /// Compartment index of every joint.
    pub fn joint_compartments(&self) -> Vec<usize> {
        self.compartments
            .iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat_n(i, c.segments))
            .collect()
    }

    pub fn effective_groups(&self) -> Vec<GroupSpec> {
        if self.groups.is_empty() {
            vec![GroupSpec {
                name: self.name.clone(),
                compartments: (0..self.compartments.len()).collect(),
                channels: (0..self.channels.len()).collect(),
            }]
        } else {
            self.groups.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Circle { radius: f64 },
    /// Square with half-width `half_width` and rounded corners.
    Square { half_width: f64, corner_radius: f64 },
    /// Axis-aligned in the object frame, rounded corners.
    Rectangle { half_width: f64, half_height: f64, corner_radius: f64 },
}

impl Shape {
    /// Characteristic width used for the penetration cap.
    pub fn size(&self) -> f64 {
        match *self {
            Shape::Circle { radius } => 2.0 * radius,
            Shape::Square { half_width, .. } | Shape::Rectangle { half_width, .. } => 2.0 * half_width,
        }
    }

    /// Half extents of the bounding box in the object frame.
    pub fn half_extents(&self) -> [f64; 2] {
        match *self {
            Shape::Circle { radius } => [radius, radius],
            Shape::Square { half_width, .. } => [half_width, half_width],
            Shape::Rectangle { half_width, half_height, .. } => [half_width, half_height],
        }
    }

    /// Same shape with width `size`. Squares and circles scale uniformly;
    /// rectangles keep their height.
    pub fn with_size(&self, size: f64) -> Shape {
        match *self {
            Shape::Circle { .. } => Shape::Circle { radius: 0.5 * size },
            Shape::Square { half_width, corner_radius } => {
                let h = 0.5 * size;
                Shape::Square { half_width: h, corner_radius: corner_radius * h / half_width }
            }
            Shape::Rectangle { half_height, corner_radius, .. } => {
                Shape::Rectangle { half_width: 0.5 * size, half_height, corner_radius: corner_radius.min(0.5 * size) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub mass: f64,
    /// Initial pose `(x, y, theta)` in the hand frame.
    pub pose: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravitySpec {
    pub magnitude: f64,
    /// Direction of the gravity vector; `-pi/2` points into the palm.
    pub angle: f64,
    /// Direction while the hand closes on the object; gravity is then
    /// rotated to `angle` in small increments, as when tilting the palm.
    #[serde(default)]
    pub grasp_angle: Option<f64>,
}

impl GravitySpec {
    pub fn vector(&self) -> [f64; 2] {
        [self.magnitude * self.angle.cos(), self.magnitude * self.angle.sin()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSpec {
    pub stiffness: f64,
    /// Coulomb coefficient between hand and object.
    pub friction: f64,
    /// Coulomb coefficient against the palm.
    pub palm_friction: f64,
    /// Coulomb coefficient against the table.
    pub table_friction: f64,
    /// Tangential displacement below which contacts stick elastically.
    pub stick_displacement: f64,
    /// Penetration cap as a fraction of object size.
    pub depth_cap_fraction: f64,
}

/// Flat palm surface along the hand-frame x axis, facing +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmSpec {
    pub y: f64,
    pub x_range: [f64; 2],
}

/// World-fixed table `y = height + step * smoothstep(direction (x - step_x) / step_width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub height: f64,
    #[serde(default)]
    pub step: f64,
    #[serde(default)]
    pub step_x: f64,
    #[serde(default = "one")]
    pub step_width: f64,
    #[serde(default = "one")]
    pub direction: f64,
}

fn one() -> f64 {
    1.0
}

impl TableSpec {
    pub fn height_at(&self, x: f64) -> (f64, f64) {
        let z = self.direction * (x - self.step_x) / self.step_width;
        let (s, ds) = smoothstep(z);
        (self.height + self.step * s, self.step * ds * self.direction / self.step_width)
    }
}

/// C1 cubic smoothstep on `[-1/2, 1/2]`, with derivative.
fn smoothstep(z: f64) -> (f64, f64) {
    let t = z + 0.5;
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t))
    }
}

/// Prismatic base motion of the whole hand, two actuation channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarrierSpec {
    pub x_bounds: Bounds,
    pub y_bounds: Bounds,
    #[serde(default)]
    pub initial: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    /// Converged when the energy gradient's max-norm is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Cap on the max-norm of a single Newton step.
    pub max_step: f64,
    /// Largest actuation change per quasi-static sub-step.
    pub max_actuation_step: f64,
    /// Largest wrench change per sub-step.
    pub max_wrench_step: f64,
    /// Object farther than this from the hand origin has escaped.
    pub workspace_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub fingers: Vec<FingerSpec>,
    #[serde(default)]
    pub object: Option<ObjectSpec>,
    pub gravity: GravitySpec,
    pub contact: ContactSpec,
    #[serde(default)]
    pub palm: Option<PalmSpec>,
    #[serde(default)]
    pub table: Option<TableSpec>,
    #[serde(default)]
    pub carrier: Option<CarrierSpec>,
    pub solver: SolverSpec,
    #[serde(default)]
    pub seed: u64,
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.fingers.is_empty() {
            return bad("scene needs at least one finger".into());
        }
        for f in &self.fingers {
            for (i, c) in f.compartments.iter().enumerate() {
                if c.segments < 3 {
                    return bad(format!("{} compartment {i}: need at least 3 segments", f.name));
                }
                if !(c.joint_stiffness > 0.0) || !(c.segment_length > 0.0) {
                    return bad(format!("{} compartment {i}: stiffness and length must be positive", f.name));
                }
            }
            let joints = f.joint_count();
            let mut used = vec![false; joints];
            for ch in &f.channels {
                let [lo, hi] = ch.joints;
                if lo >= hi || hi > joints {
                    return bad(format!("{} channel {}: joint range out of bounds", f.name, ch.label));
                }
                if used[lo..hi].iter().any(|u| *u) {
                    return bad(format!("{} channel {}: overlaps another channel", f.name, ch.label));
                }
                used[lo..hi].iter_mut().for_each(|u| *u = true);
            }
            let groups = f.effective_groups();
            let mut seen_c = vec![false; f.compartments.len()];
            let mut seen_s = vec![false; f.channels.len()];
            for g in &groups {
                for &c in &g.compartments {
                    if c >= seen_c.len() || std::mem::replace(&mut seen_c[c], true) {
                        return bad(format!("{} group {}: bad compartment {c}", f.name, g.name));
                    }
                }
                for &s in &g.channels {
                    if s >= seen_s.len() || std::mem::replace(&mut seen_s[s], true) {
                        return bad(format!("{} group {}: bad channel {s}", f.name, g.name));
                    }
                }
            }
            if seen_s.iter().any(|s| !s) {
                return bad(format!("{}: every channel must belong to a group", f.name));
            }
        }
        if !(self.contact.stiffness > 0.0) {
            return bad("contact stiffness must be positive".into());
        }
        if !(self.solver.tolerance > 0.0) {
            return bad("solver tolerance must be positive".into());
        }
        if let Some(o) = &self.object {
            if !(o.mass >= 0.0) {
                return bad("object mass must be non-negative".into());
            }
            let [hx, hy] = o.shape.half_extents();
            let r = match o.shape {
                Shape::Circle { radius } => radius,
                Shape::Square { corner_radius, .. } | Shape::Rectangle { corner_radius, .. } => corner_radius,
            };
            if !(hx > 0.0 && hy > 0.0 && r > 0.0 && r <= hx.min(hy)) {
                return bad("object extents and corner radius must be positive, corners within the extents".into());
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Reflection across the hand-frame y axis.
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        for f in &mut m.fingers {
            f.base[0] = -f.base[0];
            f.base_angle = std::f64::consts::PI - f.base_angle;
            for c in &mut f.compartments {
                c.rest_angle = -c.rest_angle;
                c.gain = -c.gain;
            }
        }
        if let Some(o) = &mut m.object {
            o.pose = [-o.pose[0], o.pose[1], -o.pose[2]];
        }
        m.gravity.angle = std::f64::consts::PI - m.gravity.angle;
        m.gravity.grasp_angle = m.gravity.grasp_angle.map(|a| std::f64::consts::PI - a);
        if let Some(p) = &mut m.palm {
            p.x_range = [-p.x_range[1], -p.x_range[0]];
        }
        if let Some(t) = &mut m.table {
            t.step_x = -t.step_x;
            t.direction = -t.direction;
        }
        if let Some(c) = &mut m.carrier {
            c.x_bounds = Bounds::new(-c.x_bounds.max, -c.x_bounds.min);
            c.initial[0] = -c.initial[0];
        }
        m
    }
}
