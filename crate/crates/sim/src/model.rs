//! Total potential energy of the hand-object system and its gradient.
//!
//! Degrees of freedom are the relative joint angles of every finger, in
//! finger order, followed by the object pose `(x, y, theta)` when an object
//! is present. Positions are in the world frame; the hand frame is offset
//! from it by the carrier translation.

use crate::config::{PlantConfig, Shape};

pub type V2 = [f64; 2];

#[inline]
pub fn perp(v: V2) -> V2 {
    [-v[1], v[0]]
}

#[inline]
pub fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: V2, s: f64) -> V2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn rotate(v: V2, angle: f64) -> V2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

#[inline]
fn norm(v: V2) -> f64 {
    v[0].hypot(v[1])
}

/// A contact sample point on a finger.
#[derive(Debug, Clone, Copy)]
pub struct NodeInfo {
    pub finger: usize,
    pub segment: usize,
    pub fraction: f64,
}

/// Inputs held fixed during one equilibrium solve.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub rest: Vec<f64>,
    pub carrier: V2,
    pub gravity: V2,
    pub force: V2,
    pub torque: f64,
    pub anchors: Vec<Anchor>,
}

/// Which pair of bodies a contact couples; the index names the finger
/// node or object corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContactKey {
    NodeObject(usize),
    ObjectPalm(usize),
    ObjectTable(usize),
    NodeTable(usize),
}

/// Lagged friction state of one contact: the paired material point on the
/// second body, the tangent and the normal force of the last equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub key: ContactKey,
    /// Object-local point for `NodeObject`; world point for `ObjectTable`
    /// and `NodeTable`; carrier-relative point for `ObjectPalm`.
    pub reference: V2,
    /// Object-local material point on the object, for object-side contacts.
    pub object_point: V2,
    pub tangent: V2,
    pub normal_force: f64,
    pub friction: f64,
}

/// An active penetrating contact at some configuration.
#[derive(Debug, Clone, Copy)]
pub struct ActiveContact {
    pub key: ContactKey,
    pub depth: f64,
    /// Unit normal pushing the first body out of the second.
    pub normal: V2,
    /// World contact point on the first body.
    pub point: V2,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: PlantConfig,
    pub nodes: Vec<NodeInfo>,
    /// First joint index of each finger.
    pub finger_offset: Vec<usize>,
    pub joint_count: usize,
    /// Joint lengths in global joint order.
    pub lengths: Vec<f64>,
    pub stiffness: Vec<f64>,
    /// Object corner circles: local centre and radius.
    pub circles: Vec<(V2, f64)>,
}

/// Finger geometry at one configuration.
pub struct Kinematics {
    /// Position of joint j (start of segment j), global joint order.
    pub joints: Vec<V2>,
    /// Absolute angle of segment j.
    pub angles: Vec<f64>,
    /// Finger tip positions.
    pub tips: Vec<V2>,
    pub nodes: Vec<V2>,
}

/// Penetration below which the penalty is softened so that its second
/// derivative stays continuous at first touch.
pub const PENALTY_SMOOTHING: f64 = 1e-3;

/// Penalty energy for depth `d > 0`. Equals `k d^2 / 2 - k s^2 / 12` once
/// `d >= s`, so the normal force is exactly `k d` there.
pub fn penalty(d: f64, k: f64) -> f64 {
    let s = PENALTY_SMOOTHING;
    if d >= s {
        0.5 * k * d * d - k * s * s / 12.0
    } else {
        let t = d / s;
        k * s * s * t * t * t * (2.0 / 3.0 - 0.25 * t)
    }
}

/// Normal force for depth `d > 0`.
pub fn penalty_force(d: f64, k: f64) -> f64 {
    let s = PENALTY_SMOOTHING;
    if d >= s {
        k * d
    } else {
        let t = d / s;
        k * s * t * t * (2.0 - t)
    }
}

const NODE_FRACTIONS: [f64; 2] = [0.5, 1.0];

/// Smoothed magnitude for lagged friction, C1 at the stick threshold.
fn f0(x: f64, eps: f64) -> f64 {
    if x >= eps {
        x
    } else {
        -x * x * x / (3.0 * eps * eps) + x * x / eps + eps / 3.0
    }
}

fn f1(x: f64, eps: f64) -> f64 {
    if x >= eps {
        1.0
    } else {
        -x * x / (eps * eps) + 2.0 * x / eps
    }
}

impl Model {
    pub fn new(config: PlantConfig) -> Self {
        let mut nodes = Vec::new();
        let mut finger_offset = Vec::new();
        let mut lengths = Vec::new();
        let mut stiffness = Vec::new();
        let mut joint = 0;
        for (fi, f) in config.fingers.iter().enumerate() {
            finger_offset.push(joint);
            let mut seg = 0;
            for c in &f.compartments {
                for _ in 0..c.segments {
                    lengths.push(c.segment_length);
                    stiffness.push(c.joint_stiffness);
                    for &fraction in &NODE_FRACTIONS {
                        nodes.push(NodeInfo { finger: fi, segment: seg, fraction });
                    }
                    seg += 1;
                }
            }
            joint += seg;
        }
        let circles = match config.object.as_ref().map(|o| o.shape) {
            Some(Shape::Circle { radius }) => vec![([0.0, 0.0], radius)],
            Some(shape @ (Shape::Square { corner_radius, .. } | Shape::Rectangle { corner_radius, .. })) => {
                let [hx, hy] = shape.half_extents();
                let (cx, cy) = (hx - corner_radius, hy - corner_radius);
                vec![
                    ([cx, cy], corner_radius),
                    ([-cx, cy], corner_radius),
                    ([-cx, -cy], corner_radius),
                    ([cx, -cy], corner_radius),
                ]
            }
            None => Vec::new(),
        };
        Self { config, nodes, finger_offset, joint_count: joint, lengths, stiffness, circles }
    }

    pub fn has_object(&self) -> bool {
        self.config.object.is_some()
    }

    pub fn dof(&self) -> usize {
        self.joint_count + if self.has_object() { 3 } else { 0 }
    }

    fn finger_joints(&self, f: usize) -> std::ops::Range<usize> {
        let start = self.finger_offset[f];
        let end = self.finger_offset.get(f + 1).copied().unwrap_or(self.joint_count);
        start..end
    }

    pub fn kinematics(&self, q: &[f64], carrier: V2) -> Kinematics {
        let mut joints = Vec::with_capacity(self.joint_count);
        let mut angles = Vec::with_capacity(self.joint_count);
        let mut tips = Vec::with_capacity(self.config.fingers.len());
        for (fi, f) in self.config.fingers.iter().enumerate() {
            let mut p = add(f.base, carrier);
            let mut psi = f.base_angle;
            for j in self.finger_joints(fi) {
                psi += q[j];
                joints.push(p);
                angles.push(psi);
                let (s, c) = psi.sin_cos();
                p = [p[0] + self.lengths[j] * c, p[1] + self.lengths[j] * s];
            }
            tips.push(p);
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let j = self.finger_offset[n.finger] + n.segment;
                let (s, c) = angles[j].sin_cos();
                let l = self.lengths[j] * n.fraction;
                [joints[j][0] + l * c, joints[j][1] + l * s]
            })
            .collect();
        Kinematics { joints, angles, tips, nodes }
    }

    /// Adds `w . dp/dq` for a point rigidly attached to `node`'s segment.
    fn push_node(&self, kin: &Kinematics, node: usize, point: V2, w: V2, grad: &mut [f64]) {
        let n = self.nodes[node];
        let start = self.finger_offset[n.finger];
        for j in start..=start + n.segment {
            grad[j] += dot(w, perp(sub(point, kin.joints[j])));
        }
    }

    /// Adds `w . dx/dq` for an object point at world position `point`.
    fn push_object(&self, pose: [f64; 3], point: V2, w: V2, grad: &mut [f64]) {
        let o = self.joint_count;
        grad[o] += w[0];
        grad[o + 1] += w[1];
        grad[o + 2] += dot(w, perp(sub(point, [pose[0], pose[1]])));
    }

    /// Signed distance from a world point to the object surface and the
    /// outward unit normal.
    pub fn object_sdf(&self, pose: [f64; 3], p: V2) -> (f64, V2) {
        let shape = self.config.object.as_ref().expect("object").shape;
        let c = [pose[0], pose[1]];
        match shape {
            Shape::Circle { radius } => {
                let d = sub(p, c);
                let r = norm(d);
                let n = if r > 0.0 { scale(d, 1.0 / r) } else { [0.0, 1.0] };
                (r - radius, n)
            }
            Shape::Square { corner_radius, .. } | Shape::Rectangle { corner_radius, .. } => {
                let u = rotate(sub(p, c), -pose[2]);
                let [hx, hy] = shape.half_extents();
                let qx = u[0].abs() - (hx - corner_radius);
                let qy = u[1].abs() - (hy - corner_radius);
                let (dist, local) = if qx > 0.0 || qy > 0.0 {
                    let ox = qx.max(0.0);
                    let oy = qy.max(0.0);
                    let r = ox.hypot(oy);
                    (r, [ox / r * u[0].signum(), oy / r * u[1].signum()])
                } else if qx > qy {
                    (qx, [u[0].signum(), 0.0])
                } else {
                    (qy, [0.0, u[1].signum()])
                };
                (dist - corner_radius, rotate(local, pose[2]))
            }
        }
    }

    pub fn pose(&self, q: &[f64]) -> Option<[f64; 3]> {
        self.has_object().then(|| {
            let o = self.joint_count;
            [q[o], q[o + 1], q[o + 2]]
        })
    }

    fn palm_range(&self, carrier: V2) -> Option<(f64, f64, f64)> {
        self.config
            .palm
            .map(|p| (p.y + carrier[1], p.x_range[0] + carrier[0], p.x_range[1] + carrier[0]))
    }

    /// Every penetrating contact at `q`.
    pub fn contacts(&self, q: &[f64], inputs: &Inputs, kin: &Kinematics) -> Vec<ActiveContact> {
        let mut out = Vec::new();
        let r = |f: usize| self.config.fingers[f].thickness;
        let pose = self.pose(q);
        if let Some(pose) = pose {
            for (i, &p) in kin.nodes.iter().enumerate() {
                let (sdf, n) = self.object_sdf(pose, p);
                let depth = r(self.nodes[i].finger) - sdf;
                if depth > 0.0 {
                    out.push(ActiveContact { key: ContactKey::NodeObject(i), depth, normal: n, point: p });
                }
            }
            for (i, &(local, rho)) in self.circles.iter().enumerate() {
                let k = add([pose[0], pose[1]], rotate(local, pose[2]));
                if let Some((y, x0, x1)) = self.palm_range(inputs.carrier) {
                    let depth = rho - (k[1] - y);
                    if depth > 0.0 && k[0] >= x0 && k[0] <= x1 {
                        out.push(ActiveContact {
                            key: ContactKey::ObjectPalm(i),
                            depth,
                            normal: [0.0, 1.0],
                            point: [k[0], k[1] - rho],
                        });
                    }
                }
                if let Some(t) = self.config.table {
                    let (h, dh) = t.height_at(k[0]);
                    let depth = rho + h - k[1];
                    if depth > 0.0 {
                        let s = 1.0 / (1.0 + dh * dh).sqrt();
                        out.push(ActiveContact {
                            key: ContactKey::ObjectTable(i),
                            depth,
                            normal: [-dh * s, s],
                            point: [k[0], k[1] - rho],
                        });
                    }
                }
            }
        }
        if let Some(t) = self.config.table {
            for (i, &p) in kin.nodes.iter().enumerate() {
                let (h, dh) = t.height_at(p[0]);
                let rad = r(self.nodes[i].finger);
                let depth = rad + h - p[1];
                if depth > 0.0 {
                    let s = 1.0 / (1.0 + dh * dh).sqrt();
                    out.push(ActiveContact {
                        key: ContactKey::NodeTable(i),
                        depth,
                        normal: [-dh * s, s],
                        point: [p[0], p[1] - rad],
                    });
                }
            }
        }
        out
    }

    /// World position of the material pair `(first, second)` an anchor
    /// couples, at configuration `q`.
    fn anchor_points(&self, a: &Anchor, q: &[f64], inputs: &Inputs, kin: &Kinematics) -> (V2, V2) {
        let pose = self.pose(q);
        let obj = |local: V2| {
            let p = pose.expect("object");
            add([p[0], p[1]], rotate(local, p[2]))
        };
        match a.key {
            ContactKey::NodeObject(i) => (kin.nodes[i], obj(a.reference)),
            ContactKey::ObjectPalm(_) => (obj(a.object_point), add(a.reference, inputs.carrier)),
            ContactKey::ObjectTable(_) => (obj(a.object_point), a.reference),
            ContactKey::NodeTable(i) => (kin.nodes[i], a.reference),
        }
    }

    fn mu(&self, key: ContactKey) -> f64 {
        let c = &self.config.contact;
        match key {
            ContactKey::NodeObject(_) => c.friction,
            ContactKey::ObjectPalm(_) => c.palm_friction,
            ContactKey::ObjectTable(_) | ContactKey::NodeTable(_) => c.table_friction,
        }
    }

    /// Energy at `q`; accumulates the gradient into `grad` when given.
    pub fn energy(&self, q: &[f64], inputs: &Inputs, mut grad: Option<&mut [f64]>) -> f64 {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut e = 0.0;
        for j in 0..self.joint_count {
            let d = q[j] - inputs.rest[j];
            e += 0.5 * self.stiffness[j] * d * d;
            if let Some(g) = grad.as_deref_mut() {
                g[j] += self.stiffness[j] * d;
            }
        }
        let pose = self.pose(q);
        if let (Some(p), Some(o)) = (pose, self.config.object.as_ref()) {
            let w = [o.mass * inputs.gravity[0] + inputs.force[0], o.mass * inputs.gravity[1] + inputs.force[1]];
            e -= w[0] * p[0] + w[1] * p[1] + inputs.torque * p[2];
            if let Some(g) = grad.as_deref_mut() {
                let k = self.joint_count;
                g[k] -= w[0];
                g[k + 1] -= w[1];
                g[k + 2] -= inputs.torque;
            }
        }
        let kin = self.kinematics(q, inputs.carrier);
        let kc = self.config.contact.stiffness;
        for c in self.contacts(q, inputs, &kin) {
            e += penalty(c.depth, kc);
            if let Some(g) = grad.as_deref_mut() {
                self.push_depth_gradient(&c, q, &kin, penalty_force(c.depth, kc), g);
            }
        }
        let eps = self.config.contact.stick_displacement;
        for a in &inputs.anchors {
            let (pa, pb) = self.anchor_points(a, q, inputs, &kin);
            let u = dot(sub(pa, pb), a.tangent);
            let ml = a.friction * a.normal_force;
            e += ml * f0(u.abs(), eps);
            if let Some(g) = grad.as_deref_mut() {
                let w = scale(a.tangent, ml * f1(u.abs(), eps) * u.signum());
                self.push_anchor(a, q, &kin, pa, pb, w, g);
            }
        }
        e
    }

    /// Adds `coef * d(depth)/dq`.
    fn push_depth_gradient(&self, c: &ActiveContact, q: &[f64], kin: &Kinematics, coef: f64, g: &mut [f64]) {
        match c.key {
            ContactKey::NodeObject(i) => {
                let pose = self.pose(q).expect("object");
                let p = kin.nodes[i];
                self.push_node(kin, i, p, scale(c.normal, -coef), g);
                self.push_object(pose, p, scale(c.normal, coef), g);
            }
            ContactKey::ObjectPalm(k) | ContactKey::ObjectTable(k) => {
                let pose = self.pose(q).expect("object");
                let centre = add([pose[0], pose[1]], rotate(self.circles[k].0, pose[2]));
                let slope = if let ContactKey::ObjectTable(_) = c.key {
                    self.config.table.expect("table").height_at(centre[0]).1
                } else {
                    0.0
                };
                self.push_object(pose, centre, [coef * slope, -coef], g);
            }
            ContactKey::NodeTable(i) => {
                let p = kin.nodes[i];
                let slope = self.config.table.expect("table").height_at(p[0]).1;
                self.push_node(kin, i, p, [coef * slope, -coef], g);
            }
        }
    }

    /// Adds `w . d(pa - pb)/dq`.
    #[allow(clippy::too_many_arguments)]
    fn push_anchor(&self, a: &Anchor, q: &[f64], kin: &Kinematics, pa: V2, pb: V2, w: V2, g: &mut [f64]) {
        match a.key {
            ContactKey::NodeObject(i) => {
                self.push_node(kin, i, pa, w, g);
                self.push_object(self.pose(q).expect("object"), pb, scale(w, -1.0), g);
            }
            ContactKey::ObjectPalm(_) | ContactKey::ObjectTable(_) => {
                self.push_object(self.pose(q).expect("object"), pa, w, g);
            }
            ContactKey::NodeTable(i) => self.push_node(kin, i, pa, w, g),
        }
    }

    /// Friction anchors for the equilibrium `q`, carrying over the material
    /// pairing of contacts that persist. Contacts that slipped past the
    /// stick threshold have their pairing moved to the threshold.
    pub fn refresh_anchors(&self, q: &[f64], inputs: &Inputs) -> Vec<Anchor> {
        let kin = self.kinematics(q, inputs.carrier);
        let contacts = self.contacts(q, inputs, &kin);
        let eps = self.config.contact.stick_displacement;
        let kc = self.config.contact.stiffness;
        let pose = self.pose(q);
        let to_local = |p: V2| {
            let o = pose.expect("object");
            rotate(sub(p, [o[0], o[1]]), -o[2])
        };
        contacts
            .iter()
            .map(|c| {
                let tangent = perp(c.normal);
                let mut anchor = Anchor {
                    key: c.key,
                    reference: [0.0, 0.0],
                    object_point: [0.0, 0.0],
                    tangent,
                    normal_force: penalty_force(c.depth, kc),
                    friction: self.mu(c.key),
                };
                // Tangential offset to keep between the pair.
                let offset = match inputs.anchors.iter().find(|a| a.key == c.key) {
                    Some(prev) => {
                        let (pa, pb) = self.anchor_points(prev, q, inputs, &kin);
                        dot(sub(pa, pb), tangent).clamp(-eps, eps)
                    }
                    None => 0.0,
                };
                let shift = scale(tangent, offset);
                match c.key {
                    ContactKey::NodeObject(_) => {
                        anchor.reference = to_local(sub(c.point, shift));
                    }
                    ContactKey::ObjectPalm(_) => {
                        anchor.object_point = to_local(c.point);
                        anchor.reference = sub(sub(c.point, shift), inputs.carrier);
                    }
                    ContactKey::ObjectTable(_) => {
                        anchor.object_point = to_local(c.point);
                        anchor.reference = sub(c.point, shift);
                    }
                    ContactKey::NodeTable(i) => {
                        anchor.reference = sub(kin.nodes[i], shift);
                    }
                }
                anchor
            })
            .collect()
    }
}

impl Model {
    /// Gradient of the contact and friction terms whose key satisfies
    /// `keep`.
    pub fn partial_gradient(&self, q: &[f64], inputs: &Inputs, keep: impl Fn(&ContactKey) -> bool) -> Vec<f64> {
        let mut g = vec![0.0; q.len()];
        let kin = self.kinematics(q, inputs.carrier);
        let kc = self.config.contact.stiffness;
        for c in self.contacts(q, inputs, &kin).iter().filter(|c| keep(&c.key)) {
            self.push_depth_gradient(c, q, &kin, penalty_force(c.depth, kc), &mut g);
        }
        let eps = self.config.contact.stick_displacement;
        for a in inputs.anchors.iter().filter(|a| keep(&a.key)) {
            let (pa, pb) = self.anchor_points(a, q, inputs, &kin);
            let u = dot(sub(pa, pb), a.tangent);
            let w = scale(a.tangent, a.friction * a.normal_force * f1(u.abs(), eps) * u.signum());
            self.push_anchor(a, q, &kin, pa, pb, w, &mut g);
        }
        g
    }
}
