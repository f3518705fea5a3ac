//! The interface a controlled plant offers to the controller.

use serde::{Deserialize, Serialize};

use crate::actuation::ActuationVector;
use crate::error::PlantError;
use crate::sensor::SensorVector;

/// Planar wrench applied to the manipulated object.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub torque: f64,
}

impl Wrench {
    pub fn new(fx: f64, fy: f64, torque: f64) -> Self {
        Self { fx, fy, torque }
    }

    pub fn mirrored(&self) -> Self {
        Self { fx: -self.fx, fy: self.fy, torque: -self.torque }
    }
}

/// A plant settles to equilibrium whenever its actuation changes.
pub trait Plant {
    fn actuation(&self) -> &ActuationVector;

    /// Commands new actuation values (clamped, disabled channels ignored)
    /// and settles.
    fn actuate(&mut self, values: &[f64]) -> Result<(), PlantError>;

    /// Re-settles without changing the command.
    fn settle(&mut self) -> Result<(), PlantError>;

    /// Normalized sensor readings of the current equilibrium.
    fn sensors(&self) -> SensorVector;

    fn sensor_labels(&self) -> Vec<String>;

    /// Freezes actuation channels at their current values.
    fn disable(&mut self, channels: &[usize]) -> crate::error::Result<()>;
}

/// A plant whose object can be pushed by an external wrench, as a human
/// demonstrator would.
pub trait DemonstrationPlant: Plant {
    fn apply_wrench(&mut self, wrench: Wrench) -> Result<(), PlantError>;

    fn raw_sensors(&self) -> SensorVector;

    /// Object pose `(x, y, theta)`, for diagnostics only.
    fn object_pose(&self) -> Option<[f64; 3]>;

    /// Sum of contact forces the hand exerts.
    fn contact_force(&self) -> [f64; 2];
}
