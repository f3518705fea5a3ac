//! Optional wall-clock pacing of actuation commands.

use std::ops::{Deref, DerefMut};
use std::time::Duration;

use deform_core::{ActuationVector, DemonstrationPlant, Plant, PlantError, SensorVector, Wrench};
use deform_sim::SimPlant;

/// Controller period of the hardware the scenarios mimic (5 Hz).
pub const TICK_PERIOD: Duration = Duration::from_millis(200);

/// A simulated plant that optionally sleeps after every actuation command.
/// Pacing changes timing only; the plant state is never affected.
#[derive(Debug, Clone)]
pub struct Paced {
    plant: SimPlant,
    period: Option<Duration>,
}

impl Paced {
    pub fn new(plant: SimPlant, period: Option<Duration>) -> Self {
        Self { plant, period }
    }

    pub fn into_inner(self) -> SimPlant {
        self.plant
    }
}

impl Deref for Paced {
    type Target = SimPlant;

    fn deref(&self) -> &SimPlant {
        &self.plant
    }
}

impl DerefMut for Paced {
    fn deref_mut(&mut self) -> &mut SimPlant {
        &mut self.plant
    }
}

impl Plant for Paced {
    fn actuation(&self) -> &ActuationVector {
        self.plant.actuation()
    }

    fn actuate(&mut self, values: &[f64]) -> Result<(), PlantError> {
        let r = self.plant.actuate(values);
        if let Some(p) = self.period {
            std::thread::sleep(p);
        }
        r
    }

    fn settle(&mut self) -> Result<(), PlantError> {
        self.plant.settle()
    }

    fn sensors(&self) -> SensorVector {
        self.plant.sensors()
    }

    fn sensor_labels(&self) -> Vec<String> {
        self.plant.sensor_labels()
    }

    fn disable(&mut self, channels: &[usize]) -> deform_core::Result<()> {
        self.plant.disable(channels)
    }
}

impl DemonstrationPlant for Paced {
    fn apply_wrench(&mut self, wrench: Wrench) -> Result<(), PlantError> {
        self.plant.apply_wrench(wrench)
    }

    fn raw_sensors(&self) -> SensorVector {
        self.plant.raw_sensors()
    }

    fn object_pose(&self) -> Option<[f64; 3]> {
        self.plant.object_pose()
    }

    fn contact_force(&self) -> [f64; 2] {
        self.plant.contact_force()
    }
}
