//! Reference plants with closed-form sensor maps.
//!
//! They settle instantly and exactly, which makes them oracles for the
//! controller: an affine plant has a known Jacobian, so probe accuracy and
//! convergence can be checked against closed-form values.

use nalgebra::{DMatrix, DVector};

use crate::actuation::{ActuationVector, Bounds};
use crate::error::{PlantError, Result};
use crate::plant::Plant;
use crate::sensor::SensorVector;

/// Plant whose sensors are an arbitrary function of actuation.
pub struct FnPlant<F> {
    actuation: ActuationVector,
    map: F,
    sensors: SensorVector,
    labels: Vec<String>,
    /// Number of `actuate` calls, i.e. settles caused by commands.
    pub actuations: usize,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnPlant<F> {
    pub fn new(actuation: ActuationVector, map: F) -> Self {
        let sensors = SensorVector::new(map(actuation.values()));
        let labels = (0..sensors.len()).map(|i| format!("s{i}")).collect();
        Self { actuation, map, sensors, labels, actuations: 0 }
    }

    /// Channels labelled `a0..`, bounds `[lo, hi]`, starting at `start`.
    pub fn with_channels(start: &[f64], bounds: Bounds, map: F) -> Self {
        let labels = (0..start.len()).map(|i| format!("a{i}")).collect();
        let act = ActuationVector::new(labels, vec![bounds; start.len()], start.to_vec())
            .expect("consistent channel counts");
        Self::new(act, map)
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> Plant for FnPlant<F> {
    fn actuation(&self) -> &ActuationVector {
        &self.actuation
    }

    fn actuate(&mut self, values: &[f64]) -> Result<(), PlantError> {
        self.actuation.set_values(values).map_err(|e| PlantError::Other(e.to_string()))?;
        self.sensors = SensorVector::new((self.map)(self.actuation.values()));
        self.actuations += 1;
        Ok(())
    }

    fn settle(&mut self) -> Result<(), PlantError> {
        Ok(())
    }

    fn sensors(&self) -> SensorVector {
        self.sensors.clone()
    }

    fn sensor_labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn disable(&mut self, channels: &[usize]) -> Result<()> {
        self.actuation.disable(channels)
    }
}

/// `s(a) = M a + b`.
pub fn affine_map(m: DMatrix<f64>, b: DVector<f64>) -> impl Fn(&[f64]) -> Vec<f64> {
    move |a: &[f64]| (&m * DVector::from_column_slice(a) + &b).iter().copied().collect()
}
