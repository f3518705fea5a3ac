#![allow(dead_code)]

use deform_core::synthetic::{affine_map, FnPlant};
use deform_core::{
    ActuationVector, Bounds, ControlTarget, DeformationModel, DemonstrationPlant, FreeMotionModel, ModelGroup,
    NormalizationTable, Plant, PlantError, SensorVector, Wrench,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identity normalization and a zero free-motion prediction, so the
/// deformation equals the raw sensor vector.
pub fn flat_model(actuations: usize, sensors: usize) -> DeformationModel {
    let groups = vec![ModelGroup {
        name: "all".into(),
        actuation_channels: (0..actuations).collect(),
        sensor_channels: (0..sensors).collect(),
        model: FreeMotionModel::constant(actuations, vec![0.0; sensors]),
    }];
    DeformationModel::new(actuations, NormalizationTable::identity(sensors), groups).unwrap()
}

pub fn well_conditioned(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |r, c| if r == c { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3))
}

pub type AffinePlant = FnPlant<Box<dyn Fn(&[f64]) -> Vec<f64>>>;

pub fn affine_plant(m: DMatrix<f64>, b: DVector<f64>, start: &[f64]) -> AffinePlant {
    FnPlant::with_channels(start, Bounds::unit(), Box::new(affine_map(m, b)))
}

/// Affine plant and a target it reaches at `goal`.
pub fn affine_case(seed: u64, n: usize, m: usize, start: &[f64], goal: &[f64]) -> (AffinePlant, ControlTarget) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mat = well_conditioned(&mut rng, n, m);
    let b = DVector::from_fn(n, |_, _| rng.gen_range(-0.2..0.2));
    let values = affine_map(mat.clone(), b.clone())(goal);
    let target = ControlTarget { rows: (0..n).collect(), values, cols: (0..m).collect(), success_threshold: 1e-3 };
    (affine_plant(mat, b, start), target)
}

/// Affine plant whose object can be pushed: `s = M a + W w`.
pub struct PushPlant {
    pub actuation: ActuationVector,
    pub m: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub wrench: Wrench,
}

impl PushPlant {
    pub fn new(m: DMatrix<f64>, w: DMatrix<f64>, start: &[f64]) -> Self {
        let labels = (0..start.len()).map(|i| format!("a{i}")).collect();
        let actuation = ActuationVector::new(labels, vec![Bounds::unit(); start.len()], start.to_vec()).unwrap();
        Self { actuation, m, w, wrench: Wrench::default() }
    }
}

impl Plant for PushPlant {
    fn actuation(&self) -> &ActuationVector {
        &self.actuation
    }

    fn actuate(&mut self, values: &[f64]) -> Result<(), PlantError> {
        self.actuation.set_values(values).map_err(|e| PlantError::Other(e.to_string()))
    }

    fn settle(&mut self) -> Result<(), PlantError> {
        Ok(())
    }

    fn sensors(&self) -> SensorVector {
        let a = DVector::from_column_slice(self.actuation.values());
        let w = DVector::from_column_slice(&[self.wrench.fx, self.wrench.fy, self.wrench.torque]);
        SensorVector::new((&self.m * a + &self.w * w).iter().copied().collect())
    }

    fn sensor_labels(&self) -> Vec<String> {
        (0..self.m.nrows()).map(|i| format!("s{i}")).collect()
    }

    fn disable(&mut self, channels: &[usize]) -> deform_core::Result<()> {
        self.actuation.disable(channels)
    }
}

impl DemonstrationPlant for PushPlant {
    fn apply_wrench(&mut self, wrench: Wrench) -> Result<(), PlantError> {
        self.wrench = wrench;
        Ok(())
    }

    fn raw_sensors(&self) -> SensorVector {
        self.sensors()
    }

    fn object_pose(&self) -> Option<[f64; 3]> {
        Some([self.wrench.fx, self.wrench.fy, self.wrench.torque])
    }

    fn contact_force(&self) -> [f64; 2] {
        [self.wrench.fx, self.wrench.fy]
    }
}
