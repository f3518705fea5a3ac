//! Deformation state: sensors minus the free-motion prediction.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_motion::FreeMotionModel;
use crate::normalization::NormalizationTable;
use crate::sensor::{DeformationState, SensorVector};

pub const MODEL_FILE_VERSION: u32 = 1;

/// One actuator group: its actuation channels drive its sensor channels in
/// free motion, independently of every other group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGroup {
    pub name: String,
    pub actuation_channels: Vec<usize>,
    pub sensor_channels: Vec<usize>,
    pub model: FreeMotionModel,
}

/// Free-motion models for every group plus the normalization they were
/// fitted under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationModel {
    pub version: u32,
    pub actuation_count: usize,
    pub normalization: NormalizationTable,
    pub groups: Vec<ModelGroup>,
}

impl DeformationModel {
    pub fn new(actuation_count: usize, normalization: NormalizationTable, groups: Vec<ModelGroup>) -> Result<Self> {
        let model = Self { version: MODEL_FILE_VERSION, actuation_count, normalization, groups };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = self.normalization.len();
        let mut covered = vec![false; n];
        for g in &self.groups {
            if g.model.input_dim() != g.actuation_channels.len() || g.model.output_dim() != g.sensor_channels.len() {
                return Err(Error::InvalidChannels(format!("group {} does not match its model shape", g.name)));
            }
            if let Some(a) = g.actuation_channels.iter().find(|a| **a >= self.actuation_count) {
                return Err(Error::InvalidChannels(format!("group {} uses actuation channel {a}", g.name)));
            }
            for &s in &g.sensor_channels {
                if s >= n || covered[s] {
                    return Err(Error::InvalidChannels(format!("group {} claims sensor channel {s}", g.name)));
                }
                covered[s] = true;
            }
        }
        if let Some(s) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidChannels(format!("sensor channel {s} belongs to no group")));
        }
        Ok(())
    }

    pub fn sensor_count(&self) -> usize {
        self.normalization.len()
    }

    /// Free-motion prediction of the normalized sensor vector.
    pub fn predict(&self, actuation: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sensor_count()];
        for g in &self.groups {
            let a: Vec<f64> = g.actuation_channels.iter().map(|&i| actuation[i]).collect();
            for (s, y) in g.sensor_channels.iter().zip(g.model.eval(&a)) {
                out[*s] = y;
            }
        }
        out
    }

    /// Block matrix of free-motion derivatives, `sensors x actuations`.
    /// Entries outside a group's own block are zero.
    pub fn free_motion_jacobian(&self, actuation: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.sensor_count(), self.actuation_count);
        for g in &self.groups {
            let a: Vec<f64> = g.actuation_channels.iter().map(|&i| actuation[i]).collect();
            let block = g.model.jacobian(&a);
            for (r, &s) in g.sensor_channels.iter().enumerate() {
                for (c, &ai) in g.actuation_channels.iter().enumerate() {
                    jac[(s, ai)] = block[(r, c)];
                }
            }
        }
        jac
    }

    /// Sensor reading minus the free-motion prediction at the same actuation.
    pub fn compute_deformation(&self, sensors: &SensorVector, actuation: &[f64]) -> Result<DeformationState> {
        if sensors.len() != self.sensor_count() {
            return Err(Error::ChannelMismatch { expected: self.sensor_count(), got: sensors.len() });
        }
        if actuation.len() != self.actuation_count {
            return Err(Error::ChannelMismatch { expected: self.actuation_count, got: actuation.len() });
        }
        let free = self.predict(actuation);
        Ok(DeformationState::new(sensors.values.iter().zip(free).map(|(s, f)| s - f).collect()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let model: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if model.version != MODEL_FILE_VERSION {
            return Err(Error::Format(format!("unsupported model file version {}", model.version)));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_group_model() -> DeformationModel {
        let groups = vec![
            ModelGroup {
                name: "left".into(),
                actuation_channels: vec![0],
                sensor_channels: vec![0, 1],
                model: FreeMotionModel::constant(1, vec![0.25, 0.5]),
            },
            ModelGroup {
                name: "right".into(),
                actuation_channels: vec![1, 2],
                sensor_channels: vec![2],
                model: FreeMotionModel::constant(2, vec![1.0]),
            },
        ];
        DeformationModel::new(4, NormalizationTable::identity(3), groups).unwrap()
    }

    #[test]
    fn deformation_is_offset_from_prediction() {
        let m = two_group_model();
        let s = SensorVector::new(vec![0.35, 0.5, 1.0]);
        let ds = m.compute_deformation(&s, &[0.3, 0.2, 0.9, 0.0]).unwrap();
        assert!((ds.values[0] - 0.1).abs() < 1e-15);
        assert_eq!(&ds.values[1..], &[0.0, 0.0]);
    }

    #[test]
    fn mismatched_sensor_length() {
        let m = two_group_model();
        let err = m.compute_deformation(&SensorVector::new(vec![0.0; 2]), &[0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::ChannelMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn uncovered_channel_is_rejected() {
        let mut m = two_group_model();
        m.groups.pop();
        assert!(matches!(m.validate(), Err(Error::InvalidChannels(_))));
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let m = two_group_model();
        let back = DeformationModel::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
