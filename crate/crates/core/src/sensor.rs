use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensor readings in channel order of the plant's sensor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorVector {
    pub values: Vec<f64>,
}

impl SensorVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sensor reading minus the free-motion prediction at the same actuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationState {
    pub values: Vec<f64>,
}

impl DeformationState {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Restricts to a subset of channels, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|&r| {
                self.values.get(r).copied().ok_or(Error::ChannelMismatch {
                    expected: self.values.len(),
                    got: r + 1,
                })
            })
            .collect()
    }
}
