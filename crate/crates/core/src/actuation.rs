//! Actuation vectors in equilibrium-point units.
//!
//! Each channel sets the rest configuration a compartment would reach
//! without external load. Values are clamped to per-channel bounds and a
//! disabled channel keeps whatever value it held when it was disabled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        assert!(max >= min, "bounds must satisfy max >= min");
        Self { min, max }
    }

    pub fn unit() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationVector {
    labels: Vec<String>,
    values: Vec<f64>,
    bounds: Vec<Bounds>,
    disabled: Vec<bool>,
}

impl ActuationVector {
    /// Builds a vector with every channel enabled; values are clamped into bounds.
    pub fn new(labels: Vec<String>, bounds: Vec<Bounds>, values: Vec<f64>) -> Result<Self> {
        if labels.len() != bounds.len() {
            return Err(Error::ChannelMismatch { expected: labels.len(), got: bounds.len() });
        }
        if labels.len() != values.len() {
            return Err(Error::ChannelMismatch { expected: labels.len(), got: values.len() });
        }
        let values = values.iter().zip(&bounds).map(|(v, b)| b.clamp(*v)).collect();
        let disabled = vec![false; labels.len()];
        Ok(Self { labels, values, bounds, disabled })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn value(&self, channel: usize) -> f64 {
        self.values[channel]
    }

    pub fn is_disabled(&self, channel: usize) -> bool {
        self.disabled[channel]
    }

    pub fn disabled_mask(&self) -> &[bool] {
        &self.disabled
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Writes new values for every enabled channel, clamped to bounds.
    /// Disabled channels ignore the request.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::ChannelMismatch { expected: self.values.len(), got: values.len() });
        }
        for (i, v) in values.iter().enumerate() {
            if !self.disabled[i] {
                self.values[i] = self.bounds[i].clamp(*v);
            }
        }
        Ok(())
    }

    /// Sets a single enabled channel, clamped. Returns the value actually stored.
    pub fn set(&mut self, channel: usize, value: f64) -> f64 {
        if !self.disabled[channel] {
            self.values[channel] = self.bounds[channel].clamp(value);
        }
        self.values[channel]
    }

    /// Freezes the given channels at their current values.
    ///
    /// Fails with [`Error::AllDisabled`] when no channel would remain enabled;
    /// the vector is left untouched in that case.
    pub fn disable(&mut self, channels: &[usize]) -> Result<()> {
        for &c in channels {
            if c >= self.len() {
                return Err(Error::InvalidChannels(format!("actuation channel {c} out of range")));
            }
        }
        let remaining = (0..self.len())
            .filter(|i| !self.disabled[*i] && !channels.contains(i))
            .count();
        if remaining == 0 {
            return Err(Error::AllDisabled);
        }
        for &c in channels {
            self.disabled[c] = true;
        }
        Ok(())
    }

    pub fn within_bounds(&self) -> bool {
        self.values.iter().zip(&self.bounds).all(|(v, b)| b.contains(*v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector() -> ActuationVector {
        ActuationVector::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![Bounds::unit(); 3],
            vec![0.2, 0.5, 0.8],
        )
        .unwrap()
    }

    #[test]
    fn values_are_clamped() {
        let mut a = vector();
        a.set_values(&[-1.0, 0.5, 3.0]).unwrap();
        assert_eq!(a.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn disabled_channel_is_frozen() {
        let mut a = vector();
        a.disable(&[1]).unwrap();
        a.set_values(&[0.1, 0.9, 0.1]).unwrap();
        assert_eq!(a.values(), &[0.1, 0.5, 0.1]);
        assert_eq!(a.set(1, 0.0), 0.5);
    }

    #[test]
    fn disabling_everything_is_rejected() {
        let mut a = vector();
        a.disable(&[0, 1]).unwrap();
        assert!(matches!(a.disable(&[2]), Err(Error::AllDisabled)));
        assert!(!a.is_disabled(2));
    }
}
