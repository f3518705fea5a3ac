//! Per-channel min/max normalization learned from a calibration sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTable {
    pub channels: Vec<ChannelRange>,
}

impl NormalizationTable {
    /// Records the observed extrema of every channel.
    ///
    /// A channel whose readings never change cannot be normalized and is
    /// reported as [`Error::DegenerateChannel`].
    pub fn calibrate(samples: &[Vec<f64>]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
        }
        let n = samples[0].len();
        let mut channels = vec![ChannelRange { min: f64::INFINITY, max: f64::NEG_INFINITY }; n];
        for s in samples {
            if s.len() != n {
                return Err(Error::ChannelMismatch { expected: n, got: s.len() });
            }
            for (range, v) in channels.iter_mut().zip(s) {
                range.min = range.min.min(*v);
                range.max = range.max.max(*v);
            }
        }
        if let Some(i) = channels.iter().position(|c| !(c.max > c.min)) {
            return Err(Error::DegenerateChannel(i));
        }
        Ok(Self { channels })
    }

    /// Identity table: every channel maps [0, 1] onto itself.
    pub fn identity(n: usize) -> Self {
        Self { channels: vec![ChannelRange { min: 0.0, max: 1.0 }; n] }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        debug_assert_eq!(raw.len(), self.channels.len());
        raw.iter()
            .zip(&self.channels)
            .map(|(v, c)| (v - c.min) / (c.max - c.min))
            .collect()
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Vec<f64> {
        debug_assert_eq!(normalized.len(), self.channels.len());
        normalized
            .iter()
            .zip(&self.channels)
            .map(|(v, c)| c.min + v * (c.max - c.min))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_and_endpoints() {
        let t = NormalizationTable::calibrate(&[vec![2.0], vec![4.0]]).unwrap();
        assert_eq!(t.channels[0], ChannelRange { min: 2.0, max: 4.0 });
        assert_eq!(t.normalize(&[3.0]), vec![0.5]);
        assert_eq!(t.normalize(&[2.0]), vec![0.0]);
        assert_eq!(t.normalize(&[4.0]), vec![1.0]);
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let err = NormalizationTable::calibrate(&[vec![1.0, 5.0], vec![2.0, 5.0]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateChannel(1)));
    }

    #[test]
    fn single_sample_is_rejected() {
        assert!(matches!(
            NormalizationTable::calibrate(&[vec![1.0]]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip(lo in -10.0f64..10.0, span in 0.01f64..20.0, x in -50.0f64..50.0) {
            let t = NormalizationTable::calibrate(&[vec![lo], vec![lo + span]]).unwrap();
            let back = t.denormalize(&t.normalize(&[x]))[0];
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
