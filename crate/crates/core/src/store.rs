//! The data set of probed Jacobians and nearest-neighbour retrieval.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::jacobian::{join, parse_list, DeformationJacobian};
use crate::sensor::{DeformationState, SensorVector};

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianRecord {
    pub id: usize,
    pub key_sensor: SensorVector,
    pub key_deformation: DeformationState,
    pub jacobian: DeformationJacobian,
    pub use_count: usize,
    pub last_improved_tick: Option<usize>,
}

impl JacobianRecord {
    fn distance_sq(&self, s: &SensorVector, ds: &DeformationState) -> f64 {
        let a = self.key_sensor.values.iter().zip(&s.values);
        let b = self.key_deformation.values.iter().zip(&ds.values);
        a.chain(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

/// Append-only store; ids are assigned in insertion order from 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JacobianStore {
    records: Vec<JacobianRecord>,
}

impl JacobianStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[JacobianRecord] {
        &self.records
    }

    pub fn get(&self, id: usize) -> Option<&JacobianRecord> {
        self.records.get(id)
    }

    /// Adds a Jacobian keyed by the absolute sensor and deformation state
    /// it was probed at.
    pub fn insert(&mut self, jacobian: DeformationJacobian) -> Result<usize> {
        if let Some(first) = self.records.first() {
            let ks = jacobian.acquisition_sensor.len();
            let kd = jacobian.acquisition_deformation.len();
            if ks != first.key_sensor.len() || kd != first.key_deformation.len() {
                return Err(Error::ChannelMismatch { expected: first.key_sensor.len(), got: ks });
            }
        }
        let id = self.records.len();
        self.records.push(JacobianRecord {
            id,
            key_sensor: jacobian.acquisition_sensor.clone(),
            key_deformation: jacobian.acquisition_deformation.clone(),
            jacobian,
            use_count: 0,
            last_improved_tick: None,
        });
        Ok(id)
    }

    /// Record closest to `(s, ds)` in unweighted Euclidean distance on the
    /// concatenated vector. Ties go to the lowest id.
    pub fn nearest(&self, s: &SensorVector, ds: &DeformationState) -> Result<&JacobianRecord> {
        let mut best: Option<(f64, &JacobianRecord)> = None;
        for r in &self.records {
            if r.key_sensor.len() != s.len() || r.key_deformation.len() != ds.len() {
                return Err(Error::ChannelMismatch { expected: r.key_sensor.len(), got: s.len() });
            }
            let d = r.distance_sq(s, ds);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, r));
            }
        }
        best.map(|(_, r)| r).ok_or(Error::EmptyStore)
    }

    pub(crate) fn mark_used(&mut self, id: usize) {
        self.records[id].use_count += 1;
    }

    pub(crate) fn mark_improved(&mut self, id: usize, tick: usize) {
        self.records[id].last_improved_tick = Some(tick);
    }

    /// Writes `manifest.csv` plus one `jacobian_<id>.csv` per record.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        let (ns, nd) = self
            .records
            .first()
            .map_or((0, 0), |r| (r.key_sensor.len(), r.key_deformation.len()));
        let mut header = vec!["id".to_string()];
        header.extend((0..ns).map(|i| format!("key_sensor_{i}")));
        header.extend((0..nd).map(|i| format!("key_deformation_{i}")));
        header.push("use_count".into());
        manifest.push_str(&header.join(","));
        manifest.push('\n');
        for r in &self.records {
            manifest.push_str(&format!(
                "{},{},{},{}\n",
                r.id,
                join(r.key_sensor.values.iter()),
                join(r.key_deformation.values.iter()),
                r.use_count
            ));
            r.jacobian.save(&dir.join(format!("jacobian_{}.csv", r.id)))?;
        }
        fs::write(dir.join("manifest.csv"), manifest)?;
        Ok(())
    }

    /// Loads a store written by [`JacobianStore::save`]. A missing
    /// directory yields an empty store.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join("manifest.csv");
        if !manifest.exists() {
            return Ok(Self::new());
        }
        let text = fs::read_to_string(&manifest)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let ns = header.split(',').filter(|h| h.starts_with("key_sensor_")).count();
        let mut store = Self::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            let id: usize = fields[0].parse().map_err(|_| Error::Format(format!("bad id in {line:?}")))?;
            if id != store.len() {
                return Err(Error::Format(format!("manifest ids out of order at {id}")));
            }
            let use_count: usize = parse_list(&fields[fields.len() - 1..])?[0];
            let keys: Vec<f64> = parse_list(&fields[1..fields.len() - 1])?;
            let jacobian = DeformationJacobian::load(&dir.join(format!("jacobian_{id}.csv")))?;
            if keys[..ns] != jacobian.acquisition_sensor.values[..] {
                return Err(Error::Format(format!("manifest key mismatch for record {id}")));
            }
            store.insert(jacobian)?;
            store.records[id].use_count = use_count;
        }
        Ok(store)
    }
}
