//! Deformation Jacobians: finite-difference acquisition and the
//! transpose-gradient actuation update.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::actuation::ActuationVector;
use crate::deformation::DeformationModel;
use crate::error::{Error, Result};
use crate::plant::Plant;
use crate::sensor::{DeformationState, SensorVector};

/// Linearization of actuation to deformation around one probed state.
///
/// Rows cover every tracked deformation channel, columns the actuation
/// channels that were probed. On a group's own columns the free-motion
/// derivative has already been removed.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationJacobian {
    pub matrix: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Actuation channel index of every column.
    pub cols: Vec<usize>,
    pub acquisition_sensor: SensorVector,
    pub acquisition_deformation: DeformationState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTarget {
    /// Deformation channels that enter the error, in error order.
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
    /// Actuation channels the controller may move.
    pub cols: Vec<usize>,
    /// Success when the error norm drops to or below this bound.
    pub success_threshold: f64,
}

impl ControlTarget {
    pub fn validate(&self, sensor_count: usize, actuation: &ActuationVector) -> Result<()> {
        if self.rows.is_empty() || self.rows.len() != self.values.len() {
            return Err(Error::InvalidChannels("target rows and values must be non-empty and equal length".into()));
        }
        if let Some(r) = self.rows.iter().find(|r| **r >= sensor_count) {
            return Err(Error::InvalidChannels(format!("target row {r} out of range")));
        }
        if let Some(c) = self.cols.iter().find(|c| **c >= actuation.len()) {
            return Err(Error::InvalidChannels(format!("controlled column {c} out of range")));
        }
        Ok(())
    }

    /// Controlled columns that are still enabled on the plant.
    pub fn enabled_cols(&self, actuation: &ActuationVector) -> Vec<usize> {
        self.cols.iter().copied().filter(|c| !actuation.is_disabled(*c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Probe magnitude used for channels without an override.
    pub delta: f64,
    /// Per-channel probe magnitudes, `(channel, delta)`.
    #[serde(default)]
    pub overrides: Vec<(usize, f64)>,
    /// Re-settle the plant before the first reading.
    pub settle: bool,
    /// Probe fails when the cost after returning exceeds this multiple of
    /// the cost before the probe.
    pub destabilization_factor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { delta: 0.02, overrides: Vec::new(), settle: true, destabilization_factor: 10.0 }
    }
}

impl ProbeConfig {
    pub fn delta_for(&self, channel: usize) -> f64 {
        self.overrides.iter().find(|(c, _)| *c == channel).map_or(self.delta, |(_, d)| *d)
    }
}

/// Costs below this floor are treated as equal when checking for
/// destabilization, so probing at the target does not trip on noise.
const DESTABILIZATION_COST_FLOOR: f64 = 1e-6;

/// Error vector on the target rows: current minus target.
pub fn control_error(current: &DeformationState, target: &ControlTarget) -> Result<Vec<f64>> {
    if target.rows.len() != target.values.len() {
        return Err(Error::ChannelMismatch { expected: target.rows.len(), got: target.values.len() });
    }
    let selected = current.select(&target.rows)?;
    Ok(selected.iter().zip(&target.values).map(|(c, t)| c - t).collect())
}

pub fn cost(e: &[f64]) -> f64 {
    0.5 * e.iter().map(|v| v * v).sum::<f64>()
}

pub fn norm(e: &[f64]) -> f64 {
    e.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Step size minimizing the linearized error along `-J J^T e`.
///
/// Returns 0 when `J J^T e` vanishes, in which case the step makes no
/// progress by construction.
pub fn adaptive_step_size(j: &DMatrix<f64>, e: &[f64]) -> f64 {
    const DENOM_EPS: f64 = 1e-12;
    let e = DVector::from_column_slice(e);
    let jjte = j * (j.transpose() * &e);
    let denom = jjte.dot(&jjte);
    if denom > DENOM_EPS {
        e.dot(&jjte) / denom
    } else {
        0.0
    }
}

/// `a - alpha J^T e` on the Jacobian's columns, clamped to bounds.
/// Disabled channels and channels outside `cols` keep their value.
pub fn update_actuation(a: &ActuationVector, j: &DMatrix<f64>, cols: &[usize], e: &[f64], alpha: f64) -> Vec<f64> {
    debug_assert_eq!(j.ncols(), cols.len());
    let grad = j.transpose() * DVector::from_column_slice(e);
    let mut next = a.values().to_vec();
    for (k, &c) in cols.iter().enumerate() {
        if !a.is_disabled(c) {
            next[c] = a.bounds()[c].clamp(a.value(c) - alpha * grad[k]);
        }
    }
    next
}

impl DeformationJacobian {
    /// Sub-matrix on the target rows and the given actuation channels.
    /// Channels the Jacobian was not probed on are dropped.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
        let keep: Vec<(usize, usize)> = cols
            .iter()
            .filter_map(|c| self.cols.iter().position(|x| x == c).map(|k| (k, *c)))
            .collect();
        let mut m = DMatrix::zeros(rows.len(), keep.len());
        for (r, &row) in rows.iter().enumerate() {
            for (k, &(col, _)) in keep.iter().enumerate() {
                m[(r, k)] = self.matrix[(row, col)];
            }
        }
        (m, keep.into_iter().map(|(_, c)| c).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().all(|v| v.is_finite())
    }

    /// CSV dump: header `row,<col labels>`, one line per row, then metadata
    /// lines `@cols`, `@sensor` and `@deformation` for the acquisition state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,{}", self.col_labels.join(","))?;
        for (r, label) in self.row_labels.iter().enumerate() {
            let row: Vec<String> = (0..self.matrix.ncols()).map(|c| self.matrix[(r, c)].to_string()).collect();
            writeln!(w, "{label},{}", row.join(","))?;
        }
        writeln!(w, "@cols,{}", join(self.cols.iter()))?;
        writeln!(w, "@sensor,{}", join(self.acquisition_sensor.values.iter()))?;
        writeln!(w, "@deformation,{}", join(self.acquisition_deformation.values.iter()))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty jacobian file".into()))??;
        let col_labels: Vec<String> = header.split(',').skip(1).map(str::to_owned).collect();
        let mut row_labels = Vec::new();
        let mut values = Vec::new();
        let (mut cols, mut sensor, mut deformation) = (None, None, None);
        for line in lines {
            let line = line?;
            let mut fields = line.split(',');
            let head = fields.next().unwrap_or_default().to_owned();
            let rest: Vec<&str> = fields.collect();
            match head.as_str() {
                "@cols" => cols = Some(parse_list::<usize>(&rest)?),
                "@sensor" => sensor = Some(parse_list::<f64>(&rest)?),
                "@deformation" => deformation = Some(parse_list::<f64>(&rest)?),
                _ => {
                    let row = parse_list::<f64>(&rest)?;
                    if row.len() != col_labels.len() {
                        return Err(Error::Format(format!("row {head} has {} entries", row.len())));
                    }
                    row_labels.push(head);
                    values.extend(row);
                }
            }
        }
        let missing = |what: &str| Error::Format(format!("jacobian file lacks @{what}"));
        let cols = cols.ok_or_else(|| missing("cols"))?;
        if cols.len() != col_labels.len() {
            return Err(Error::Format("@cols does not match header".into()));
        }
        Ok(Self {
            matrix: DMatrix::from_row_slice(row_labels.len(), col_labels.len(), &values),
            row_labels,
            col_labels,
            cols,
            acquisition_sensor: SensorVector::new(sensor.ok_or_else(|| missing("sensor"))?),
            acquisition_deformation: DeformationState::new(deformation.ok_or_else(|| missing("deformation"))?),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub(crate) fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse_list<T: std::str::FromStr>(fields: &[&str]) -> Result<Vec<T>> {
    fields
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| f.trim().parse::<T>().map_err(|_| Error::Format(format!("cannot parse {f:?}"))))
        .collect()
}

fn deformation_cost(model: &DeformationModel, s: &SensorVector, a: &[f64], target: &ControlTarget) -> Result<f64> {
    let ds = model.compute_deformation(s, a)?;
    Ok(cost(&control_error(&ds, target)?))
}

/// Estimates the Deformation Jacobian on the target's enabled columns.
///
/// Each column takes three readings: `s1` before the probe, `s2` after
/// adding `delta`, `s3` after returning. The raw column is
/// `(2 s2 - s1 - s3) / (2 delta)`; the free-motion derivative is then
/// subtracted on each group's own block. The command is restored to its
/// initial value afterwards.
pub fn probe_jacobian<P: Plant + ?Sized>(
    plant: &mut P,
    model: &DeformationModel,
    probe: &ProbeConfig,
    target: &ControlTarget,
) -> Result<DeformationJacobian> {
    let cols = target.enabled_cols(plant.actuation());
    if cols.is_empty() {
        return Err(Error::AllDisabled);
    }
    if probe.settle {
        plant.settle()?;
    }
    let start = plant.actuation().values().to_vec();
    let acquisition_sensor = plant.sensors();
    let acquisition_deformation = model.compute_deformation(&acquisition_sensor, &start)?;
    let n = acquisition_sensor.len();
    let mut raw = DMatrix::zeros(n, cols.len());

    for (k, &c) in cols.iter().enumerate() {
        let bounds = plant.actuation().bounds()[c];
        let magnitude = probe.delta_for(c);
        let delta = if bounds.contains(start[c] + magnitude) {
            magnitude
        } else if bounds.contains(start[c] - magnitude) {
            -magnitude
        } else {
            return Err(Error::BoundsHit(c));
        };
        let s1 = plant.sensors();
        let mut probed = start.clone();
        probed[c] += delta;
        plant.actuate(&probed)?;
        let s2 = plant.sensors();
        plant.actuate(&start)?;
        let s3 = plant.sensors();
        for r in 0..n {
            raw[(r, k)] = (2.0 * s2.values[r] - s1.values[r] - s3.values[r]) / (2.0 * delta);
        }
        let before = deformation_cost(model, &s1, &start, target)?;
        let after = deformation_cost(model, &s3, &start, target)?;
        if after > probe.destabilization_factor * before.max(DESTABILIZATION_COST_FLOOR) {
            return Err(Error::ProbeDestabilized { column: c, before, after });
        }
    }

    let free = model.free_motion_jacobian(&start);
    for (k, &c) in cols.iter().enumerate() {
        for r in 0..n {
            raw[(r, k)] -= free[(r, c)];
        }
    }
    let labels = plant.actuation().labels();
    Ok(DeformationJacobian {
        matrix: raw,
        row_labels: plant.sensor_labels(),
        col_labels: cols.iter().map(|c| labels[*c].clone()).collect(),
        cols,
        acquisition_sensor,
        acquisition_deformation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaPolicy {
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub actuation: Vec<f64>,
    pub deformation: DeformationState,
    pub error: Vec<f64>,
    pub cost: f64,
    pub alpha: f64,
    pub improved: bool,
}

/// One control step: update actuation along `-alpha J^T e`, settle, and
/// re-evaluate. `improved` requires the cost to drop by more than
/// `progress_epsilon` below `previous_cost`.
pub fn control_tick<P: Plant + ?Sized>(
    plant: &mut P,
    model: &DeformationModel,
    target: &ControlTarget,
    jacobian: &DeformationJacobian,
    alpha_policy: AlphaPolicy,
    previous_cost: f64,
    progress_epsilon: f64,
) -> Result<StepResult> {
    let a = plant.actuation().clone();
    let ds = model.compute_deformation(&plant.sensors(), a.values())?;
    let e = control_error(&ds, target)?;
    let (j, cols) = jacobian.select(&target.rows, &target.enabled_cols(&a));
    let alpha = match alpha_policy {
        AlphaPolicy::Adaptive => adaptive_step_size(&j, &e),
        AlphaPolicy::Fixed(v) => v,
    };
    let next = update_actuation(&a, &j, &cols, &e, alpha);
    plant.actuate(&next)?;
    let actuation = plant.actuation().values().to_vec();
    let deformation = model.compute_deformation(&plant.sensors(), &actuation)?;
    let error = control_error(&deformation, target)?;
    let new_cost = cost(&error);
    Ok(StepResult {
        actuation,
        deformation,
        error,
        cost: new_cost,
        alpha,
        improved: new_cost < previous_cost - progress_epsilon,
    })
}
