//! Demonstrations, skill specifications and skill sequencing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actuation::ActuationVector;
use crate::deformation::DeformationModel;
use crate::error::{Error, Result};
use crate::funnel::{run_funnel, FunnelOutcome, FunnelPolicy};
use crate::jacobian::{control_error, norm, ControlTarget, ProbeConfig};
use crate::plant::{DemonstrationPlant, Plant, Wrench};
use crate::store::JacobianStore;
use crate::trace::{read_trace, write_trace, TimedWrench, TraceRow};

/// Equilibria recorded while a wrench pushes the object and actuation
/// stays frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationTrajectory {
    pub actuation_labels: Vec<String>,
    pub sensor_labels: Vec<String>,
    pub ticks: Vec<TraceRow>,
}

impl DemonstrationTrajectory {
    pub fn last(&self) -> Option<&TraceRow> {
        self.ticks.last()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_trace(file, &self.actuation_labels, &self.sensor_labels, &self.ticks)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let header = text.lines().next().unwrap_or_default();
        let labels = |prefix: &str| -> Vec<String> {
            header.split(',').filter_map(|h| h.strip_prefix(prefix)).map(str::to_owned).collect()
        };
        Ok(Self {
            actuation_labels: labels("a_"),
            sensor_labels: labels("raw_"),
            ticks: read_trace(text.as_bytes())?,
        })
    }
}

/// Records one equilibrium per wrench sample with the actuation frozen.
///
/// The wrench is released afterwards so the plant settles back into its
/// unloaded grasp.
pub fn record_demonstration<P: DemonstrationPlant + ?Sized>(
    plant: &mut P,
    model: &DeformationModel,
    wrenches: &[TimedWrench],
) -> Result<DemonstrationTrajectory> {
    if wrenches.is_empty() {
        return Err(Error::EmptyDemonstration);
    }
    if let Some(w) = wrenches.windows(2).find(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Format(format!("wrench times must increase strictly (at t = {})", w[1].t)));
    }
    let actuation = plant.actuation().values().to_vec();
    let mut ticks = Vec::with_capacity(wrenches.len());
    for (tick, sample) in wrenches.iter().enumerate() {
        plant.apply_wrench(sample.wrench)?;
        let sensors = plant.sensors();
        let deformation = model.compute_deformation(&sensors, &actuation)?;
        ticks.push(TraceRow {
            tick,
            time: sample.t,
            actuation: plant.actuation().values().to_vec(),
            raw_sensors: plant.raw_sensors().values,
            sensors: sensors.values,
            deformation: deformation.values,
            object_pose: plant.object_pose().unwrap_or_default(),
            contact_force: plant.contact_force(),
        });
    }
    plant.apply_wrench(Wrench::default())?;
    Ok(DemonstrationTrajectory {
        actuation_labels: plant.actuation().labels().to_vec(),
        sensor_labels: plant.sensor_labels(),
        ticks,
    })
}

/// Final-tick deformation restricted to `rows`.
pub fn extract_target(demo: &DemonstrationTrajectory, rows: &[usize]) -> Result<Vec<f64>> {
    let last = demo.last().ok_or(Error::EmptyDemonstration)?;
    rows.iter()
        .map(|&r| {
            last.deformation
                .get(r)
                .copied()
                .ok_or_else(|| Error::InvalidChannels(format!("deformation row {r} out of range")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Absolute(f64),
    /// Fraction of the error norm at skill start.
    Relative(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Self::Relative(0.25)
    }
}

impl Threshold {
    pub fn resolve(&self, initial_error_norm: f64) -> f64 {
        match *self {
            Self::Absolute(v) => v,
            Self::Relative(f) => f * initial_error_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillMode {
    Feedback,
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub name: String,
    pub mode: SkillMode,
    #[serde(default)]
    pub target_rows: Vec<usize>,
    #[serde(default)]
    pub target_values: Vec<f64>,
    pub controlled_cols: Vec<usize>,
    #[serde(default)]
    pub threshold: Threshold,
    /// Open-loop actuation change, one entry per controlled column.
    #[serde(default)]
    pub open_loop_delta: Vec<f64>,
    /// Directory of this skill's Jacobian store, relative to the skill file.
    #[serde(default)]
    pub store: Option<PathBuf>,
}

impl SkillSpec {
    pub fn open_loop(name: &str, cols: Vec<usize>, delta: Vec<f64>) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            mode: SkillMode::OpenLoop,
            target_rows: Vec::new(),
            target_values: Vec::new(),
            controlled_cols: cols,
            threshold: Threshold::default(),
            open_loop_delta: delta,
            store: None,
        };
        if spec.controlled_cols.is_empty() || spec.controlled_cols.len() != spec.open_loop_delta.len() {
            return Err(Error::InvalidChannels("open-loop skill needs one delta per column".into()));
        }
        Ok(spec)
    }

    pub fn validate(&self, sensor_count: usize, actuation: &ActuationVector) -> Result<()> {
        if self.controlled_cols.is_empty() {
            return Err(Error::InvalidChannels(format!("skill {} controls no actuation", self.name)));
        }
        if let Some(c) = self.controlled_cols.iter().find(|c| **c >= actuation.len()) {
            return Err(Error::InvalidChannels(format!("skill {}: actuation channel {c} out of range", self.name)));
        }
        if self.controlled_cols.iter().all(|c| actuation.is_disabled(*c)) {
            return Err(Error::InvalidChannels(format!("skill {}: every controlled channel is disabled", self.name)));
        }
        match self.mode {
            SkillMode::Feedback => {
                if self.target_rows.is_empty() || self.target_rows.len() != self.target_values.len() {
                    return Err(Error::InvalidChannels(format!("skill {} needs target rows and values", self.name)));
                }
                if let Some(r) = self.target_rows.iter().find(|r| **r >= sensor_count) {
                    return Err(Error::InvalidChannels(format!("skill {}: deformation row {r} out of range", self.name)));
                }
            }
            SkillMode::OpenLoop => {
                if self.open_loop_delta.len() != self.controlled_cols.len() {
                    return Err(Error::InvalidChannels(format!("skill {}: one delta per column", self.name)));
                }
            }
        }
        Ok(())
    }

    /// Control target with the threshold resolved against the error the
    /// plant currently has.
    pub fn control_target<P: Plant + ?Sized>(&self, plant: &P, model: &DeformationModel) -> Result<ControlTarget> {
        let mut target = ControlTarget {
            rows: self.target_rows.clone(),
            values: self.target_values.clone(),
            cols: self.controlled_cols.clone(),
            success_threshold: 0.0,
        };
        let ds = model.compute_deformation(&plant.sensors(), plant.actuation().values())?;
        target.success_threshold = self.threshold.resolve(norm(&control_error(&ds, &target)?));
        Ok(target)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Packages a demonstration into a feedback skill. Reachability of the
/// target is not checked, only channel validity.
pub fn build_skill(
    name: &str,
    demo: &DemonstrationTrajectory,
    rows: &[usize],
    cols: &[usize],
    threshold: Threshold,
    actuation: &ActuationVector,
) -> Result<SkillSpec> {
    let last = demo.last().ok_or(Error::EmptyDemonstration)?;
    if let Some(r) = rows.iter().find(|r| **r >= last.deformation.len()) {
        return Err(Error::InvalidChannels(format!("deformation row {r} out of range")));
    }
    let spec = SkillSpec {
        name: name.into(),
        mode: SkillMode::Feedback,
        target_rows: rows.to_vec(),
        target_values: extract_target(demo, rows)?,
        controlled_cols: cols.to_vec(),
        threshold,
        open_loop_delta: Vec::new(),
        store: Some(PathBuf::from(format!("{name}_store"))),
    };
    spec.validate(last.deformation.len(), actuation)?;
    Ok(spec)
}

/// Ordered list of skill files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFile {
    pub skills: Vec<PathBuf>,
}

impl SequenceFile {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub name: String,
    pub success: bool,
    pub funnel: Option<FunnelOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub success: bool,
    pub stages: Vec<StageOutcome>,
}

/// Applies an open-loop skill's actuation change and settles.
pub fn run_open_loop<P: Plant + ?Sized>(plant: &mut P, skill: &SkillSpec) -> Result<()> {
    let mut next = plant.actuation().values().to_vec();
    for (c, d) in skill.controlled_cols.iter().zip(&skill.open_loop_delta) {
        next[*c] += d;
    }
    plant.actuate(&next)?;
    Ok(())
}

/// Runs the skills in order, each feedback skill against its own store.
/// Stops at the first failing stage.
pub fn run_sequence<P: Plant + ?Sized>(
    plant: &mut P,
    model: &DeformationModel,
    skills: &[SkillSpec],
    stores: &mut [JacobianStore],
    policy: &FunnelPolicy,
    probe: &ProbeConfig,
) -> Result<SequenceOutcome> {
    if stores.len() != skills.len() {
        return Err(Error::ChannelMismatch { expected: skills.len(), got: stores.len() });
    }
    let mut stages = Vec::new();
    for (skill, store) in skills.iter().zip(stores.iter_mut()) {
        skill.validate(model.sensor_count(), plant.actuation())?;
        let stage = match skill.mode {
            SkillMode::OpenLoop => {
                run_open_loop(plant, skill)?;
                StageOutcome { name: skill.name.clone(), success: true, funnel: None }
            }
            SkillMode::Feedback => {
                let target = skill.control_target(plant, model)?;
                let outcome = run_funnel(plant, model, &target, store, policy, probe)?;
                StageOutcome { name: skill.name.clone(), success: outcome.success, funnel: Some(outcome) }
            }
        };
        let ok = stage.success;
        stages.push(stage);
        if !ok {
            return Ok(SequenceOutcome { success: false, stages });
        }
    }
    Ok(SequenceOutcome { success: true, stages })
}
