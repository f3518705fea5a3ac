//! Scenario configuration file.
//!
//! Every field has a default, so an empty file runs the built-in scene
//! with the built-in shift skill. Relative paths resolve against the
//! directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use deform_core::{FitConfig, FunnelPolicy, ProbeConfig, Threshold};

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scene file; the built-in scene for the scenario when absent.
    pub scene: Option<PathBuf>,
    /// Calibrated model to reuse instead of calibrating.
    pub model: Option<PathBuf>,
    pub seed: u64,
    pub calibration: CalibrationSettings,
    pub policy: FunnelPolicy,
    pub probe: ProbeConfig,
    /// Skill learned by `learn-skill` and by every sweep.
    pub skill: SkillSettings,
    pub run: RunSettings,
    pub sweep: SweepSettings,
    pub sequence: SequenceSettings,
    pub slide: SlideSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scene: None,
            model: None,
            seed: 0,
            calibration: CalibrationSettings::default(),
            policy: FunnelPolicy::default(),
            probe: ProbeConfig::default(),
            skill: SkillSettings::default(),
            run: RunSettings::default(),
            sweep: SweepSettings::default(),
            sequence: SequenceSettings::default(),
            slide: SlideSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Grid points per actuation channel.
    pub grid_points: usize,
    /// Random free-motion configurations used for the held-out check.
    pub held_out: usize,
    pub fit: FitConfig,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { grid_points: 5, held_out: 50, fit: FitConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSettings {
    /// Wrench trajectory CSV; generated from `profile` when absent.
    pub file: Option<PathBuf>,
    /// Peak `(fx, fy, torque)`.
    pub wrench: [f64; 3],
    /// Samples on the way up to the peak.
    pub samples: usize,
    pub profile: DemoProfile,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self { file: None, wrench: [-1.5, 0.0, 0.0], samples: 15, profile: DemoProfile::Ramp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoProfile {
    /// Linear rise to the peak, ending loaded.
    Ramp,
    /// Rise to the peak and back to zero, for motions that persist after
    /// the push.
    Pulse,
}

/// A feedback skill learned by demonstration. Channel lists hold labels
/// or label prefixes (`ring` selects every `ring_*` channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkillSettings {
    pub name: String,
    pub target: Vec<String>,
    pub controlled: Vec<String>,
    pub demo: DemoSettings,
    pub threshold: Threshold,
}

impl Default for SkillSettings {
    fn default() -> Self {
        Self {
            name: "shift".into(),
            target: vec!["ring".into()],
            controlled: vec!["thumb".into(), "little".into()],
            demo: DemoSettings::default(),
            threshold: Threshold::default(),
        }
    }
}

/// Inputs of `run-skill`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub skill: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub object_sizes: Vec<f64>,
    /// Sets of disabled actuation labels; when absent: none, each single
    /// controlled channel, every half-sized subset, and all of them.
    pub disabled_sets: Option<Vec<Vec<String>>>,
    pub gravity_angles_deg: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            object_sizes: vec![3.0, 3.75, 4.5, 5.25, 6.0],
            disabled_sets: None,
            gravity_angles_deg: (0..8).map(|i| 45.0 * i as f64).collect(),
        }
    }
}

/// One stage of a learned sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSettings {
    pub skill: SkillSettings,
    /// Open-loop stages add these deltas to `skill.controlled` instead of
    /// learning a target.
    pub open_loop: Option<Vec<f64>>,
    /// Object rotation the stage must produce, checked on the simulator
    /// pose.
    pub expect_rotation_deg: Option<f64>,
    pub rotation_tolerance_deg: f64,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self { skill: SkillSettings::default(), open_loop: None, expect_rotation_deg: None, rotation_tolerance_deg: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSettings {
    /// Sequence file of already learned skills; `stages` are learned and
    /// then run when absent.
    pub file: Option<PathBuf>,
    pub stages: Vec<StageSettings>,
}

impl Default for SequenceSettings {
    fn default() -> Self {
        Self { file: None, stages: crate::sequence::default_stages() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlideSettings {
    /// Downward carrier displacement that defines the demonstrated press.
    pub press_depth: f64,
    pub ticks: usize,
    /// Lateral carrier advance per tick.
    pub lateral_step: f64,
    /// Half-width of the deformation band around the pressed target.
    pub band: f64,
    /// Ticks a band excursion may last.
    pub recovery_ticks: usize,
    /// Allowed deviation of the contact-force magnitude from its median.
    pub force_margin: f64,
}

impl Default for SlideSettings {
    fn default() -> Self {
        Self { press_depth: 0.7, ticks: 120, lateral_step: 0.05, band: 0.05, recovery_ticks: 20, force_margin: 1.0 }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.scene);
        fix(&mut self.model);
        fix(&mut self.skill.demo.file);
        fix(&mut self.run.skill);
        fix(&mut self.sequence.file);
        for s in &mut self.sequence.stages {
            fix(&mut s.skill.demo.file);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        let stage_demos = self.sequence.stages.iter().map(|s| &s.skill.demo.file);
        for p in [&self.scene, &self.model, &self.skill.demo.file, &self.run.skill, &self.sequence.file]
            .into_iter()
            .chain(stage_demos)
            .flatten()
        {
            if !p.exists() {
                return Err(HarnessError::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.sweep.object_sizes.is_empty() {
            return bad("sweep.object_sizes must not be empty");
        }
        if self.sweep.gravity_angles_deg.is_empty() {
            return bad("sweep.gravity_angles_deg must not be empty");
        }
        if matches!(&self.sweep.disabled_sets, Some(s) if s.is_empty()) {
            return bad("sweep.disabled_sets must not be empty");
        }
        if self.calibration.grid_points < 2 {
            return bad("calibration.grid_points must be at least 2");
        }
        let skills = std::iter::once(&self.skill).chain(self.sequence.stages.iter().map(|s| &s.skill));
        for s in skills {
            if s.demo.file.is_none() && s.demo.samples == 0 {
                return Err(HarnessError::Config(format!("skill {}: demo.samples must be positive", s.name)));
            }
        }
        if let Some(s) = self.sequence.stages.iter().find(|s| matches!(&s.open_loop, Some(d) if d.is_empty())) {
            return Err(HarnessError::Config(format!("stage {}: open_loop needs deltas", s.skill.name)));
        }
        if self.slide.band <= 0.0 || self.slide.lateral_step == 0.0 {
            return bad("slide.band must be positive and slide.lateral_step non-zero");
        }
        Ok(())
    }
}
