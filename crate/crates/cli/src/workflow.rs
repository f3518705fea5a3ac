//! Steps shared by the scenarios: scenes, calibration, learning a skill by
//! demonstration and single funnel runs.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Duration;

use deform_core::{
    build_skill, read_wrench_trajectory, record_demonstration, run_funnel, DeformationModel, DemonstrationTrajectory,
    FitConfig, FunnelOutcome, JacobianStore, Plant, SkillSpec, Threshold, TimedWrench, Wrench,
};
use deform_sim::calibration::{self, CalibrationSamples};
use deform_sim::{PlantConfig, SimPlant};

use crate::error::{HarnessError, Result};
use crate::paced::Paced;
use crate::settings::{DemoProfile, DemoSettings, ScenarioConfig, SkillSettings};

/// Seconds between demonstration samples, matching the controller period.
pub const DEMO_SAMPLE_PERIOD: f64 = 0.2;

/// Everything a scenario needs besides its own settings.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ScenarioConfig,
    pub out: PathBuf,
    pub pace: Option<Duration>,
}

impl Context {
    pub fn new(config: ScenarioConfig, out: &Path) -> Self {
        Self { config, out: out.to_path_buf(), pace: None }
    }

    /// The configured scene file, or `builtin` when none is given.
    pub fn scene(&self, builtin: fn() -> PlantConfig) -> Result<PlantConfig> {
        let mut scene = match &self.config.scene {
            Some(p) => PlantConfig::load(p)?,
            None => builtin(),
        };
        scene.seed = self.config.seed;
        Ok(scene)
    }

    /// The configured model file, or a fresh calibration of `scene`.
    pub fn model(&self, scene: &PlantConfig) -> Result<DeformationModel> {
        match &self.config.model {
            Some(p) => Ok(DeformationModel::load(p)?),
            None => Ok(calibrate(scene, &self.config)?.model),
        }
    }

    pub fn plant(&self, scene: &PlantConfig, model: &DeformationModel) -> Result<Paced> {
        make_plant(scene, model, self.pace)
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub model: DeformationModel,
    pub samples: CalibrationSamples,
    /// Largest `|ds|` over the held-out free-motion configurations.
    pub held_out_error: f64,
}

pub fn calibrate(scene: &PlantConfig, cfg: &ScenarioConfig) -> Result<Calibration> {
    let c = &cfg.calibration;
    let samples = calibration::grid_samples(scene, c.grid_points)?;
    let fit = FitConfig { seed: c.fit.seed.wrapping_add(cfg.seed), ..c.fit.clone() };
    let model = calibration::fit_deformation_model(scene, &samples, &fit)?;
    let held_out_error = calibration::held_out_error(scene, &model, c.held_out, cfg.seed)?;
    Ok(Calibration { model, samples, held_out_error })
}

pub fn make_plant(scene: &PlantConfig, model: &DeformationModel, pace: Option<Duration>) -> Result<Paced> {
    let mut plant = SimPlant::new(scene.clone())?;
    if model.sensor_count() != plant.layout().channels.len() || model.normalization.len() != model.sensor_count() {
        return Err(HarnessError::Config(format!(
            "model has {} sensor channels, scene has {}",
            model.sensor_count(),
            plant.layout().channels.len()
        )));
    }
    plant.set_normalization(Some(model.normalization.clone()));
    Ok(Paced::new(plant, pace))
}

/// Indices of the labels equal to a pattern or starting with `pattern_`.
/// Every pattern must match something.
pub fn select(labels: &[String], patterns: &[String]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for p in patterns {
        let prefix = format!("{p}_");
        let before = out.len();
        out.extend(labels.iter().enumerate().filter(|(_, l)| *l == p || l.starts_with(&prefix)).map(|(i, _)| i));
        if out.len() == before {
            return Err(HarnessError::Config(format!("no channel matches {p:?}")));
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn demo_wrenches(d: &DemoSettings) -> Result<Vec<TimedWrench>> {
    if let Some(f) = &d.file {
        return Ok(read_wrench_trajectory(File::open(f)?)?);
    }
    let n = d.samples;
    let [fx, fy, torque] = d.wrench;
    let steps: Vec<usize> = match d.profile {
        DemoProfile::Ramp => (1..=n).collect(),
        DemoProfile::Pulse => (1..=2 * n).map(|i| i.min(2 * n - i)).collect(),
    };
    let at = |v: f64, k: usize| v * k as f64 / n as f64;
    Ok(steps
        .into_iter()
        .enumerate()
        .map(|(i, k)| TimedWrench {
            t: (i + 1) as f64 * DEMO_SAMPLE_PERIOD,
            wrench: Wrench::new(at(fx, k), at(fy, k), at(torque, k)),
        })
        .collect())
}

/// Direction of the demonstrated push: the largest-magnitude force sample.
pub fn demo_force(wrenches: &[TimedWrench]) -> [f64; 2] {
    wrenches
        .iter()
        .map(|w| [w.wrench.fx, w.wrench.fy])
        .max_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])))
        .unwrap_or([0.0, 0.0])
}

#[derive(Debug, Clone)]
pub struct LearnedSkill {
    pub spec: SkillSpec,
    pub demo: DemonstrationTrajectory,
    pub wrenches: Vec<TimedWrench>,
}

/// Demonstrates on a copy of `plant`, so `plant` keeps its pre-demo state
/// for the first run toward the new target.
///
/// A relative threshold is resolved once, against the error `plant` has
/// now, and stored as absolute: sweep points may start much closer to the
/// target than the learning start, and a threshold relative to each run's
/// own start would then be far tighter than at learning time.
pub fn learn_skill(plant: &SimPlant, model: &DeformationModel, s: &SkillSettings) -> Result<LearnedSkill> {
    let wrenches = demo_wrenches(&s.demo)?;
    let mut demo_plant = plant.clone();
    let demo = record_demonstration(&mut demo_plant, model, &wrenches)?;
    let rows = select(&plant.sensor_labels(), &s.target)?;
    let cols = select(plant.actuation().labels(), &s.controlled)?;
    let mut spec = build_skill(&s.name, &demo, &rows, &cols, s.threshold, plant.actuation())?;
    let resolved = spec.control_target(plant, model)?.success_threshold;
    spec.threshold = Threshold::Absolute(resolved);
    Ok(LearnedSkill { spec, demo, wrenches })
}

/// One funnel run of `spec` on a fresh plant with `disabled` frozen.
pub fn run_on_fresh_plant(
    ctx: &Context,
    scene: &PlantConfig,
    model: &DeformationModel,
    spec: &SkillSpec,
    store: &mut JacobianStore,
    disabled: &[usize],
) -> Result<(FunnelOutcome, Paced)> {
    let mut plant = ctx.plant(scene, model)?;
    if !disabled.is_empty() {
        plant.disable(disabled)?;
    }
    let target = spec.control_target(&plant, model)?;
    let outcome = run_funnel(&mut plant, model, &target, store, &ctx.config.policy, &ctx.config.probe)?;
    Ok((outcome, plant))
}

/// Store directory of a skill loaded from `skill_file`.
pub fn store_dir(spec: &SkillSpec, skill_file: &Path) -> PathBuf {
    let base = skill_file.parent().unwrap_or(Path::new("."));
    base.join(spec.store.clone().unwrap_or_else(|| PathBuf::from(format!("{}_store", spec.name))))
}

pub fn save_skill(out: &Path, spec: &SkillSpec, store: &JacobianStore) -> Result<PathBuf> {
    let path = out.join(format!("{}.toml", spec.name));
    spec.save(&path)?;
    store.save(&store_dir(spec, &path))?;
    Ok(path)
}
