//! Scenario drivers. Each returns its summary rows in a stable order;
//! runs that fail, including plant failures inside a run, are rows rather
//! than errors.

use std::fs::File;
use std::io::BufWriter;

use rayon::prelude::*;

use deform_core::{
    run_funnel, write_wrench_trajectory, ControlTarget, DeformationModel, FunnelOutcome, JacobianStore, Plant,
    SkillSpec,
};
use deform_sim::calibration::{free_motion_config, write_samples_csv};
use deform_sim::config::GravitySpec;
use deform_sim::{scene, PlantConfig, SimPlant};

use crate::error::{HarnessError, Result};
use crate::report::{file_stem, fmt_f64, run_failure, write_table, SummaryRow};
use crate::workflow::{self, demo_force, select, store_dir, Context};

/// Held-out free-motion deformation a calibration must stay under.
pub const HELD_OUT_TOLERANCE: f64 = 2e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Scenario {
    Calibrate,
    LearnSkill,
    RunSkill,
    SweepObjectSize,
    SweepDisabled,
    SweepGravity,
    Sequence,
    Slide,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Self::Calibrate,
        Self::LearnSkill,
        Self::RunSkill,
        Self::SweepObjectSize,
        Self::SweepDisabled,
        Self::SweepGravity,
        Self::Sequence,
        Self::Slide,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Self::Calibrate => "calibrate",
            Self::LearnSkill => "learn-skill",
            Self::RunSkill => "run-skill",
            Self::SweepObjectSize => "sweep-object-size",
            Self::SweepDisabled => "sweep-disabled",
            Self::SweepGravity => "sweep-gravity",
            Self::Sequence => "sequence",
            Self::Slide => "slide",
        }
    }
}

pub fn run(scenario: Scenario, ctx: &Context) -> Result<Vec<SummaryRow>> {
    std::fs::create_dir_all(ctx.out.join("traces"))?;
    match scenario {
        Scenario::Calibrate => calibrate(ctx),
        Scenario::LearnSkill => learn_skill(ctx),
        Scenario::RunSkill => run_skill(ctx),
        Scenario::SweepObjectSize => sweep_object_size(ctx),
        Scenario::SweepDisabled => sweep_disabled(ctx),
        Scenario::SweepGravity => sweep_gravity(ctx),
        Scenario::Sequence => crate::sequence::run(ctx),
        Scenario::Slide => crate::slide::run(ctx),
    }
}

/// Turns run-level failures into a failure row; other errors propagate.
pub(crate) fn row_or_failure(scenario: &str, key: &str, r: Result<SummaryRow>) -> Result<SummaryRow> {
    match r {
        Ok(row) => Ok(row),
        Err(e) => match run_failure(&e) {
            Some(f) => Ok(SummaryRow::failed(scenario, key, f).with_note("error", e.to_string().replace(';', ","))),
            None => Err(e),
        },
    }
}

/// Writes `traces/<key>.csv` and the target it was run against to
/// `traces/<key>.target.csv`.
pub(crate) fn write_run_trace(
    ctx: &Context,
    key: &str,
    outcome: &FunnelOutcome,
    target: &ControlTarget,
    sensor_labels: &[String],
) -> Result<()> {
    let stem = file_stem(key);
    let dir = ctx.out.join("traces");
    outcome.write_trace_csv(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?))?;
    let rows: Vec<Vec<String>> = target
        .rows
        .iter()
        .zip(&target.values)
        .enumerate()
        .map(|(i, (&r, &v))| {
            vec![format!("tracked_{i}"), sensor_labels[r].clone(), fmt_f64(v), fmt_f64(target.success_threshold)]
        })
        .collect();
    write_table(&dir.join(format!("{stem}.target.csv")), &["column", "channel", "target", "threshold"], &rows)
}

fn write_scene(ctx: &Context, scene: &PlantConfig) -> Result<()> {
    std::fs::write(ctx.out.join("scene.toml"), scene.to_toml()?)?;
    Ok(())
}

fn calibrate(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scene = ctx.scene(scene::default_scene)?;
    write_scene(ctx, &scene)?;
    let cal = workflow::calibrate(&scene, &ctx.config)?;
    cal.model.save(&ctx.out.join("model.toml"))?;
    write_samples_csv(BufWriter::new(File::create(ctx.out.join("samples.csv"))?), &cal.samples)?;
    let layout = SimPlant::new(free_motion_config(&scene))?.layout().clone();
    let mut table = Vec::new();
    for (g, group) in layout.groups.iter().zip(&cal.model.groups) {
        let mut points: Vec<Vec<u64>> = cal
            .samples
            .actuation
            .iter()
            .map(|a| g.actuations.iter().map(|&c| a[c].to_bits()).collect())
            .collect();
        points.sort_unstable();
        points.dedup();
        table.push(vec![
            g.name.clone(),
            g.actuations.len().to_string(),
            g.sensors.len().to_string(),
            points.len().to_string(),
            fmt_f64(group.model.fit_residual_rmse),
        ]);
    }
    write_table(
        &ctx.out.join("calibration.csv"),
        &["group", "actuation_channels", "sensor_channels", "grid_points", "fit_rmse"],
        &table,
    )?;
    let ok = cal.held_out_error <= HELD_OUT_TOLERANCE;
    Ok(vec![SummaryRow::check("calibrate", "model", ok, cal.held_out_error, "held_out_error")
        .with_note("samples", cal.samples.actuation.len())
        .with_note("held_out", ctx.config.calibration.held_out)
        .with_note("tolerance", HELD_OUT_TOLERANCE)])
}

/// Scene, model and the skill every sweep point runs, with its store
/// warmed by one run from the nominal start.
struct Prepared {
    scene: PlantConfig,
    model: DeformationModel,
    spec: SkillSpec,
    store: JacobianStore,
    /// Push direction of the demonstration.
    demo_force: [f64; 2],
    rows: Vec<SummaryRow>,
}

/// Learns the configured skill on the nominal scene and runs it once
/// cold, or loads `run.skill` with its store.
fn prepare(ctx: &Context, scenario: &str) -> Result<Prepared> {
    let scene = ctx.scene(scene::default_scene)?;
    write_scene(ctx, &scene)?;
    let model = ctx.model(&scene)?;
    if ctx.config.model.is_none() {
        model.save(&ctx.out.join("model.toml"))?;
    }
    let force = demo_force(&workflow::demo_wrenches(&ctx.config.skill.demo)?);
    if let Some(path) = &ctx.config.run.skill {
        let spec = SkillSpec::load(path)?;
        let store = JacobianStore::load(&store_dir(&spec, path))?;
        return Ok(Prepared { scene, model, spec, store, demo_force: force, rows: Vec::new() });
    }
    let mut plant = ctx.plant(&scene, &model)?;
    let learned = workflow::learn_skill(&plant, &model, &ctx.config.skill)?;
    let name = learned.spec.name.clone();
    learned.demo.save(&ctx.out.join(format!("{name}_demo.csv")))?;
    write_wrench_trajectory(BufWriter::new(File::create(ctx.out.join(format!("{name}_wrench.csv")))?), &learned.wrenches)?;
    let mut store = JacobianStore::new();
    let key = format!("{name}_learn");
    let labels = plant.sensor_labels();
    let cold = (|| {
        let target = learned.spec.control_target(&plant, &model)?;
        let o = run_funnel(&mut plant, &model, &target, &mut store, &ctx.config.policy, &ctx.config.probe)?;
        write_run_trace(ctx, &key, &o, &target, &labels)?;
        Ok(SummaryRow::from_outcome(scenario, &key, &o))
    })();
    let row = row_or_failure(scenario, &key, cold)?
        .with_note("threshold", fmt_f64(learned.spec.threshold.resolve(0.0)))
        .with_note("stored", store.len());
    workflow::save_skill(&ctx.out, &learned.spec, &store)?;
    Ok(Prepared { scene, model, spec: learned.spec, store, demo_force: force, rows: vec![row] })
}

fn learn_skill(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scenario = Scenario::LearnSkill.id();
    if ctx.config.run.skill.is_some() {
        return Err(HarnessError::Config("learn-skill learns from a demonstration; remove run.skill".into()));
    }
    Ok(prepare(ctx, scenario)?.rows)
}

fn run_skill(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scenario = Scenario::RunSkill.id();
    let path = ctx
        .config
        .run
        .skill
        .as_ref()
        .ok_or_else(|| HarnessError::Config("run-skill needs run.skill".into()))?;
    let p = prepare(ctx, scenario)?;
    let mut store = p.store.clone();
    let key = p.spec.name.clone();
    let r = run_point(ctx, scenario, &key, &p.scene, &p, &mut store, &[]);
    let row = row_or_failure(scenario, &key, r)?.with_note("stored_before", p.store.len()).with_note("stored_after", store.len());
    let out_skill = ctx.out.join(path.file_name().unwrap_or_default());
    let out_skill = if out_skill == *path { ctx.out.join(format!("{}_run.toml", p.spec.name)) } else { out_skill };
    p.spec.save(&out_skill)?;
    store.save(&store_dir(&p.spec, &out_skill))?;
    Ok(vec![row])
}

/// One sweep point on a fresh plant of `scene`.
fn run_point(
    ctx: &Context,
    scenario: &str,
    key: &str,
    scene: &PlantConfig,
    p: &Prepared,
    store: &mut JacobianStore,
    disabled: &[usize],
) -> Result<SummaryRow> {
    let (outcome, plant) = workflow::run_on_fresh_plant(ctx, scene, &p.model, &p.spec, store, disabled)?;
    let target = p.spec.control_target(&plant, &p.model)?;
    write_run_trace(ctx, &format!("{scenario}_{key}"), &outcome, &target, &plant.sensor_labels())?;
    let mut row = SummaryRow::from_outcome(scenario, key, &outcome);
    if let Some([x, y, th]) = plant.object_pose() {
        row = row.with_note("object", format!("{x:.4} {y:.4} {th:.4}"));
    }
    Ok(row)
}

/// Runs every point in parallel, each on its own plant with its own copy
/// of the warm store. Output order is the order of `points`.
fn sweep<T: Sync>(
    ctx: &Context,
    scenario: &str,
    p: &Prepared,
    points: &[T],
    setup: impl Fn(&T) -> Result<(String, PlantConfig, Vec<usize>, SummaryRow)> + Sync,
) -> Result<Vec<SummaryRow>> {
    let rows: Vec<SummaryRow> = points
        .par_iter()
        .map(|pt| {
            let (key, scene, disabled, template) = setup(pt)?;
            let mut store = p.store.clone();
            let row = row_or_failure(scenario, &key, run_point(ctx, scenario, &key, &scene, p, &mut store, &disabled))?;
            let note = [template.note.as_str(), row.note.as_str()].iter().filter(|s| !s.is_empty()).cloned().collect::<Vec<_>>().join(";");
            Ok(SummaryRow { note, ..row })
        })
        .collect::<Result<_>>()?;
    Ok(p.rows.iter().cloned().chain(rows).collect())
}

fn sorted_unique(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sweep_object_size(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scenario = Scenario::SweepObjectSize.id();
    let p = prepare(ctx, scenario)?;
    if p.scene.object.is_none() {
        return Err(HarnessError::Config("sweep-object-size needs a scene with an object".into()));
    }
    let sizes = sorted_unique(&ctx.config.sweep.object_sizes);
    sweep(ctx, scenario, &p, &sizes, |&size| {
        let mut scene = p.scene.clone();
        let object = scene.object.as_mut().expect("checked above");
        object.shape = object.shape.with_size(size);
        object.pose[1] = object.shape.half_extents()[1];
        let [w, h] = object.shape.half_extents().map(|e| 2.0 * e);
        let template = SummaryRow::failed(scenario, "", "").with_note("width", w).with_note("height", h);
        Ok((format!("{size:.3}"), scene, Vec::new(), template))
    })
}

/// No set, each controlled channel alone, every set of half of them, and
/// all of them.
fn default_disabled_sets(controlled: &[String]) -> Vec<Vec<String>> {
    let n = controlled.len();
    let mut sets = vec![Vec::new()];
    sets.extend(controlled.iter().map(|c| vec![c.clone()]));
    let half = n / 2;
    if half > 1 {
        for mask in 0u64..(1 << n) {
            if mask.count_ones() as usize == half {
                sets.push((0..n).filter(|i| mask >> i & 1 == 1).map(|i| controlled[i].clone()).collect());
            }
        }
    }
    if n > 1 {
        sets.push(controlled.to_vec());
    }
    sets
}

fn sweep_disabled(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scenario = Scenario::SweepDisabled.id();
    let p = prepare(ctx, scenario)?;
    let labels = scene::actuation_labels(&p.scene);
    let controlled: Vec<String> = p.spec.controlled_cols.iter().map(|&c| labels[c].clone()).collect();
    let mut sets: Vec<(String, Vec<usize>)> = ctx
        .config
        .sweep
        .disabled_sets
        .clone()
        .unwrap_or_else(|| default_disabled_sets(&controlled))
        .into_iter()
        .map(|set| {
            let key = if set.is_empty() { "none".to_string() } else { set.join("+") };
            Ok((key, select(&labels, &set)?))
        })
        .collect::<Result<_>>()?;
    sets.sort_by(|a, b| (a.1.len(), &a.0).cmp(&(b.1.len(), &b.0)));
    sets.dedup_by(|a, b| a.0 == b.0);
    let rows = sweep(ctx, scenario, &p, &sets, |(key, idx)| {
        let template = SummaryRow::failed(scenario, "", "").with_note("disabled", idx.len());
        Ok((key.clone(), p.scene.clone(), idx.clone(), template))
    })?;
    write_importance(ctx, &rows, &sets)?;
    Ok(rows)
}

/// Single-channel importance: increase of the final error over the run
/// with nothing disabled. Failed runs rank first.
fn write_importance(ctx: &Context, rows: &[SummaryRow], sets: &[(String, Vec<usize>)]) -> Result<()> {
    let by_key = |k: &str| rows.iter().find(|r| r.key == k);
    let Some(base) = by_key("none") else { return Ok(()) };
    let mut singles: Vec<(&SummaryRow, f64)> = sets
        .iter()
        .filter(|(_, idx)| idx.len() == 1)
        .filter_map(|(k, _)| by_key(k))
        .map(|r| {
            let inc = if r.success { r.final_error - base.final_error } else { f64::INFINITY };
            (r, inc)
        })
        .collect();
    singles.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.key.cmp(&b.0.key)));
    let table: Vec<Vec<String>> = singles
        .iter()
        .enumerate()
        .map(|(rank, (r, inc))| {
            vec![
                (rank + 1).to_string(),
                r.key.clone(),
                u8::from(r.success).to_string(),
                fmt_f64(r.final_error),
                fmt_f64(base.final_error),
                if inc.is_finite() { fmt_f64(*inc) } else { "inf".into() },
                r.ticks.to_string(),
                r.probes.to_string(),
            ]
        })
        .collect();
    write_table(
        &ctx.out.join("importance.csv"),
        &["rank", "disabled", "success", "final_error", "baseline_final_error", "error_increase", "ticks", "probes"],
        &table,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GravityCluster {
    /// Gravity has a component along the demonstrated push.
    Aiding,
    Opposing,
    Neutral,
}

impl GravityCluster {
    pub fn of(gravity: &GravitySpec, push: [f64; 2]) -> Self {
        let g = gravity.vector();
        let dot = g[0] * push[0] + g[1] * push[1];
        let scale = g[0].hypot(g[1]) * push[0].hypot(push[1]);
        if dot.abs() <= 1e-9 * scale || scale == 0.0 {
            Self::Neutral
        } else if dot > 0.0 {
            Self::Aiding
        } else {
            Self::Opposing
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Aiding => "aiding",
            Self::Opposing => "opposing",
            Self::Neutral => "neutral",
        }
    }
}

fn sweep_gravity(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scenario = Scenario::SweepGravity.id();
    let p = prepare(ctx, scenario)?;
    let angles = sorted_unique(&ctx.config.sweep.gravity_angles_deg);
    let gravity_at = |deg: f64| GravitySpec { angle: deg.to_radians(), ..p.scene.gravity };
    let rows = sweep(ctx, scenario, &p, &angles, |&deg| {
        let mut scene = p.scene.clone();
        scene.gravity = gravity_at(deg);
        let cluster = GravityCluster::of(&scene.gravity, p.demo_force);
        let template = SummaryRow::failed(scenario, "", "").with_note("cluster", cluster.as_str());
        Ok((format!("{deg:.1}"), scene, Vec::new(), template))
    })?;
    let mut table = Vec::new();
    for cluster in [GravityCluster::Aiding, GravityCluster::Opposing, GravityCluster::Neutral] {
        let members: Vec<(f64, &SummaryRow)> = angles
            .iter()
            .zip(&rows[p.rows.len()..])
            .filter(|(&deg, _)| GravityCluster::of(&gravity_at(deg), p.demo_force) == cluster)
            .map(|(&deg, r)| (deg, r))
            .collect();
        let mean = |f: fn(&SummaryRow) -> usize| {
            if members.is_empty() {
                f64::NAN
            } else {
                members.iter().map(|(_, r)| f(r) as f64).sum::<f64>() / members.len() as f64
            }
        };
        table.push(vec![
            cluster.as_str().to_string(),
            members.iter().map(|(d, _)| format!("{d:.1}")).collect::<Vec<_>>().join(" "),
            members.len().to_string(),
            members.iter().filter(|(_, r)| r.success).count().to_string(),
            fmt_f64(mean(|r| r.probes)),
            fmt_f64(mean(|r| r.ticks)),
        ]);
    }
    write_table(
        &ctx.out.join("clusters.csv"),
        &["cluster", "angles_deg", "runs", "successes", "mean_probes", "mean_ticks"],
        &table,
    )?;
    Ok(rows)
}
