//! Skill sequencing: learn each stage from the state the previous stage
//! left, then run the whole sequence again on a fresh plant with the
//! learned skills and their stores.

use std::path::PathBuf;

use deform_core::{
    run_funnel, run_open_loop, run_sequence, JacobianStore, Plant, SequenceFile, SkillMode, SkillSpec, Threshold,
};
use deform_sim::scene;

use crate::error::{HarnessError, Result};
use crate::report::{fmt_f64, write_table, SummaryRow};
use crate::scenarios::{row_or_failure, write_run_trace};
use crate::settings::{DemoProfile, DemoSettings, SkillSettings, StageSettings};
use crate::workflow::{self, select, store_dir, Context};

const SCENARIO: &str = "sequence";

/// Clamp, spin by a quarter turn, shift, then an open-loop gait step.
pub fn default_stages() -> Vec<StageSettings> {
    let skill = |name: &str, target: &[&str], controlled: &[&str], demo: DemoSettings| SkillSettings {
        name: name.into(),
        target: target.iter().map(|s| s.to_string()).collect(),
        controlled: controlled.iter().map(|s| s.to_string()).collect(),
        demo,
        threshold: Threshold::default(),
    };
    let ramp = |wrench: [f64; 3]| DemoSettings { wrench, ..DemoSettings::default() };
    vec![
        StageSettings {
            skill: skill("clamp", &["thumb", "middle"], &["thumb", "middle"], ramp([0.6, 0.0, 0.0])),
            ..StageSettings::default()
        },
        StageSettings {
            skill: skill(
                "spin",
                &["thumb"],
                &["thumb", "little"],
                DemoSettings { wrench: [0.0, 0.0, 0.9], samples: 20, profile: DemoProfile::Pulse, file: None },
            ),
            expect_rotation_deg: Some(90.0),
            ..StageSettings::default()
        },
        StageSettings {
            skill: skill("shift", &["thumb"], &["thumb", "little"], ramp([-0.8, 0.0, 0.0])),
            ..StageSettings::default()
        },
        StageSettings {
            skill: skill("gait", &[], &["middle"], DemoSettings::default()),
            open_loop: Some(vec![-0.3, -0.3]),
            ..StageSettings::default()
        },
    ]
}

struct Stage {
    spec: SkillSpec,
    store: JacobianStore,
    expect_rotation_deg: Option<f64>,
    tolerance_deg: f64,
}

pub fn run(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scene = ctx.scene(scene::sequence_scene)?;
    std::fs::write(ctx.out.join("scene.toml"), scene.to_toml()?)?;
    let model = ctx.model(&scene)?;
    if ctx.config.model.is_none() {
        model.save(&ctx.out.join("model.toml"))?;
    }
    let mut rows = Vec::new();
    let mut stages = match &ctx.config.sequence.file {
        Some(file) => load_stages(file)?,
        None => learn_stages(ctx, &scene, &model, &mut rows)?,
    };

    let mut plant = ctx.plant(&scene, &model)?;
    let labels = plant.sensor_labels();
    let mut table = Vec::new();
    let mut aborted = false;
    for (i, st) in stages.iter_mut().enumerate() {
        let key = format!("{i}_{}", st.spec.name);
        if aborted {
            rows.push(SummaryRow::failed(SCENARIO, &key, "not_run"));
            continue;
        }
        let before = plant.object_pose().unwrap_or_default();
        let result = (|| {
            let target = match st.spec.mode {
                SkillMode::Feedback => Some(st.spec.control_target(&plant, &model)?),
                SkillMode::OpenLoop => None,
            };
            let out = run_sequence(
                &mut plant,
                &model,
                std::slice::from_ref(&st.spec),
                std::slice::from_mut(&mut st.store),
                &ctx.config.policy,
                &ctx.config.probe,
            )?;
            let stage = &out.stages[0];
            Ok(match (&stage.funnel, target) {
                (Some(o), Some(t)) => {
                    write_run_trace(ctx, &format!("sequence_{key}"), o, &t, &labels)?;
                    SummaryRow::from_outcome(SCENARIO, &key, o)
                }
                _ => SummaryRow { success: stage.success, ..SummaryRow::failed(SCENARIO, &key, "") },
            })
        })();
        let mut row = row_or_failure(SCENARIO, &key, result)?;
        let after = plant.object_pose().unwrap_or_default();
        let rotation = (after[2] - before[2]).to_degrees();
        row = row.with_note("mode", mode_str(st.spec.mode)).with_note("rotation_deg", format!("{rotation:.2}"));
        aborted = !row.success;
        table.push(vec![
            i.to_string(),
            st.spec.name.clone(),
            mode_str(st.spec.mode).into(),
            u8::from(row.success).to_string(),
            fmt_f64(before[0]),
            fmt_f64(before[1]),
            fmt_f64(before[2]),
            fmt_f64(after[0]),
            fmt_f64(after[1]),
            fmt_f64(after[2]),
            format!("{rotation:.2}"),
        ]);
        let check = st.expect_rotation_deg.map(|want| {
            let ok = row.success && (rotation - want).abs() <= st.tolerance_deg;
            SummaryRow::check(SCENARIO, &format!("{key}_rotation"), ok, rotation, "rotation_off")
                .with_note("expected_deg", want)
                .with_note("tolerance_deg", st.tolerance_deg)
        });
        rows.push(row);
        rows.extend(check);
    }
    write_table(
        &ctx.out.join("sequence.csv"),
        &["stage", "skill", "mode", "success", "x_before", "y_before", "theta_before", "x_after", "y_after", "theta_after", "rotation_deg"],
        &table,
    )?;
    Ok(rows)
}

fn mode_str(mode: SkillMode) -> &'static str {
    match mode {
        SkillMode::Feedback => "feedback",
        SkillMode::OpenLoop => "open_loop",
    }
}

fn load_stages(file: &std::path::Path) -> Result<Vec<Stage>> {
    let seq = SequenceFile::load(file)?;
    let base = file.parent().unwrap_or(std::path::Path::new("."));
    seq.skills
        .iter()
        .map(|p| {
            let path = base.join(p);
            let spec = SkillSpec::load(&path)?;
            let store = JacobianStore::load(&store_dir(&spec, &path))?;
            Ok(Stage { spec, store, expect_rotation_deg: None, tolerance_deg: 0.0 })
        })
        .collect()
}

/// Learning pass: every feedback stage is demonstrated in the state the
/// previous stages left and then run cold, which fills its store.
fn learn_stages(
    ctx: &Context,
    scene: &deform_sim::PlantConfig,
    model: &deform_core::DeformationModel,
    rows: &mut Vec<SummaryRow>,
) -> Result<Vec<Stage>> {
    let settings = &ctx.config.sequence.stages;
    if settings.is_empty() {
        return Err(HarnessError::Config("sequence.stages must not be empty".into()));
    }
    let mut plant = ctx.plant(scene, model)?;
    let labels = plant.sensor_labels();
    let mut stages = Vec::new();
    let mut files = Vec::new();
    for (i, s) in settings.iter().enumerate() {
        let key = format!("learn_{i}_{}", s.skill.name);
        let mut store = JacobianStore::new();
        let spec = match &s.open_loop {
            Some(delta) => {
                let cols = select(plant.actuation().labels(), &s.skill.controlled)?;
                if cols.len() != delta.len() {
                    return Err(HarnessError::Config(format!(
                        "stage {}: {} controlled channels, {} deltas",
                        s.skill.name,
                        cols.len(),
                        delta.len()
                    )));
                }
                let spec = SkillSpec::open_loop(&s.skill.name, cols, delta.clone())?;
                let r = run_open_loop(&mut plant, &spec).map_err(HarnessError::from);
                rows.push(row_or_failure(SCENARIO, &key, r.map(|()| SummaryRow { success: true, ..SummaryRow::failed(SCENARIO, &key, "") }))?);
                spec
            }
            None => {
                let learned = workflow::learn_skill(&plant, model, &s.skill)?;
                learned.demo.save(&ctx.out.join(format!("{}_demo.csv", s.skill.name)))?;
                let before = plant.object_pose().unwrap_or_default();
                let r = (|| {
                    let target = learned.spec.control_target(&plant, model)?;
                    let o = run_funnel(&mut plant, model, &target, &mut store, &ctx.config.policy, &ctx.config.probe)?;
                    write_run_trace(ctx, &format!("sequence_{key}"), &o, &target, &labels)?;
                    Ok(SummaryRow::from_outcome(SCENARIO, &key, &o))
                })();
                let demo_rotation = learned.demo.last().map_or(0.0, |t| t.object_pose[2] - before[2]).to_degrees();
                let rotation = (plant.object_pose().unwrap_or_default()[2] - before[2]).to_degrees();
                rows.push(
                    row_or_failure(SCENARIO, &key, r)?
                        .with_note("demo_rotation_deg", format!("{demo_rotation:.2}"))
                        .with_note("rotation_deg", format!("{rotation:.2}")),
                );
                learned.spec
            }
        };
        files.push(PathBuf::from(format!("{}.toml", spec.name)));
        workflow::save_skill(&ctx.out, &spec, &store)?;
        stages.push(Stage {
            spec,
            store,
            expect_rotation_deg: s.expect_rotation_deg,
            tolerance_deg: s.rotation_tolerance_deg,
        });
    }
    let text = toml::to_string(&SequenceFile { skills: files }).map_err(|e| HarnessError::Config(e.to_string()))?;
    std::fs::write(ctx.out.join("sequence.toml"), text)?;
    Ok(stages)
}
