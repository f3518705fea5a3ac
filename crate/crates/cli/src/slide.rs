//! Sliding over a height step: the carrier height is the only controlled
//! channel and holds a pressed deformation while the carrier advances.

use deform_core::jacobian::{control_tick, norm, probe_jacobian};
use deform_core::{build_skill, record_demonstration, Plant, ProbeConfig, Threshold, TimedWrench, Wrench};
use deform_sim::scene;

use crate::error::{HarnessError, Result};
use crate::report::{fmt_f64, run_failure, write_table, SummaryRow};
use crate::workflow::Context;

const SCENARIO: &str = "slide";

#[derive(Debug, Clone, PartialEq)]
pub struct SlideTick {
    pub tick: usize,
    pub carrier: [f64; 2],
    pub error_norm: f64,
    pub alpha: f64,
    pub force: [f64; 2],
}

impl SlideTick {
    pub fn force_norm(&self) -> f64 {
        self.force[0].hypot(self.force[1])
    }
}

/// Band excursions of an error trace: `(first tick outside, ticks until
/// back inside)`; `None` when the trace ends outside.
pub fn excursions(errors: &[f64], band: f64) -> Vec<(usize, Option<usize>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &e) in errors.iter().enumerate() {
        match (start, e > band) {
            (None, true) => start = Some(t),
            (Some(s), false) => {
                out.push((s, Some(t - s)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, None));
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn run(ctx: &Context) -> Result<Vec<SummaryRow>> {
    let scene = ctx.scene(scene::slide_scene)?;
    std::fs::write(ctx.out.join("scene.toml"), scene.to_toml()?)?;
    let model = ctx.model(&scene)?;
    if ctx.config.model.is_none() {
        model.save(&ctx.out.join("model.toml"))?;
    }
    let s = &ctx.config.slide;
    let trace = match simulate(ctx, &scene, &model) {
        Ok(t) => t,
        Err(e) => {
            let Some(f) = run_failure(&e) else { return Err(e) };
            let msg = e.to_string().replace(';', ",");
            return Ok(["deformation_band", "force_margin"]
                .map(|k| SummaryRow::failed(SCENARIO, k, f).with_note("error", &msg))
                .to_vec());
        }
    };
    let table: Vec<Vec<String>> = trace
        .iter()
        .map(|t| {
            vec![
                t.tick.to_string(),
                fmt_f64(t.carrier[0]),
                fmt_f64(t.carrier[1]),
                fmt_f64(t.error_norm),
                fmt_f64(t.alpha),
                fmt_f64(t.force[0]),
                fmt_f64(t.force[1]),
                fmt_f64(t.force_norm()),
                u8::from(t.error_norm <= s.band).to_string(),
            ]
        })
        .collect();
    write_table(
        &ctx.out.join("slide.csv"),
        &["tick", "carrier_x", "carrier_y", "error_norm", "alpha", "force_x", "force_y", "force_norm", "in_band"],
        &table,
    )?;

    let controlled: Vec<&SlideTick> = trace.iter().filter(|t| t.tick > 0).collect();
    let errors: Vec<f64> = controlled.iter().map(|t| t.error_norm).collect();
    let exc = excursions(&errors, s.band);
    let longest = exc.iter().map(|(_, d)| d.unwrap_or(usize::MAX)).max().unwrap_or(0);
    let recovered = longest <= s.recovery_ticks;
    let first = exc.first().map(|(t, _)| controlled[*t].tick);
    let press_y = trace[0].carrier[1];
    let steady = controlled.iter().take_while(|t| first.is_none_or(|f| t.tick < f));
    let steady_correction = steady.map(|t| (t.carrier[1] - press_y).abs()).fold(0.0, f64::max);
    let mut band = SummaryRow::check(
        SCENARIO,
        "deformation_band",
        recovered,
        errors.iter().copied().fold(0.0, f64::max),
        "band_not_recovered",
    )
    .with_note("band", s.band)
    .with_note("excursions", exc.len())
    .with_note("longest_excursion", if longest == usize::MAX { "unrecovered".to_string() } else { longest.to_string() })
    .with_note("first_disturbance", first.map_or("none".to_string(), |t| t.to_string()))
    .with_note("steady_height_correction", fmt_f64(steady_correction));
    band.ticks = controlled.len();
    band.probes = 1;
    band.distinct_jacobians = 1;
    band.initial_error = trace[0].error_norm;

    let forces: Vec<f64> = trace.iter().map(SlideTick::force_norm).collect();
    let med = median(&forces);
    let deviation = forces.iter().map(|f| (f - med).abs()).fold(0.0, f64::max);
    let mut force = SummaryRow::check(SCENARIO, "force_margin", deviation <= s.force_margin, deviation, "force_margin_exceeded")
        .with_note("median", fmt_f64(med))
        .with_note("margin", s.force_margin);
    force.ticks = controlled.len();
    Ok(vec![band, force])
}

/// Press, probe once, then advance. Tick 0 is the pressed state.
fn simulate(ctx: &Context, scene: &deform_sim::PlantConfig, model: &deform_core::DeformationModel) -> Result<Vec<SlideTick>> {
    let s = &ctx.config.slide;
    let mut plant = ctx.plant(scene, model)?;
    let labels = plant.actuation().labels().to_vec();
    let channel = |l: &str| {
        labels.iter().position(|x| x == l).ok_or_else(|| HarnessError::Config(format!("slide scene needs {l}")))
    };
    let (cx, cy) = (channel("carrier_x")?, channel("carrier_y")?);
    let mut a = plant.actuation().values().to_vec();
    a[cy] -= s.press_depth;
    plant.actuate(&a)?;
    let demo = record_demonstration(&mut plant, model, &[TimedWrench { t: 0.0, wrench: Wrench::default() }])?;
    demo.save(&ctx.out.join("press_demo.csv"))?;
    let rows: Vec<usize> = (0..model.sensor_count()).collect();
    let spec = build_skill("press", &demo, &rows, &[cy], Threshold::Absolute(s.band), plant.actuation())?;
    spec.save(&ctx.out.join("press.toml"))?;
    let target = spec.control_target(&plant, model)?;
    // Friction hysteresis makes the pressed state irreproducible after
    // the probe's return step, so destabilization is not checked here.
    let probe = ProbeConfig { destabilization_factor: f64::INFINITY, ..ctx.config.probe.clone() };
    let jacobian = probe_jacobian(&mut plant, model, &probe, &target)?;
    jacobian.save(&ctx.out.join("press_jacobian.csv"))?;

    let ds = model.compute_deformation(&plant.sensors(), plant.actuation().values())?;
    let e0 = norm(&deform_core::jacobian::control_error(&ds, &target)?);
    let values = plant.actuation().values();
    let mut trace = vec![SlideTick {
        tick: 0,
        carrier: [values[cx], values[cy]],
        error_norm: e0,
        alpha: 0.0,
        force: plant.table_contact_force(),
    }];
    let mut prev = 0.5 * e0 * e0;
    let policy = &ctx.config.policy;
    for tick in 1..=s.ticks {
        let mut a = plant.actuation().values().to_vec();
        a[cx] += s.lateral_step;
        plant.actuate(&a)?;
        let step = control_tick(&mut plant, model, &target, &jacobian, policy.alpha, prev, policy.progress_epsilon)?;
        prev = step.cost;
        let values = plant.actuation().values();
        trace.push(SlideTick {
            tick,
            carrier: [values[cx], values[cy]],
            error_norm: norm(&step.error),
            alpha: step.alpha,
            force: plant.table_contact_force(),
        });
    }
    Ok(trace)
}
