//! Free-motion calibration: grid sweeps with the object removed, sensor
//! normalization and per-group model fits.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deform_core::{
    DeformationModel, FitConfig, FreeMotionModel, ModelGroup, NormalizationTable, Plant, SensorVector,
};

use crate::config::PlantConfig;
use crate::error::SimError;
use crate::plant::SimPlant;

/// Free-motion samples: actuation vectors and raw sensor readings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationSamples {
    pub actuation: Vec<Vec<f64>>,
    pub raw: Vec<Vec<f64>>,
}

/// The scene with nothing for the hand to touch.
pub fn free_motion_config(config: &PlantConfig) -> PlantConfig {
    let mut c = config.clone();
    c.object = None;
    c.table = None;
    c
}

fn core_error(e: deform_core::Error) -> SimError {
    match e {
        deform_core::Error::Plant(p) => SimError::Plant(p),
        other => SimError::Config(other.to_string()),
    }
}

/// Grid coordinates of every group: `points^m` for an m-channel group,
/// `points^2` evenly spaced values for a single channel.
fn group_grid(m: usize, points: usize) -> Vec<Vec<f64>> {
    let axis = |n: usize| -> Vec<f64> { (0..n).map(|i| i as f64 / (n - 1).max(1) as f64).collect() };
    if m == 1 {
        return axis(points * points).into_iter().map(|v| vec![v]).collect();
    }
    let a = axis(points);
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out.into_iter().flat_map(|p| a.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Sweeps every group over its grid at once. Groups are mechanically
/// independent in free motion, so sample `k` sets group `g` to its grid
/// point `k mod |grid_g|`; other channels keep their initial values.
pub fn grid_samples(config: &PlantConfig, points: usize) -> Result<CalibrationSamples, SimError> {
    let mut plant = SimPlant::new(free_motion_config(config))?;
    let groups = plant.layout().groups.clone();
    let grids: Vec<Vec<Vec<f64>>> = groups.iter().map(|g| group_grid(g.actuations.len(), points)).collect();
    let count = grids.iter().map(Vec::len).max().unwrap_or(0);
    let base = plant.actuation().values().to_vec();
    let mut samples = CalibrationSamples::default();
    for k in 0..count {
        let mut a = base.clone();
        for (g, grid) in groups.iter().zip(&grids) {
            for (&ch, &v) in g.actuations.iter().zip(&grid[k % grid.len()]) {
                a[ch] = v;
            }
        }
        plant.actuate(&a)?;
        samples.actuation.push(plant.actuation().values().to_vec());
        samples.raw.push(plant.read_raw_sensors());
    }
    Ok(samples)
}

/// Calibrates normalization on the samples and fits one free-motion model
/// per group.
pub fn fit_deformation_model(
    config: &PlantConfig,
    samples: &CalibrationSamples,
    fit: &FitConfig,
) -> Result<DeformationModel, SimError> {
    let table = NormalizationTable::calibrate(&samples.raw).map_err(core_error)?;
    let normalized: Vec<Vec<f64>> = samples.raw.iter().map(|r| table.normalize(r)).collect();
    let plant = SimPlant::new(free_motion_config(config))?;
    let mut groups = Vec::new();
    for (gi, g) in plant.layout().groups.iter().enumerate() {
        let inputs: Vec<Vec<f64>> =
            samples.actuation.iter().map(|a| g.actuations.iter().map(|&c| a[c]).collect()).collect();
        let targets: Vec<Vec<f64>> =
            normalized.iter().map(|s| g.sensors.iter().map(|&c| s[c]).collect()).collect();
        let cfg = FitConfig { seed: fit.seed.wrapping_add(gi as u64), ..fit.clone() };
        let model = FreeMotionModel::fit(&inputs, &targets, &cfg).map_err(core_error)?;
        groups.push(ModelGroup {
            name: g.name.clone(),
            actuation_channels: g.actuations.clone(),
            sensor_channels: g.sensors.clone(),
            model,
        });
    }
    DeformationModel::new(plant.actuation().len(), table, groups).map_err(core_error)
}

/// Largest free-motion deformation magnitude at `count` random actuations.
pub fn held_out_error(
    config: &PlantConfig,
    model: &DeformationModel,
    count: usize,
    seed: u64,
) -> Result<f64, SimError> {
    let mut plant = SimPlant::new(free_motion_config(config))?;
    plant.set_normalization(Some(model.normalization.clone()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let a: Vec<f64> = plant.actuation().bounds().iter().map(|b| rng.gen_range(b.min..=b.max)).collect();
        plant.actuate(&a)?;
        let ds = model
            .compute_deformation(&SensorVector::new(plant.read_sensors()), plant.actuation().values())
            .map_err(core_error)?;
        worst = worst.max(ds.norm_inf());
    }
    Ok(worst)
}

pub fn write_samples_csv<W: Write>(w: W, samples: &CalibrationSamples) -> Result<(), SimError> {
    let io = |e: csv::Error| SimError::Config(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let m = samples.actuation.first().map_or(0, Vec::len);
    let n = samples.raw.first().map_or(0, Vec::len);
    let header: Vec<String> = (0..m).map(|i| format!("a_{i}")).chain((0..n).map(|i| format!("s_{i}"))).collect();
    out.write_record(&header).map_err(io)?;
    for (a, s) in samples.actuation.iter().zip(&samples.raw) {
        out.write_record(a.iter().chain(s).map(|v| v.to_string())).map_err(io)?;
    }
    out.flush().map_err(|e| SimError::Config(e.to_string()))
}

pub fn read_samples_csv<R: Read>(r: R) -> Result<CalibrationSamples, SimError> {
    let bad = |m: String| SimError::Config(m);
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let m = header.iter().filter(|h| h.starts_with("a_")).count();
    let mut samples = CalibrationSamples::default();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        samples.actuation.push(vals[..m].to_vec());
        samples.raw.push(vals[m..].to_vec());
    }
    Ok(samples)
}
