//! `summary.csv` and the other report tables.
//!
//! Summary columns:
//!
//! | column | meaning |
//! |---|---|
//! | `scenario` | scenario id |
//! | `key` | sweep point, stage or run name; unique within a scenario |
//! | `success` | `1` when the run reached its success criterion |
//! | `ticks` | control ticks executed |
//! | `probes` | Jacobians probed during the run |
//! | `distinct_jacobians` | distinct Jacobians applied or selected |
//! | `initial_error` | control error norm at run start |
//! | `final_error` | control error norm at run end |
//! | `failure` | failure reason, empty on success |
//! | `note` | `name=value` pairs separated by `;` |
//!
//! Floats are written in `{:.6e}` so reruns compare byte for byte.

use std::path::Path;

use deform_core::{Error, FunnelOutcome, PlantError};

use crate::error::{HarnessError, Result};

pub const SUMMARY_HEADER: [&str; 10] = [
    "scenario",
    "key",
    "success",
    "ticks",
    "probes",
    "distinct_jacobians",
    "initial_error",
    "final_error",
    "failure",
    "note",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub key: String,
    pub success: bool,
    pub ticks: usize,
    pub probes: usize,
    pub distinct_jacobians: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub failure: String,
    pub note: String,
}

impl SummaryRow {
    pub fn from_outcome(scenario: &str, key: &str, o: &FunnelOutcome) -> Self {
        Self {
            scenario: scenario.into(),
            key: key.into(),
            success: o.success,
            ticks: o.ticks,
            probes: o.probes,
            distinct_jacobians: o.distinct_jacobians_used,
            initial_error: o.initial_error_norm,
            final_error: o.final_error_norm,
            failure: o.failure.map(|f| f.as_str().to_string()).unwrap_or_default(),
            note: String::new(),
        }
    }

    /// A run that ended without a funnel outcome.
    pub fn failed(scenario: &str, key: &str, failure: &str) -> Self {
        Self {
            scenario: scenario.into(),
            key: key.into(),
            success: false,
            ticks: 0,
            probes: 0,
            distinct_jacobians: 0,
            initial_error: f64::NAN,
            final_error: f64::NAN,
            failure: failure.into(),
            note: String::new(),
        }
    }

    /// A check that is not a funnel run; `value` goes to `final_error`.
    pub fn check(scenario: &str, key: &str, success: bool, value: f64, failure: &str) -> Self {
        Self {
            success,
            final_error: value,
            failure: if success { String::new() } else { failure.into() },
            ..Self::failed(scenario, key, "")
        }
    }

    pub fn with_note(mut self, name: &str, value: impl std::fmt::Display) -> Self {
        if !self.note.is_empty() {
            self.note.push(';');
        }
        self.note.push_str(&format!("{name}={value}"));
        self
    }

    pub fn note_value(&self, name: &str) -> Option<&str> {
        self.note.split(';').find_map(|kv| kv.strip_prefix(name)?.strip_prefix('='))
    }

    fn record(&self) -> [String; 10] {
        [
            self.scenario.clone(),
            self.key.clone(),
            u8::from(self.success).to_string(),
            self.ticks.to_string(),
            self.probes.to_string(),
            self.distinct_jacobians.to_string(),
            fmt_f64(self.initial_error),
            fmt_f64(self.final_error),
            self.failure.clone(),
            self.note.clone(),
        ]
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6e}")
    }
}

/// Failure column for errors that end a single run without ending the
/// scenario. Anything else aborts the scenario.
pub fn run_failure(e: &HarnessError) -> Option<&'static str> {
    let plant = |p: &PlantError| match p {
        PlantError::SolverDiverged { .. } => "solver_diverged",
        PlantError::ObjectEscaped => "object_escaped",
        PlantError::PenetrationExceeded { .. } => "penetration_exceeded",
        PlantError::OutOfBounds(_) => "out_of_bounds",
        PlantError::Other(_) => "plant_error",
    };
    match e {
        HarnessError::Plant(p) | HarnessError::Sim(deform_sim::SimError::Plant(p)) => Some(plant(p)),
        HarnessError::Core(Error::Plant(p)) => Some(plant(p)),
        HarnessError::Core(Error::AllDisabled) => Some("all_disabled"),
        HarnessError::Core(Error::BoundsHit(_)) => Some("bounds_hit"),
        _ => None,
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record(r.record()).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let num = |s: &str| if s.is_empty() { Ok(f64::NAN) } else { s.parse::<f64>() };
    let bad = |m: String| HarnessError::Config(format!("{}: {m}", path.display()));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let r = rec.map_err(csv_error)?;
        if r.len() != SUMMARY_HEADER.len() {
            return Err(bad(format!("expected {} columns, got {}", SUMMARY_HEADER.len(), r.len())));
        }
        let int = |i: usize| r[i].parse::<usize>().map_err(|e| bad(e.to_string()));
        rows.push(SummaryRow {
            scenario: r[0].into(),
            key: r[1].into(),
            success: &r[2] == "1",
            ticks: int(3)?,
            probes: int(4)?,
            distinct_jacobians: int(5)?,
            initial_error: num(&r[6]).map_err(|e| bad(e.to_string()))?,
            final_error: num(&r[7]).map_err(|e| bad(e.to_string()))?,
            failure: r[8].into(),
            note: r[9].into(),
        });
    }
    Ok(rows)
}

/// Writes a plain table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> HarnessError {
    HarnessError::Core(Error::Csv(e))
}

/// File-name-safe form of a row key.
pub fn file_stem(key: &str) -> String {
    key.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}
