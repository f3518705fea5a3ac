//! Feedback funnel: reuse stored Jacobians while they make progress, probe
//! a fresh one when they stall, and grow the store as it goes.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::deformation::DeformationModel;
use crate::error::{Error, Result};
use crate::jacobian::{control_error, control_tick, cost, norm, probe_jacobian, AlphaPolicy, ControlTarget, ProbeConfig};
use crate::plant::Plant;
use crate::store::JacobianStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FunnelPolicy {
    /// Run fails once it would need more distinct Jacobians than this.
    pub max_distinct_jacobians: usize,
    /// Consecutive non-improving ticks before a fresh probe.
    pub stall_ticks: usize,
    pub tick_budget: usize,
    /// A tick improves when cost drops by more than this.
    pub progress_epsilon: f64,
    pub alpha: AlphaPolicy,
}

impl Default for FunnelPolicy {
    fn default() -> Self {
        Self {
            max_distinct_jacobians: 5,
            stall_ticks: 3,
            tick_budget: 200,
            progress_epsilon: 1e-4,
            alpha: AlphaPolicy::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureReason {
    JacobianCap,
    TickBudget,
    ProbeDestabilized,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::JacobianCap => "jacobian_cap",
            Self::TickBudget => "tick_budget",
            Self::ProbeDestabilized => "probe_destabilized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunnelEvent {
    /// A Jacobian was probed at the current state and stored.
    Probe { tick: usize, jacobian_id: usize, cost: f64 },
    /// A stored Jacobian was selected by nearest-neighbour lookup.
    Reuse { tick: usize, jacobian_id: usize, cost: f64 },
    Tick {
        tick: usize,
        cost: f64,
        error_norm: f64,
        alpha: f64,
        jacobian_id: usize,
        improved: bool,
        /// Deformation on the target rows after the tick.
        tracked: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunnelOutcome {
    pub success: bool,
    pub ticks: usize,
    pub probes: usize,
    pub distinct_jacobians_used: usize,
    pub initial_error_norm: f64,
    pub final_error_norm: f64,
    pub failure: Option<FailureReason>,
    pub trace: Vec<FunnelEvent>,
}

impl FunnelOutcome {
    /// Ids applied in at least one tick, or selected for use.
    pub fn jacobian_ids(&self) -> BTreeSet<usize> {
        self.trace
            .iter()
            .filter_map(|e| match e {
                FunnelEvent::Probe { jacobian_id, .. } | FunnelEvent::Reuse { jacobian_id, .. } => Some(*jacobian_id),
                FunnelEvent::Tick { jacobian_id, .. } => Some(*jacobian_id),
            })
            .collect()
    }

    /// Tick log with probe/reuse event rows:
    /// `event,tick,cost,error_norm,alpha,jacobian_id,improved,tracked_0..`.
    /// Probe and reuse rows leave `alpha`, `improved` and the tracked
    /// columns empty.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let width = self
            .trace
            .iter()
            .find_map(|e| match e {
                FunnelEvent::Tick { tracked, .. } => Some(tracked.len()),
                _ => None,
            })
            .unwrap_or(0);
        let blanks = ",".repeat(width);
        write!(w, "event,tick,cost,error_norm,alpha,jacobian_id,improved")?;
        for i in 0..width {
            write!(w, ",tracked_{i}")?;
        }
        writeln!(w)?;
        for e in &self.trace {
            match e {
                FunnelEvent::Probe { tick, jacobian_id, cost } => {
                    writeln!(w, "probe,{tick},{cost},{},,{jacobian_id},{blanks}", (2.0 * cost).sqrt())?
                }
                FunnelEvent::Reuse { tick, jacobian_id, cost } => {
                    writeln!(w, "reuse,{tick},{cost},{},,{jacobian_id},{blanks}", (2.0 * cost).sqrt())?
                }
                FunnelEvent::Tick { tick, cost, error_norm, alpha, jacobian_id, improved, tracked } => {
                    write!(w, "tick,{tick},{cost},{error_norm},{alpha},{jacobian_id},{}", u8::from(*improved))?;
                    for v in tracked {
                        write!(w, ",{v}")?;
                    }
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    }
}

fn current_cost<P: Plant + ?Sized>(plant: &P, model: &DeformationModel, target: &ControlTarget) -> Result<f64> {
    let ds = model.compute_deformation(&plant.sensors(), plant.actuation().values())?;
    Ok(cost(&control_error(&ds, target)?))
}

/// Drives the plant toward `target`, reusing and extending `store`.
///
/// Starts from the nearest stored Jacobian (or a fresh probe when the store
/// is empty), keeps it while ticks improve the cost, and probes a new one
/// after `stall_ticks` non-improving ticks. Failure is an outcome; only
/// plant errors are returned as `Err`.
pub fn run_funnel<P: Plant + ?Sized>(
    plant: &mut P,
    model: &DeformationModel,
    target: &ControlTarget,
    store: &mut JacobianStore,
    policy: &FunnelPolicy,
    probe: &ProbeConfig,
) -> Result<FunnelOutcome> {
    target.validate(model.sensor_count(), plant.actuation())?;
    if target.enabled_cols(plant.actuation()).is_empty() {
        return Err(Error::AllDisabled);
    }
    let mut trace = Vec::new();
    let mut used = BTreeSet::new();
    let mut probes = 0;
    let mut prev = current_cost(plant, model, target)?;
    let initial_error_norm = (2.0 * prev).sqrt();
    let finish = |success, ticks, probes, used: &BTreeSet<usize>, cost: f64, failure, trace| FunnelOutcome {
        success,
        ticks,
        probes,
        distinct_jacobians_used: used.len(),
        initial_error_norm,
        final_error_norm: (2.0 * cost).sqrt(),
        failure,
        trace,
    };
    if initial_error_norm <= target.success_threshold {
        return Ok(finish(true, 0, 0, &used, prev, None, trace));
    }
    if policy.max_distinct_jacobians == 0 {
        return Ok(finish(false, 0, 0, &used, prev, Some(FailureReason::JacobianCap), trace));
    }

    // Fresh probe at the current state; destabilized probes end the run.
    macro_rules! probe_now {
        ($tick:expr) => {
            match probe_jacobian(plant, model, probe, target) {
                Ok(j) => {
                    probes += 1;
                    let id = store.insert(j)?;
                    prev = current_cost(plant, model, target)?;
                    trace.push(FunnelEvent::Probe { tick: $tick, jacobian_id: id, cost: prev });
                    id
                }
                Err(Error::ProbeDestabilized { .. }) => {
                    let c = current_cost(plant, model, target)?;
                    return Ok(finish(false, $tick, probes, &used, c, Some(FailureReason::ProbeDestabilized), trace));
                }
                Err(e) => return Err(e),
            }
        };
    }

    let mut current = if store.is_empty() {
        probe_now!(0)
    } else {
        let ds = model.compute_deformation(&plant.sensors(), plant.actuation().values())?;
        let id = store.nearest(&plant.sensors(), &ds)?.id;
        trace.push(FunnelEvent::Reuse { tick: 0, jacobian_id: id, cost: prev });
        id
    };
    used.insert(current);
    store.mark_used(current);

    let mut stall = 0;
    for tick in 1..=policy.tick_budget {
        let jacobian = &store.get(current).expect("stored id").jacobian;
        let step = control_tick(plant, model, target, jacobian, policy.alpha, prev, policy.progress_epsilon)?;
        let error_norm = norm(&step.error);
        trace.push(FunnelEvent::Tick {
            tick,
            cost: step.cost,
            error_norm,
            alpha: step.alpha,
            jacobian_id: current,
            improved: step.improved,
            tracked: step.deformation.select(&target.rows)?,
        });
        prev = step.cost;
        if step.improved {
            stall = 0;
            store.mark_improved(current, tick);
        } else {
            stall += 1;
        }
        if error_norm <= target.success_threshold {
            return Ok(finish(true, tick, probes, &used, prev, None, trace));
        }
        if stall >= policy.stall_ticks {
            if used.len() >= policy.max_distinct_jacobians {
                return Ok(finish(false, tick, probes, &used, prev, Some(FailureReason::JacobianCap), trace));
            }
            current = probe_now!(tick);
            used.insert(current);
            store.mark_used(current);
            stall = 0;
        }
    }
    Ok(finish(false, policy.tick_budget, probes, &used, prev, Some(FailureReason::TickBudget), trace))
}
