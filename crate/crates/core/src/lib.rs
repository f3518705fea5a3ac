//! Model-less deformation control for compliant hands.
//!
//! The controller works on the *deformation state* of a hand: normalized
//! sensor readings minus what a learned free-motion model predicts for the
//! current actuation. Local Jacobians relating actuation to deformation are
//! estimated by small explorative actuations, stored alongside the state
//! they were probed at, and reused by nearest-neighbour lookup.

pub mod actuation;
pub mod deformation;
pub mod error;
pub mod free_motion;
pub mod funnel;
pub mod jacobian;
pub mod normalization;
pub mod plant;
pub mod sensor;
pub mod skill;
pub mod store;
pub mod synthetic;
pub mod trace;

pub use actuation::{ActuationVector, Bounds};
pub use deformation::{DeformationModel, ModelGroup};
pub use error::{Error, PlantError, Result};
pub use free_motion::{FitConfig, FreeMotionModel};
pub use normalization::NormalizationTable;
pub use plant::{DemonstrationPlant, Plant, Wrench};
pub use sensor::{DeformationState, SensorVector};
pub use jacobian::{AlphaPolicy, ControlTarget, DeformationJacobian, ProbeConfig, StepResult};
pub use funnel::{run_funnel, FailureReason, FunnelEvent, FunnelOutcome, FunnelPolicy};
pub use store::{JacobianRecord, JacobianStore};
pub use skill::{build_skill, extract_target, record_demonstration, run_open_loop, run_sequence, DemonstrationTrajectory, SequenceFile, SequenceOutcome, StageOutcome, SkillMode, SkillSpec, Threshold};
pub use trace::{read_trace, read_wrench_trajectory, write_trace, write_wrench_trajectory, TimedWrench, TraceRow};
