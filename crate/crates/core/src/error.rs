use thiserror::Error;

/// Failures reported by a plant while settling to a new equilibrium.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("equilibrium solver diverged: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("object escaped the workspace")]
    ObjectEscaped,
    #[error("penetration depth {depth:e} exceeds cap {cap:e}")]
    PenetrationExceeded { depth: f64, cap: f64 },
    #[error("actuation out of bounds on channel {0}")]
    OutOfBounds(usize),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("channel {0} is constant across calibration samples")]
    DegenerateChannel(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("free-motion fit did not converge: rmse {rmse:e} > target {target:e}")]
    FitDidNotConverge { rmse: f64, target: f64 },
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("jacobian store is empty")]
    EmptyStore,
    #[error("probe destabilized the grasp on column {column}: cost {before:e} -> {after:e}")]
    ProbeDestabilized { column: usize, before: f64, after: f64 },
    #[error("probe on channel {0} would leave actuation bounds in both directions")]
    BoundsHit(usize),
    #[error("every controlled actuation channel is disabled")]
    AllDisabled,
    #[error("invalid channels: {0}")]
    InvalidChannels(String),
    #[error("demonstration contains no samples")]
    EmptyDemonstration,
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
