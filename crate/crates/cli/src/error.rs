use thiserror::Error;

/// Errors that abort a scenario (exit code 2). Failed runs inside a
/// scenario are outcomes, not errors.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] deform_core::Error),
    #[error(transparent)]
    Sim(#[from] deform_sim::SimError),
    #[error(transparent)]
    Plant(#[from] deform_core::PlantError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
