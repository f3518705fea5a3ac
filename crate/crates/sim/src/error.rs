use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] deform_core::PlantError),
}
