//! Planar quasi-static simulator of a compliant multi-finger hand holding
//! a rigid object.
//!
//! Fingers are chains of rigid segments joined by torsional springs.
//! Actuation shifts joint rest angles; contact is a stiff penalty with
//! lagged Coulomb friction; each command is answered with a static
//! equilibrium found by damped Newton on the total energy.

pub mod calibration;
pub mod config;
pub mod error;
pub mod model;
pub mod plant;
pub mod scene;
pub mod solver;

pub use config::PlantConfig;
pub use error::SimError;
pub use plant::{SensorLayout, SimPlant};
