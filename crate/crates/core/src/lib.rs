//! Post-processing toolkit for direction-scanned THz channel sounding.
//!
//! The processing chain follows a VNA campaign: system-response calibration,
//! multipath extraction (successive cancellation seeding plus SAGE
//! refinement), DBSCAN clustering under the multipath component distance, and
//! channel statistics (path loss, K-factor, delay and angular spreads). A
//! forward model synthesizes CTFs from known paths so every stage can be
//! checked against ground truth.

pub mod calibration;
pub mod characterization;
pub mod clustering;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod pipeline;
pub mod sage;
pub mod types;

pub use error::{Error, Result};
pub use types::{AntennaPattern, Ctf, FrequencyGrid, Mpc, PathPhase, RxPosition, SteeringDirection, SteeringGrid};
