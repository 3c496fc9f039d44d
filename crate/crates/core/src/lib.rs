//! Simulation and optimization toolkit for SIM-assisted cell-free massive MIMO
//! with simultaneous wireless information and power transfer.
//!
//! Receivers are indexed information receivers first (`0..k_i`), then energy
//! receivers (`k_i..k_i + k_e`). Access points are indexed `0..m`.

pub mod channel;
pub mod drl;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod heuristics;
pub mod jappa;
pub mod linalg;
pub mod network;
pub mod oracle;
pub mod performance;
pub mod precoding;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
