//! Scenario generation, configuration and experiment orchestration.

pub mod config;
pub mod report;
pub mod sweep;
pub mod topology;
pub mod validate;
