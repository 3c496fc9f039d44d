//! Multi-agent reinforcement learning: environment, networks and trainers.

pub mod env;
pub mod mlp;
pub mod train;
