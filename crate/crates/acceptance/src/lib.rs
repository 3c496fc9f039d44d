//! Acceptance criteria, run with `cargo test -p simswipt-acceptance`.

/// Master seed shared by every criterion.
pub const SEED: u64 = 1;
pub const ORACLE_TRIALS: usize = 10_000;
pub const SCA_RUNS: u64 = 5;
pub const DIRECTION_REALIZATIONS: usize = 50;
