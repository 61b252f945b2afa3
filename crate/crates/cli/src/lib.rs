//! `shuffle-vr` command-line driver: instance generation, experiment runs,
//! step-size sweeps, verification suites and ordering tools.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod trace;

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
}
