//! Scenario runner for the multi-rate C-MPC controller: JSON configs,
//! the cmpc / clf_only / mpc_only comparison, α/β sweeps and CSV output.

// Guards are written as `!(x > 0.0)` on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod scenario;
pub mod selftest;

pub use config::{Mode, ScenarioConfig};
pub use scenario::{run_scenario, run_sweep, ScenarioOutcome, Summary, SweepRow};
