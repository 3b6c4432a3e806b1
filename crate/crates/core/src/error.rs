use thiserror::Error;

use crate::conic::SolveStatus;
use crate::dynamics::TrajectoryLog;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("input gain |g(x)| = {gain:e} below singularity guard")]
    Singularity { gain: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("plan for step {index} is stale at t = {t}")]
    StalePlan { index: usize, t: f64 },

    #[error(
        "planner failure at step {index}: primary {primary:?}, fallback {fallback:?}"
    )]
    PlannerFailure {
        index: usize,
        primary: SolveStatus,
        fallback: SolveStatus,
    },

    #[error("simulation aborted at t = {t}: {reason}")]
    SimulationAborted {
        t: f64,
        reason: String,
        log: Box<TrajectoryLog>,
    },
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} contains non-finite entries")))
    }
}
