//! Scenario configuration (JSON).

use std::path::{Path, PathBuf};

use cmpc_core::dynamics::{step_count, DisturbanceSignal, SystemModel, UNIFORM_HOLD};
use cmpc_core::ftocp::CostWeights;
use cmpc_core::tracking::StatePolytope;
use cmpc_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Cmpc,
    ClfOnly,
    MpcOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    // A struct variant so that unknown fields are rejected here too.
    Zero {},
    Sinusoid {
        #[serde(default)]
        frequencies: Option<Vec<f64>>,
        #[serde(default)]
        phases: Option<Vec<f64>>,
    },
    Uniform {
        #[serde(default)]
        hold: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeSpec {
    pub rows: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub state: Vec<Vec<f64>>,
    pub input: f64,
    pub terminal: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: String,
    pub x0: Vec<f64>,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "T")]
    pub period: f64,
    /// Integration step; defaults to T/100.
    #[serde(default)]
    pub dt: Option<f64>,
    pub duration: f64,
    pub wbar: f64,
    pub disturbance: DisturbanceSpec,
    pub polytope: PolytopeSpec,
    pub u_max: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Closed-loop tracking poles; defaults to −2 repeated.
    #[serde(default)]
    pub poles: Option<Vec<f64>>,
    /// Lyapunov Q; defaults to identity.
    #[serde(default, rename = "Q")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub cost_weights: Option<CostSpec>,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Configuration(format!("{what} must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Configuration(format!("{what} must be finite")))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Configuration(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn system_model(&self) -> Result<SystemModel> {
        SystemModel::by_name(&self.system)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.period / 100.0)
    }

    pub fn steps_per_period(&self) -> Result<usize> {
        step_count(self.period, self.dt())
            .map_err(|_| Error::Configuration(format!("dt = {} does not divide T = {}", self.dt(), self.period)))
    }

    pub fn periods(&self) -> Result<usize> {
        step_count(self.duration, self.period)
            .map_err(|_| Error::Configuration(format!("duration {} is not a multiple of T = {}", self.duration, self.period)))
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }

    pub fn poles(&self) -> Vec<f64> {
        self.poles.clone().unwrap_or_else(|| vec![-2.0; self.dim()])
    }

    pub fn q_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        match &self.q {
            Some(rows) => matrix(rows, n, "Q"),
            None => Ok(DMatrix::identity(n, n)),
        }
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let n = self.dim();
        match &self.cost_weights {
            Some(c) => Ok(CostWeights {
                state: matrix(&c.state, n, "cost_weights.state")?,
                input: c.input,
                terminal: matrix(&c.terminal, n, "cost_weights.terminal")?,
            }),
            None => Ok(CostWeights::default_for(n)),
        }
    }

    pub fn constraints(&self) -> Result<StatePolytope> {
        let n = self.dim();
        if self.polytope.rows.iter().any(|r| r.len() != n) {
            return Err(Error::Configuration(format!("polytope rows must have length {n}")));
        }
        let rows = self.polytope.rows.iter().map(|r| DVector::from_column_slice(r)).collect();
        StatePolytope::new(rows, self.polytope.offsets.clone())
    }

    pub fn disturbance(&self) -> Result<DisturbanceSignal> {
        let n = self.dim();
        Ok(match &self.disturbance {
            DisturbanceSpec::Zero {} => DisturbanceSignal::Zero { dim: n },
            DisturbanceSpec::Sinusoid { frequencies, phases } => {
                let base = DisturbanceSignal::sinusoid(n, self.wbar);
                let DisturbanceSignal::Sinusoid { frequencies: f0, phases: p0, .. } = base else { unreachable!() };
                let frequencies = frequencies.clone().unwrap_or(f0);
                let phases = phases.clone().unwrap_or(p0);
                if frequencies.len() != n || phases.len() != n {
                    return Err(Error::Configuration(format!("sinusoid needs {n} frequencies and phases")));
                }
                DisturbanceSignal::Sinusoid { wbar: self.wbar, frequencies, phases }
            }
            DisturbanceSpec::Uniform { hold } => {
                let hold = hold.unwrap_or(UNIFORM_HOLD);
                if !(hold > 0.0) {
                    return Err(Error::Configuration("uniform hold must be positive".into()));
                }
                DisturbanceSignal::SeededUniform { dim: n, wbar: self.wbar, seed: self.seed, hold }
            }
        })
    }

    /// Checks everything that can be checked without solving anything.
    pub fn validate(&self) -> Result<()> {
        let sys = self.system_model()?;
        let n = self.dim();
        if n != sys.dim {
            return Err(Error::Configuration(format!("x0 has length {n}, system '{}' has {}", self.system, sys.dim)));
        }
        for (what, v) in [
            ("T", self.period),
            ("duration", self.duration),
            ("wbar", self.wbar),
            ("u_max", self.u_max),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("dt", self.dt()),
        ] {
            finite(what, v)?;
        }
        self.x0.iter().try_for_each(|&v| finite("x0", v))?;
        if self.horizon == 0 {
            return Err(Error::Configuration("N must be ≥ 1".into()));
        }
        if !(self.period > 0.0) || !(self.dt() > 0.0) || !(self.duration > 0.0) {
            return Err(Error::Configuration("T, dt and duration must be positive".into()));
        }
        if self.wbar < 0.0 || self.alpha < 0.0 || self.beta < 0.0 || !(self.u_max > 0.0) {
            return Err(Error::Configuration("wbar, alpha, beta must be ≥ 0 and u_max > 0".into()));
        }
        if self.poles().len() != n {
            return Err(Error::Configuration(format!("poles must have length {n}")));
        }
        self.steps_per_period()?;
        self.periods()?;
        self.q_matrix()?;
        self.weights()?;
        self.disturbance()?;
        if self.polytope.rows.len() != self.polytope.offsets.len() {
            return Err(Error::Configuration("polytope rows and offsets differ in count".into()));
        }
        Ok(())
    }
}
