//! Scenario execution: the three controllers, the summary record and the
//! α/β sweep.

use std::path::{Path, PathBuf};

use cmpc_core::bezier::{BezierSpline, ReferenceSample};
use cmpc_core::cmpc::{mark_constraints, run_closed_loop, Planner, PlannerState};
use cmpc_core::conic::SolverSettings;
use cmpc_core::dynamics::{integrate_closed_loop, FeedbackLaw, StageTime, SystemModel, TrajectoryLog};
use cmpc_core::ftocp::FtocpConfig;
use cmpc_core::input_bounds::{make_params, sigma_profile, InputBoundParams};
use cmpc_core::tracking::{design_law, k_clf, tighten_polytope, StatePolytope, TrackingLaw};
use cmpc_core::{Error, Result};
use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, ScenarioConfig};
use crate::output::write_csv;

/// States beyond this norm are treated as divergence and stop the run.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Everything derived from a validated config before simulation.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ScenarioConfig,
    pub sys: SystemModel,
    pub law: TrackingLaw,
    pub constraints: StatePolytope,
    pub tightened: StatePolytope,
    pub params: InputBoundParams,
}

impl Setup {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let sys = config.system_model()?;
        let law = design_law(&config.poles(), &config.q_matrix()?, config.wbar)?;
        let constraints = config.constraints()?;
        let tightened = tighten_polytope(&constraints, &law)?;
        let params = make_params(config.alpha, config.beta, config.u_max, &law)?;
        if !constraints.contains(&config.initial_state()) {
            return Err(Error::Configuration("x0 is outside the state constraints".into()));
        }
        Ok(Self { config: config.clone(), sys, law, constraints, tightened, params })
    }

    pub fn planner(&self) -> Result<Planner> {
        let cfg = FtocpConfig {
            horizon: self.config.horizon,
            period: self.config.period,
            weights: self.config.weights()?,
            tightened: self.tightened.clone(),
            params: self.params.clone(),
            law: self.law.clone(),
        };
        Planner::new(self.sys, cfg, self.constraints.clone(), SolverSettings::default())
    }

    /// Γ(0): the input budget consumed by the tube alone.
    pub fn gamma_at_origin(&self) -> Result<f64> {
        self.params.gamma_at(&self.sys, &DVector::zeros(self.sys.dim))
    }
}

/// Per-run summary. Violation metrics are recomputable from the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
    pub final_time: f64,
    /// max over samples of −slack (positive means outside X).
    pub max_state_violation: f64,
    pub state_violations: usize,
    /// max over samples of |u| − u_max.
    pub max_input_excess: f64,
    pub input_violations: usize,
    pub max_abs_input: f64,
    pub planning_steps: usize,
    pub fallback_count: usize,
    pub planner_failures: usize,
    /// cmpc: both planning attempts failed at some step.
    pub hard_failure: bool,
    pub diverged: bool,
    pub gamma0: f64,
    pub first_plan_max_spacing: Option<f64>,
    /// max |u − u*_0| of the plan being tracked.
    pub max_plan_deviation: Option<f64>,
    /// max V/(γw̄²); absent when w̄ = 0.
    pub max_tube_ratio: Option<f64>,
    /// max |k_clf| − (½σᵀMσ + Nᵀσ + Γ) along the run.
    pub max_bound_excess: Option<f64>,
}

impl Summary {
    /// The run finished its full duration without hard failure or divergence.
    pub fn completed(&self) -> bool {
        !self.hard_failure && !self.diverged
    }

    pub fn violation_free(&self) -> bool {
        self.state_violations == 0 && self.input_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub log: TrajectoryLog,
    pub summary: Summary,
}

#[derive(Default)]
struct PlanMetrics {
    deviation: f64,
    tube_ratio: f64,
    bound_excess: f64,
}

fn base_summary(setup: &Setup, log: &TrajectoryLog) -> Summary {
    let c = &setup.config;
    let mut s = Summary {
        mode: c.mode,
        alpha: c.alpha,
        beta: c.beta,
        samples: log.len(),
        final_time: log.rows.last().map_or(0.0, |r| r.t),
        max_state_violation: f64::NEG_INFINITY,
        state_violations: 0,
        max_input_excess: f64::NEG_INFINITY,
        input_violations: 0,
        max_abs_input: 0.0,
        planning_steps: 0,
        fallback_count: 0,
        planner_failures: 0,
        hard_failure: false,
        diverged: false,
        gamma0: setup.gamma_at_origin().unwrap_or(f64::NAN),
        first_plan_max_spacing: None,
        max_plan_deviation: None,
        max_tube_ratio: None,
        max_bound_excess: None,
    };
    for r in &log.rows {
        s.max_state_violation = s.max_state_violation.max(-setup.constraints.slack(&r.x));
        s.max_input_excess = s.max_input_excess.max(r.u.abs() - c.u_max);
        s.max_abs_input = s.max_abs_input.max(r.u.abs());
        s.state_violations += usize::from(!r.state_ok);
        s.input_violations += usize::from(!r.input_ok);
    }
    s
}

/// Runs the configured controller. Configuration problems are reported
/// before any simulation starts.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let setup = Setup::new(config)?;
    match config.mode {
        Mode::Cmpc => run_cmpc(&setup),
        Mode::ClfOnly => run_clf_only(&setup),
        Mode::MpcOnly => run_mpc_only(&setup),
    }
}

fn run_cmpc(setup: &Setup) -> Result<ScenarioOutcome> {
    let c = &setup.config;
    let planner = setup.planner()?;
    let level = setup.law.level();
    let mut m = PlanMetrics { bound_excess: f64::NEG_INFINITY, ..Default::default() };
    let mut observe = |state: &PlannerState, chunk: &TrajectoryLog| {
        let anchor = state.current_anchor();
        let u_plan = state.solution.inputs[0];
        for r in &chunk.rows {
            m.deviation = m.deviation.max((r.u - u_plan).abs());
            if level > 0.0 {
                m.tube_ratio = m.tube_ratio.max(r.lyapunov / level);
            }
            if let Ok(reference) = planner.reference(state, r.t) {
                let sigma = sigma_profile(&setup.sys, &reference, anchor);
                match setup.params.fbl_bound_rhs(&setup.sys, anchor, &sigma) {
                    Ok(rhs) => m.bound_excess = m.bound_excess.max(r.u.abs() - rhs),
                    Err(e) => warn!("input-bound evaluation failed at t = {}: {e}", r.t),
                }
            }
        }
    };
    let run = run_closed_loop(&planner, &c.initial_state(), &c.disturbance()?, c.periods()?, c.steps_per_period()?, &mut observe)?;
    let mut log = run.log;
    mark_constraints(&mut log, &setup.constraints, c.u_max);
    let mut s = base_summary(setup, &log);
    s.planning_steps = run.periods.len();
    s.fallback_count = run.periods.iter().filter(|p| p.fallback_used).count();
    if let Some(e) = &run.failure {
        warn!("cmpc run stopped: {e}");
        s.planner_failures = 1;
        s.hard_failure = true;
    }
    s.first_plan_max_spacing = Some(run.first_plan.max_knot_spacing());
    s.max_plan_deviation = Some(m.deviation);
    s.max_tube_ratio = (level > 0.0).then_some(m.tube_ratio);
    s.max_bound_excess = Some(m.bound_excess);
    Ok(ScenarioOutcome { log, summary: s })
}

/// k_clf regulating to the origin with no constraint handling.
struct ClfToOrigin<'a> {
    sys: &'a SystemModel,
    law: &'a TrackingLaw,
    origin: ReferenceSample,
}

impl FeedbackLaw for ClfToOrigin<'_> {
    fn input(&mut self, x: &DVector<f64>, _at: StageTime) -> Result<f64> {
        if x.norm() > DIVERGENCE_BOUND {
            return Err(Error::Numerical("state diverged".into()));
        }
        k_clf(self.law, self.sys, &self.origin, x)
    }

    fn reference(&self, _at: StageTime) -> Option<DVector<f64>> {
        Some(self.origin.state.clone())
    }

    fn lyapunov(&self, x: &DVector<f64>, _at: StageTime) -> Option<f64> {
        Some(self.law.lyapunov_value(&self.origin, x))
    }
}

/// Splits an aborted simulation into its partial log.
fn partial_log(res: Result<TrajectoryLog>) -> Result<(TrajectoryLog, bool)> {
    match res {
        Ok(log) => Ok((log, false)),
        Err(Error::SimulationAborted { t, reason, log }) => {
            warn!("simulation stopped at t = {t}: {reason}");
            Ok((*log, true))
        }
        Err(e) => Err(e),
    }
}

fn run_clf_only(setup: &Setup) -> Result<ScenarioOutcome> {
    let c = &setup.config;
    let mut law = ClfToOrigin { sys: &setup.sys, law: &setup.law, origin: ReferenceSample::zero(setup.sys.dim) };
    let res = integrate_closed_loop(&setup.sys, &mut law, &c.initial_state(), &c.disturbance()?, (0.0, c.duration), c.dt());
    let (mut log, diverged) = partial_log(res)?;
    mark_constraints(&mut log, &setup.constraints, c.u_max);
    let mut s = base_summary(setup, &log);
    s.diverged = diverged;
    let level = setup.law.level();
    if level > 0.0 {
        s.max_tube_ratio = Some(log.rows.iter().map(|r| r.lyapunov / level).fold(0.0, f64::max));
    }
    Ok(ScenarioOutcome { log, summary: s })
}

/// Zero-order hold of one planned input, logging the plan as reference.
struct HeldInput<'a> {
    u: f64,
    law: &'a TrackingLaw,
    spline: &'a BezierSpline,
}

impl HeldInput<'_> {
    fn sample(&self, t: f64) -> ReferenceSample {
        let n = self.spline.dim();
        if t <= self.spline.end() {
            self.spline.sample(t).unwrap_or_else(|_| ReferenceSample::zero(n))
        } else {
            ReferenceSample::zero(n)
        }
    }
}

impl FeedbackLaw for HeldInput<'_> {
    fn input(&mut self, x: &DVector<f64>, _at: StageTime) -> Result<f64> {
        if x.norm() > DIVERGENCE_BOUND {
            return Err(Error::Numerical("state diverged".into()));
        }
        Ok(self.u)
    }

    fn reference(&self, at: StageTime) -> Option<DVector<f64>> {
        Some(self.sample(at.step_start).state)
    }

    fn lyapunov(&self, x: &DVector<f64>, at: StageTime) -> Option<f64> {
        Some(self.law.lyapunov_value(&self.sample(at.step_start), x))
    }
}

fn run_mpc_only(setup: &Setup) -> Result<ScenarioOutcome> {
    let c = &setup.config;
    let planner = setup.planner()?;
    let w = c.disturbance()?;
    let periods = c.periods()?;
    let dt = c.dt();
    let mut state = planner.initialize(&c.initial_state())?;
    let first_spacing = state.solution.max_knot_spacing();
    let mut log = TrajectoryLog::default();
    let mut x = c.initial_state();
    let (mut steps, mut fallbacks, mut failures) = (1, 0, 0);
    let mut failed_at: Option<usize> = None;
    let mut diverged = false;
    for i in 0..periods {
        let t0 = i as f64 * c.period;
        if i > 0 && failed_at.is_none() {
            match planner.plan_step(&state, &x, t0) {
                Ok(s) => {
                    state = s;
                    steps += 1;
                    fallbacks += usize::from(state.fallback_used);
                }
                Err(e @ Error::PlannerFailure { .. }) => {
                    warn!("mpc_only: {e}; holding the remaining plan inputs");
                    failures += 1;
                    failed_at = Some(i);
                }
                Err(e) => return Err(e),
            }
        }
        let u = match failed_at {
            None => state.solution.inputs[0],
            Some(f) => state.solution.inputs.get(i - f + 1).copied().unwrap_or(0.0),
        };
        let mut law = HeldInput { u, law: &setup.law, spline: &state.spline };
        let res = integrate_closed_loop(&setup.sys, &mut law, &x, &w, (t0, t0 + c.period), dt);
        let (mut chunk, stop) = partial_log(res)?;
        for r in &mut chunk.rows {
            r.fallback_used = failed_at.is_none() && state.fallback_used;
            r.planner_feasible = failed_at.is_none();
        }
        if stop {
            log.append(chunk)?;
            diverged = true;
            break;
        }
        let last = chunk.rows.pop().expect("integration logs at least one row");
        x = last.x.clone();
        log.append(chunk)?;
        if i + 1 == periods {
            log.push(last)?;
        }
    }
    mark_constraints(&mut log, &setup.constraints, c.u_max);
    let mut s = base_summary(setup, &log);
    s.planning_steps = steps;
    s.fallback_count = fallbacks;
    s.planner_failures = failures;
    s.diverged = diverged;
    s.first_plan_max_spacing = Some(first_spacing);
    Ok(ScenarioOutcome { log, summary: s })
}

/// Runs a scenario and writes `<output>.csv` and `<output>.summary.json`.
pub fn run_to_files(config: &ScenarioConfig, output: &Path) -> Result<ScenarioOutcome> {
    let outcome = run_scenario(config)?;
    write_csv(&csv_path(output), &outcome.log)?;
    write_summary(&summary_path(output), &outcome.summary)?;
    Ok(outcome)
}

/// Output stem: the path without a `.csv` extension.
pub fn output_stem(output: &Path) -> PathBuf {
    if output.extension().is_some_and(|e| e == "csv") {
        output.with_extension("")
    } else {
        output.to_path_buf()
    }
}

pub fn csv_path(output: &Path) -> PathBuf {
    output_stem(output).with_extension("csv")
}

pub fn summary_path(output: &Path) -> PathBuf {
    output_stem(output).with_extension("summary.json")
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Configuration(format!("cannot write {}: {e}", path.display()))
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

/// One sweep point: the summary, or the error that stopped the point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub csv: Option<PathBuf>,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

fn point_stem(stem: &Path, alpha: f64, beta: f64) -> PathBuf {
    let name = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.with_file_name(format!("{name}_a{alpha}_b{beta}"))
}

/// Runs `base` at each (α, β) pair in parallel. Per-point errors are
/// recorded and the sweep continues; rows come back in input order.
pub fn run_sweep(base: &ScenarioConfig, pairs: &[(f64, f64)], output: Option<&Path>) -> Result<Vec<SweepRow>> {
    if pairs.len() < 2 {
        return Err(Error::Configuration("a sweep needs at least two points".into()));
    }
    base.validate()?;
    let stem = output.map(output_stem);
    let run_point = |&(alpha, beta): &(f64, f64)| -> SweepRow {
        let config = ScenarioConfig { alpha, beta, ..base.clone() };
        let csv = stem.as_ref().map(|s| point_stem(s, alpha, beta).with_extension("csv"));
        let res = run_scenario(&config).and_then(|o| {
            if let Some(p) = &csv {
                write_csv(p, &o.log)?;
            }
            Ok(o.summary)
        });
        info!("sweep point ({alpha}, {beta}) done");
        match res {
            Ok(summary) => SweepRow { alpha, beta, csv, summary: Some(summary), error: None },
            Err(e) => SweepRow { alpha, beta, csv: None, summary: None, error: Some(e.to_string()) },
        }
    };
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs.iter().map(|p| scope.spawn(move || run_point(p))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect::<Vec<_>>()
    });
    if let Some(s) = &stem {
        write_sweep_table(s, &rows)?;
    }
    Ok(rows)
}

/// Writes `<stem>_sweep.csv` and `<stem>_sweep.json`.
pub fn write_sweep_table(stem: &Path, rows: &[SweepRow]) -> Result<()> {
    let name = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let json_path = stem.with_file_name(format!("{name}_sweep.json"));
    let text = serde_json::to_string_pretty(rows).expect("sweep rows serialize");
    std::fs::write(&json_path, text + "\n").map_err(|e| io_error(&json_path, e))?;
    let csv_path = stem.with_file_name(format!("{name}_sweep.csv"));
    std::fs::write(&csv_path, sweep_table(rows)).map_err(|e| io_error(&csv_path, e))
}

/// Comparison table, one line per sweep point.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "alpha,beta,first_plan_max_spacing,max_plan_deviation,state_violations,input_violations,fallback_count,hard_failure,error\n",
    );
    for r in rows {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        match &r.summary {
            Some(s) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},\n",
                r.alpha,
                r.beta,
                opt(s.first_plan_max_spacing),
                opt(s.max_plan_deviation),
                s.state_violations,
                s.input_violations,
                s.fallback_count,
                u8::from(s.hard_failure)
            )),
            None => out.push_str(&format!(
                "{},{},,,,,,,\"{}\"\n",
                r.alpha,
                r.beta,
                r.error.as_deref().unwrap_or("").replace('"', "'")
            )),
        }
    }
    out
}

/// Gain tune-up: start at (1, 1) and double both until the cmpc run is
/// complete, violation-free and satisfies the empirical input-bound check
/// (or `max_doublings` is exhausted).
pub fn tune_gains(base: &ScenarioConfig, max_doublings: usize, tol: f64) -> Result<(f64, Summary)> {
    let mut gain = 1.0;
    for _ in 0..=max_doublings {
        let config = ScenarioConfig { alpha: gain, beta: gain, mode: Mode::Cmpc, ..base.clone() };
        let s = run_scenario(&config)?.summary;
        if s.completed() && s.violation_free() && s.max_bound_excess.is_some_and(|e| e <= tol) {
            return Ok((gain, s));
        }
        gain *= 2.0;
    }
    Err(Error::Configuration(format!("no accepted gain up to {}", gain / 2.0)))
}
