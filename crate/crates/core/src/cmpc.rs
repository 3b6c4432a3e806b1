//! The multi-rate loop: replan at t = iT, track the frozen spline with the
//! CLF-QP law in between.

use log::{debug, warn};
use nalgebra::DVector;

use crate::bezier::{BezierSpline, ReferenceSample};
use crate::conic::{SolveStatus, SolverSettings};
use crate::dynamics::{
    integrate_closed_loop, linearize_discretize, DiscreteLinearization, DisturbanceSignal, FeedbackLaw, StageTime,
    SystemModel, TrajectoryLog,
};
use crate::error::{Error, Result};
use crate::ftocp::{Ftocp, FtocpConfig, FtocpSolution};
use crate::tracking::{k_clf, StatePolytope, TrackingLaw};

/// Slack on "t is a planning instant" and on the tracking window.
const GRID_TOL: f64 = 1e-9;

/// State-constraint slack tolerance used when flagging log rows.
pub const STATE_TOL: f64 = 1e-6;
/// Input-bound tolerance used when flagging log rows.
pub const INPUT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PlannerState {
    /// Planning index i; the plan covers [iT, (i+N)T].
    pub index: usize,
    /// Anchors (x̄, ū) for the next planning step: the current plan shifted.
    pub next_anchors: Vec<(DVector<f64>, f64)>,
    /// Linearizations that produced the current plan.
    pub linearizations: Vec<DiscreteLinearization>,
    pub spline: BezierSpline,
    pub solution: FtocpSolution,
    pub fallback_used: bool,
    pub primary_status: SolveStatus,
}

impl PlannerState {
    /// Anchor of the segment currently being tracked.
    pub fn current_anchor(&self) -> &DVector<f64> {
        &self.linearizations[0].anchor_state
    }
}

#[derive(Debug, Clone)]
pub struct Planner {
    sys: SystemModel,
    ftocp: Ftocp,
    settings: SolverSettings,
    /// Original (untightened) state constraints.
    constraints: StatePolytope,
    origin: DiscreteLinearization,
}

impl Planner {
    pub fn new(
        sys: SystemModel,
        config: FtocpConfig,
        constraints: StatePolytope,
        settings: SolverSettings,
    ) -> Result<Self> {
        if constraints.dim() != sys.dim || config.law.dim() != sys.dim {
            return Err(Error::InvalidInput("system, law and constraints dimensions differ".into()));
        }
        let origin = linearize_discretize(&sys, &DVector::zeros(sys.dim), 0.0, config.period)?;
        Ok(Self { sys, ftocp: Ftocp::new(config)?, settings, constraints, origin })
    }

    pub fn system(&self) -> &SystemModel {
        &self.sys
    }

    pub fn ftocp(&self) -> &Ftocp {
        &self.ftocp
    }

    pub fn law(&self) -> &TrackingLaw {
        &self.ftocp.config().law
    }

    pub fn period(&self) -> f64 {
        self.ftocp.config().period
    }

    pub fn horizon(&self) -> usize {
        self.ftocp.config().horizon
    }

    pub fn constraints(&self) -> &StatePolytope {
        &self.constraints
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn linearize(&self, anchors: &[(DVector<f64>, f64)]) -> Result<Vec<DiscreteLinearization>> {
        anchors
            .iter()
            .map(|(x, u)| linearize_discretize(&self.sys, x, *u, self.period()))
            .collect()
    }

    fn attempt(
        &self,
        x: &DVector<f64>,
        lins: &[DiscreteLinearization],
        settings: &SolverSettings,
        prev: Option<&FtocpSolution>,
    ) -> Result<(SolveStatus, Option<FtocpSolution>)> {
        let prog = self.ftocp.build(&self.sys, x, lins)?;
        let warm = prev.map(|p| self.ftocp.shifted_warm_start(p));
        let res = prog.solve_warm(settings, warm.as_ref())?;
        debug!("FTOCP solve: {:?} after {} iterations", res.status, res.iterations);
        if res.status == SolveStatus::Optimal {
            Ok((res.status, Some(self.ftocp.extract(&res)?)))
        } else {
            Ok((res.status, None))
        }
    }

    fn finish(
        &self,
        index: usize,
        lins: Vec<DiscreteLinearization>,
        solution: FtocpSolution,
        fallback_used: bool,
        primary_status: SolveStatus,
    ) -> Result<PlannerState> {
        let n = self.sys.dim;
        let horizon = self.horizon();
        let spline = self.ftocp.spline(&solution, index as f64 * self.period())?;
        let next_anchors = (0..horizon)
            .map(|k| {
                // x*_N is constrained to the origin; store it exactly.
                let x = if k + 1 == horizon { DVector::zeros(n) } else { solution.knots[k + 1].clone() };
                let u = if k + 1 < horizon { solution.inputs[k + 1] } else { 0.0 };
                (x, u)
            })
            .collect();
        Ok(PlannerState { index, next_anchors, linearizations: lins, spline, solution, fallback_used, primary_status })
    }

    /// First plan from straight-line anchors x0 → 0 with zero inputs.
    pub fn initialize(&self, x0: &DVector<f64>) -> Result<PlannerState> {
        if x0.len() != self.sys.dim {
            return Err(Error::InvalidInput("initial state dimension mismatch".into()));
        }
        if !self.constraints.contains(x0) {
            return Err(Error::Precondition("initial state is outside the state constraints".into()));
        }
        let horizon = self.horizon();
        let anchors: Vec<_> = (0..horizon)
            .map(|k| (x0 * (1.0 - k as f64 / horizon as f64), 0.0))
            .collect();
        let lins = self.linearize(&anchors)?;
        match self.attempt(x0, &lins, &self.settings, None)? {
            (status, Some(sol)) => self.finish(0, lins, sol, false, status),
            (status, None) => Err(Error::Configuration(format!(
                "first FTOCP is {status:?}: the initial-feasibility assumption does not hold for this x0, horizon and constraint set"
            ))),
        }
    }

    pub fn plan_step(&self, state: &PlannerState, x: &DVector<f64>, t: f64) -> Result<PlannerState> {
        self.plan_step_with(state, x, t, &self.settings)
    }

    /// Like [`plan_step`](Self::plan_step) with explicit settings for the
    /// primary attempt (the fallback always uses the planner's settings).
    pub fn plan_step_with(
        &self,
        state: &PlannerState,
        x: &DVector<f64>,
        t: f64,
        primary: &SolverSettings,
    ) -> Result<PlannerState> {
        let index = state.index + 1;
        let t_grid = index as f64 * self.period();
        if (t - t_grid).abs() > GRID_TOL * t_grid.max(1.0) {
            return Err(Error::Precondition(format!("t = {t} is not planning instant {index} ({t_grid})")));
        }
        let lins = self.linearize(&state.next_anchors)?;
        let (primary_status, sol) = self.attempt(x, &lins, primary, Some(&state.solution))?;
        if let Some(sol) = sol {
            return self.finish(index, lins, sol, false, primary_status);
        }
        warn!("planning step {index}: primary attempt {primary_status:?}, using shifted linearizations");
        let mut fallback: Vec<_> = state.linearizations[1..].to_vec();
        fallback.push(self.origin.clone());
        match self.attempt(x, &fallback, &self.settings, Some(&state.solution))? {
            (_, Some(sol)) => self.finish(index, fallback, sol, true, primary_status),
            (status, None) => Err(Error::PlannerFailure { index, primary: primary_status, fallback: status }),
        }
    }

    /// Local time within the first segment of the current plan.
    fn local_time(&self, state: &PlannerState, t: f64) -> Result<f64> {
        let period = self.period();
        let t0 = state.index as f64 * period;
        let tol = GRID_TOL * t0.max(1.0);
        if t < t0 - tol || t > t0 + period + tol {
            return Err(Error::StalePlan { index: state.index, t });
        }
        Ok((t - t0).clamp(0.0, period))
    }

    /// x_d and ẋ_dⁿ served to the tracker at time t.
    pub fn reference(&self, state: &PlannerState, t: f64) -> Result<ReferenceSample> {
        let tau = self.local_time(state, t)?;
        state.spline.sample_in_segment(0, tau)
    }

    /// The CLF-QP input against the current plan.
    pub fn control(&self, state: &PlannerState, x: &DVector<f64>, t: f64) -> Result<f64> {
        let r = self.reference(state, t)?;
        k_clf(self.law(), &self.sys, &r, x)
    }
}

/// The tracker of one planning period as a [`FeedbackLaw`].
pub struct Tracker<'a> {
    pub planner: &'a Planner,
    pub state: &'a PlannerState,
}

impl FeedbackLaw for Tracker<'_> {
    fn input(&mut self, x: &DVector<f64>, at: StageTime) -> Result<f64> {
        self.planner.control(self.state, x, at.t)
    }

    fn reference(&self, at: StageTime) -> Option<DVector<f64>> {
        self.planner.reference(self.state, at.t).ok().map(|r| r.state)
    }

    fn lyapunov(&self, x: &DVector<f64>, at: StageTime) -> Option<f64> {
        let r = self.planner.reference(self.state, at.t).ok()?;
        Some(self.planner.law().lyapunov_value(&r, x))
    }
}

/// Flags every row against the original constraints.
pub fn mark_constraints(log: &mut TrajectoryLog, constraints: &StatePolytope, u_max: f64) {
    for r in &mut log.rows {
        r.state_ok = constraints.slack(&r.x) >= -STATE_TOL;
        r.input_ok = r.u.abs() <= u_max + INPUT_TOL;
    }
}

/// Outcome of one planning period.
#[derive(Debug, Clone)]
pub struct PeriodRecord {
    pub index: usize,
    pub fallback_used: bool,
    pub primary_status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug)]
pub struct ClosedLoopRun {
    pub log: TrajectoryLog,
    pub periods: Vec<PeriodRecord>,
    pub first_plan: FtocpSolution,
    /// Set when planning failed hard; the log stops at that instant.
    pub failure: Option<Error>,
}

/// The multi-rate loop over `periods` planning periods with `steps` RK4 steps each.
/// `observe` sees each period's plan and its log segment.
pub fn run_closed_loop(
    planner: &Planner,
    x0: &DVector<f64>,
    w: &DisturbanceSignal,
    periods: usize,
    steps: usize,
    mut observe: impl FnMut(&PlannerState, &TrajectoryLog),
) -> Result<ClosedLoopRun> {
    if periods == 0 || steps == 0 {
        return Err(Error::InvalidInput("need at least one period and one step".into()));
    }
    let period = planner.period();
    let dt = period / steps as f64;
    let mut state = planner.initialize(x0)?;
    let first_plan = state.solution.clone();
    let mut log = TrajectoryLog::default();
    let mut records = Vec::with_capacity(periods);
    let mut x = x0.clone();
    let mut failure = None;
    for i in 0..periods {
        let t0 = i as f64 * period;
        if i > 0 {
            match planner.plan_step(&state, &x, t0) {
                Ok(s) => state = s,
                Err(e @ Error::PlannerFailure { .. }) => {
                    failure = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        records.push(PeriodRecord {
            index: i,
            fallback_used: state.fallback_used,
            primary_status: state.primary_status,
            iterations: state.solution.iterations,
        });
        let mut tracker = Tracker { planner, state: &state };
        let mut chunk = integrate_closed_loop(planner.system(), &mut tracker, &x, w, (t0, t0 + period), dt)?;
        for r in &mut chunk.rows {
            r.fallback_used = state.fallback_used;
        }
        observe(&state, &chunk);
        let last = chunk.rows.pop().expect("integration logs at least one row");
        x = last.x.clone();
        log.append(chunk)?;
        if i + 1 == periods {
            log.push(last)?;
        }
    }
    if failure.is_some() {
        // Terminal sample at the failed planning instant.
        if let Some(prev) = log.rows.last().cloned() {
            let t = records.len() as f64 * period;
            let mut row = prev;
            row.t = t;
            row.x = x.clone();
            row.planner_feasible = false;
            log.push(row)?;
        }
    }
    Ok(ClosedLoopRun { log, periods: records, first_plan, failure })
}
