//! Integrator-chain plant `ẋ_i = x_{i+1}`, `ẋ_n = f(x) + g(x)u + w_n`,
//! disturbances, linearization/discretization, and closed-loop RK4.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_finite, Error, Result};
use crate::numerics::mat_exp;

type ScalarField = fn(&DVector<f64>) -> f64;
type GradientField = fn(&DVector<f64>) -> DVector<f64>;

/// Control-affine single-input system in integrator-chain form.
#[derive(Debug, Clone, Copy)]
pub struct SystemModel {
    pub name: &'static str,
    pub dim: usize,
    pub drift: ScalarField,
    pub gain: ScalarField,
    pub drift_gradient: GradientField,
    pub gain_gradient: GradientField,
}

fn zero_scalar(_: &DVector<f64>) -> f64 {
    0.0
}

fn unit_scalar(_: &DVector<f64>) -> f64 {
    1.0
}

fn zero_gradient(x: &DVector<f64>) -> DVector<f64> {
    DVector::zeros(x.len())
}

impl SystemModel {
    /// ẋ₁ = x₂, ẋ₂ = sin(x₁) + x₂³ + u.
    pub fn paper_sincube() -> Self {
        fn f(x: &DVector<f64>) -> f64 {
            x[0].sin() + x[1].powi(3)
        }
        fn df(x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0].cos(), 3.0 * x[1] * x[1]])
        }
        Self {
            name: "paper_sincube",
            dim: 2,
            drift: f,
            gain: unit_scalar,
            drift_gradient: df,
            gain_gradient: zero_gradient,
        }
    }

    /// ẋ₁ = x₂, ẋ₂ = u.
    pub fn double_integrator() -> Self {
        Self {
            name: "double_integrator",
            dim: 2,
            drift: zero_scalar,
            gain: unit_scalar,
            drift_gradient: zero_gradient,
            gain_gradient: zero_gradient,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "paper_sincube" => Ok(Self::paper_sincube()),
            "double_integrator" => Ok(Self::double_integrator()),
            other => Err(Error::Configuration(format!("unknown system '{other}'"))),
        }
    }

    pub fn f(&self, x: &DVector<f64>) -> f64 {
        (self.drift)(x)
    }

    pub fn g(&self, x: &DVector<f64>) -> f64 {
        (self.gain)(x)
    }

    /// ẋ = f(x) + g(x)u + w, with f the full chain vector field.
    pub fn field(&self, x: &DVector<f64>, u: f64, w: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        let mut dx = DVector::zeros(n);
        for i in 0..n - 1 {
            dx[i] = x[i + 1];
        }
        dx[n - 1] = self.f(x) + self.g(x) * u;
        dx + w
    }

    /// Smallest |g| over the given sample points.
    pub fn min_gain(&self, samples: &[DVector<f64>]) -> f64 {
        samples.iter().map(|x| self.g(x).abs()).fold(f64::INFINITY, f64::min)
    }
}

/// Continuous-time affine model ẋ ≈ A_c x + B_c u + C_c.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLinearization {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

pub fn continuous_linearization(
    sys: &SystemModel,
    x_bar: &DVector<f64>,
    u_bar: f64,
) -> Result<ContinuousLinearization> {
    let n = sys.dim;
    if x_bar.len() != n {
        return Err(Error::InvalidInput("anchor dimension mismatch".into()));
    }
    check_finite("anchor", x_bar.as_slice())?;
    check_finite("anchor input", &[u_bar])?;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    let grad = (sys.drift_gradient)(x_bar) + (sys.gain_gradient)(x_bar) * u_bar;
    a.set_row(n - 1, &grad.transpose());
    let mut b = DVector::zeros(n);
    b[n - 1] = sys.g(x_bar);
    let w0 = DVector::zeros(n);
    let c = sys.field(x_bar, u_bar, &w0) - &a * x_bar - &b * u_bar;
    Ok(ContinuousLinearization { a, b, c })
}

/// x_{k+1} = A x_k + B u_k + C over one period of length T.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLinearization {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub anchor_state: DVector<f64>,
    pub anchor_input: f64,
    pub period: f64,
}

impl DiscreteLinearization {
    pub fn step(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.c
    }
}

/// Exact zero-order-hold discretization through one exponential of the
/// augmented matrix [[A_c, B_c, C_c], [0, 0, 0], [0, 0, 0]]·T.
pub fn exact_discretization(
    lin: &ContinuousLinearization,
    period: f64,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidInput("period must be positive".into()));
    }
    let n = lin.a.nrows();
    let mut aug = DMatrix::zeros(n + 2, n + 2);
    aug.view_mut((0, 0), (n, n)).copy_from(&lin.a);
    aug.view_mut((0, n), (n, 1)).copy_from(&lin.b);
    aug.view_mut((0, n + 1), (n, 1)).copy_from(&lin.c);
    let e = mat_exp(&(aug * period))?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, 1)).column(0).into_owned(),
        e.view((0, n + 1), (n, 1)).column(0).into_owned(),
    ))
}

pub fn linearize_discretize(
    sys: &SystemModel,
    x_bar: &DVector<f64>,
    u_bar: f64,
    period: f64,
) -> Result<DiscreteLinearization> {
    let cl = continuous_linearization(sys, x_bar, u_bar)?;
    let (a, b, c) = exact_discretization(&cl, period)?;
    Ok(DiscreteLinearization { a, b, c, anchor_state: x_bar.clone(), anchor_input: u_bar, period })
}

/// Base frequency of the sinusoidal disturbance, Hz.
pub const SINUSOID_BASE_HZ: f64 = 0.6;
/// Hold time of the seeded uniform disturbance, s.
pub const UNIFORM_HOLD: f64 = 0.01;

/// Additive disturbance w(t) with ‖w(t)‖₂ ≤ w̄ enforced by clipping.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal {
    Zero { dim: usize },
    Sinusoid { wbar: f64, frequencies: Vec<f64>, phases: Vec<f64> },
    SeededUniform { dim: usize, wbar: f64, seed: u64, hold: f64 },
}

impl DisturbanceSignal {
    /// Per-channel sinusoids with frequency ratios √1, √2, √3, √5, √7, …
    pub fn sinusoid(dim: usize, wbar: f64) -> Self {
        const RATIOS: [f64; 8] = [1.0, 2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0];
        let frequencies = (0..dim).map(|i| SINUSOID_BASE_HZ * RATIOS[i % 8].sqrt()).collect();
        let phases = (0..dim).map(|i| 0.5 * i as f64).collect();
        Self::Sinusoid { wbar, frequencies, phases }
    }

    pub fn uniform(dim: usize, wbar: f64, seed: u64) -> Self {
        Self::SeededUniform { dim, wbar, seed, hold: UNIFORM_HOLD }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } | Self::SeededUniform { dim, .. } => *dim,
            Self::Sinusoid { frequencies, .. } => frequencies.len(),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Sinusoid { wbar, .. } | Self::SeededUniform { wbar, .. } => *wbar,
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let raw = match self {
            Self::Zero { dim } => return DVector::zeros(*dim),
            Self::Sinusoid { wbar, frequencies, phases } => {
                let amp = wbar / (frequencies.len() as f64).sqrt();
                DVector::from_iterator(
                    frequencies.len(),
                    frequencies
                        .iter()
                        .zip(phases)
                        .map(|(f, p)| amp * (2.0 * std::f64::consts::PI * f * t + p).sin()),
                )
            }
            Self::SeededUniform { dim, wbar, seed, hold } => {
                let bin = (t / hold).floor().max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(bin);
                DVector::from_fn(*dim, |_, _| wbar * rng.gen_range(-1.0..=1.0))
            }
        };
        let bound = self.bound();
        let norm = raw.norm();
        if norm > bound {
            raw * (bound / norm)
        } else {
            raw
        }
    }
}

/// Times handed to a feedback law at each RK4 stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTime {
    /// Stage evaluation time.
    pub t: f64,
    /// Start of the integration step the stage belongs to.
    pub step_start: f64,
}

/// Continuous-time state feedback evaluated at every RK4 stage.
pub trait FeedbackLaw {
    fn input(&mut self, x: &DVector<f64>, at: StageTime) -> Result<f64>;

    /// Reference state to log, if the law tracks one.
    fn reference(&self, _at: StageTime) -> Option<DVector<f64>> {
        None
    }

    /// Lyapunov value to log, if the law defines one.
    fn lyapunov(&self, _x: &DVector<f64>, _at: StageTime) -> Option<f64> {
        None
    }
}

impl<F> FeedbackLaw for F
where
    F: FnMut(&DVector<f64>, StageTime) -> Result<f64>,
{
    fn input(&mut self, x: &DVector<f64>, at: StageTime) -> Result<f64> {
        self(x, at)
    }
}

/// One logged sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: f64,
    pub reference: DVector<f64>,
    pub lyapunov: f64,
    pub state_ok: bool,
    pub input_ok: bool,
    pub planner_feasible: bool,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::Consistency("log times must increase".into()));
            }
            if row.x.len() != last.x.len() || row.reference.len() != last.reference.len() {
                return Err(Error::Consistency("log column lengths differ".into()));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn append(&mut self, other: TrajectoryLog) -> Result<()> {
        for r in other.rows {
            self.push(r)?;
        }
        Ok(())
    }
}

/// One RK4 step; the law sees stage times and the step start, the final
/// stage is evaluated at the step end (left limit for piecewise laws).
pub fn rk4_step<L: FeedbackLaw + ?Sized>(
    sys: &SystemModel,
    law: &mut L,
    w: &DisturbanceSignal,
    x: &DVector<f64>,
    t: f64,
    dt: f64,
) -> Result<(DVector<f64>, f64)> {
    let stage = |tt: f64| StageTime { t: tt, step_start: t };
    let call = |law: &mut L, xs: &DVector<f64>, tt: f64| -> Result<f64> {
        let u = law.input(xs, stage(tt))?;
        if !u.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite input at t = {tt}")));
        }
        Ok(u)
    };
    let u1 = call(law, x, t)?;
    let k1 = sys.field(x, u1, &w.eval(t));
    let x2 = x + &k1 * (0.5 * dt);
    let k2 = sys.field(&x2, call(law, &x2, t + 0.5 * dt)?, &w.eval(t + 0.5 * dt));
    let x3 = x + &k2 * (0.5 * dt);
    let k3 = sys.field(&x3, call(law, &x3, t + 0.5 * dt)?, &w.eval(t + 0.5 * dt));
    let x4 = x + &k3 * dt;
    let k4 = sys.field(&x4, call(law, &x4, t + dt)?, &w.eval(t + dt));
    Ok((x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0), u1))
}

/// Number of whole steps of length `dt` in `span`, or an error if `dt` does
/// not divide it.
pub fn step_count(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(span >= 0.0) {
        return Err(Error::InvalidInput("span and step must be positive".into()));
    }
    let r = span / dt;
    let k = r.round();
    if (r - k).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::InvalidInput(format!("step {dt} does not divide span {span}")));
    }
    Ok(k as usize)
}

fn sample_row<L: FeedbackLaw + ?Sized>(law: &mut L, x: &DVector<f64>, t: f64, u: f64) -> LogRow {
    let at = StageTime { t, step_start: t };
    LogRow {
        t,
        x: x.clone(),
        u,
        reference: law.reference(at).unwrap_or_else(|| DVector::zeros(x.len())),
        lyapunov: law.lyapunov(x, at).unwrap_or(0.0),
        state_ok: true,
        input_ok: true,
        planner_feasible: true,
        fallback_used: false,
    }
}

/// Fixed-step RK4 over `[t0, t1]`, logging every step. The logged input is
/// the one applied at the start of that step; the final row repeats the
/// law's value at t1.
pub fn integrate_closed_loop<L: FeedbackLaw + ?Sized>(
    sys: &SystemModel,
    law: &mut L,
    x0: &DVector<f64>,
    w: &DisturbanceSignal,
    span: (f64, f64),
    dt: f64,
) -> Result<TrajectoryLog> {
    let (t0, t1) = span;
    let steps = step_count(t1 - t0, dt)?;
    if x0.len() != sys.dim || w.dim() != sys.dim {
        return Err(Error::InvalidInput("state or disturbance dimension mismatch".into()));
    }
    check_finite("initial state", x0.as_slice())?;
    let mut log = TrajectoryLog::default();
    let mut x = x0.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let (next, u) = match rk4_step(sys, law, w, &x, t, dt) {
            Ok(v) => v,
            Err(e) => return Err(abort(log, t, e.to_string())),
        };
        let row = sample_row(law, &x, t, u);
        log.push(row)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(abort(log, t + dt, "state became non-finite".into()));
        }
        x = next;
    }
    let at = StageTime { t: t1, step_start: t1 - dt };
    let u_end = match law.input(&x, at) {
        Ok(u) if u.is_finite() => u,
        Ok(_) => return Err(abort(log, t1, "non-finite input".into())),
        Err(e) => return Err(abort(log, t1, e.to_string())),
    };
    let mut last = sample_row(law, &x, t1, u_end);
    last.reference = law.reference(at).unwrap_or_else(|| DVector::zeros(x.len()));
    last.lyapunov = law.lyapunov(&x, at).unwrap_or(0.0);
    log.push(last)?;
    Ok(log)
}

fn abort(log: TrajectoryLog, t: f64, reason: String) -> Error {
    Error::SimulationAborted { t, reason, log: Box::new(log) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_integrator_linearization_is_exact() {
        let sys = SystemModel::double_integrator();
        let x = DVector::from_vec(vec![0.3, -1.2]);
        let l = continuous_linearization(&sys, &x, 0.7).unwrap();
        assert_eq!(l.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(l.b, DVector::from_vec(vec![0.0, 1.0]));
        assert_eq!(l.c, DVector::zeros(2));
    }

    #[test]
    fn integrator_discretization() {
        let l = ContinuousLinearization {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DVector::from_vec(vec![0.0, 1.0]),
            c: DVector::zeros(2),
        };
        let (a, b, c) = exact_discretization(&l, 1.0).unwrap();
        assert!((a - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).amax() < 1e-14);
        assert!((b - DVector::from_vec(vec![0.5, 1.0])).amax() < 1e-14);
        assert!(c.amax() < 1e-15);
    }

    #[test]
    fn step_must_divide_span() {
        assert_eq!(step_count(0.5, 0.005).unwrap(), 100);
        assert!(step_count(0.5, 0.3).is_err());
    }

    #[test]
    fn non_finite_input_aborts_with_log() {
        let sys = SystemModel::double_integrator();
        let w = DisturbanceSignal::Zero { dim: 2 };
        let mut law = |_: &DVector<f64>, at: StageTime| Ok(if at.t > 0.055 { f64::NAN } else { 0.0 });
        let r = integrate_closed_loop(&sys, &mut law, &DVector::zeros(2), &w, (0.0, 1.0), 0.01);
        match r {
            Err(Error::SimulationAborted { log, .. }) => assert_eq!(log.len(), 5),
            other => panic!("unexpected {other:?}"),
        }
    }
}
