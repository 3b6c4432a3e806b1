//! Low-level tracking: pole-placement gain, Lyapunov pair, tube constants,
//! feedback-linearizing / feed-forward / CLF-QP laws, and state polytopes
//! tightened by the tube.

use nalgebra::{DMatrix, DVector};

use crate::bezier::ReferenceSample;
use crate::conic::{AffineExpr, ConicProgram, SolveStatus, SolverSettings};
use crate::dynamics::SystemModel;
use crate::error::{check_finite, Error, Result};
use crate::numerics::{ellipsoid_support, solve_lyapunov, sym_eigenvalues, symmetrize};

/// Singularity guard on |g(x)|.
pub const G_MIN: f64 = 1e-8;

/// Allowed CLF constraint residual when the constraint does not depend on u.
const CLF_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingLaw {
    /// K, with ė = F e and F the companion matrix of (K₁, …, K_n).
    pub gain: DVector<f64>,
    pub closed_loop: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// 4 λ_max(P)³ / λ_min(Q)².
    pub gamma: f64,
    /// √(γ w̄² / λ_min(P)), the worst-case error norm inside the tube.
    pub ebar: f64,
    pub wbar: f64,
    pub lambda_min_q: f64,
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
}

/// Places the eigenvalues of the companion-form F at `poles` and derives
/// the Lyapunov pair and tube constants.
pub fn design_law(poles: &[f64], q: &DMatrix<f64>, wbar: f64) -> Result<TrackingLaw> {
    let n = poles.len();
    if n == 0 {
        return Err(Error::InvalidInput("at least one pole is required".into()));
    }
    check_finite("poles", poles)?;
    if poles.iter().any(|&p| p >= 0.0) {
        return Err(Error::Precondition("poles must be strictly negative".into()));
    }
    if !(wbar >= 0.0) || !wbar.is_finite() {
        return Err(Error::Range { what: "wbar", value: wbar, lo: 0.0, hi: f64::INFINITY });
    }
    if q.shape() != (n, n) {
        return Err(Error::InvalidInput("Q must be n×n".into()));
    }
    let q = symmetrize(q, "Q")?;
    if q.clone().cholesky().is_none() {
        return Err(Error::Precondition("Q is not positive definite".into()));
    }

    // Monic Π(s − p_j); coeffs[i] multiplies s^i.
    let mut coeffs = vec![1.0];
    for &p in poles {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= p * c;
        }
        coeffs = next;
    }
    let gain = DVector::from_fn(n, |i, _| coeffs[i]);
    let mut f = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        f[(i, i + 1)] = 1.0;
    }
    f.set_row(n - 1, &(-gain.transpose()));

    let p = solve_lyapunov(&f, &q)?;
    let ev_p = sym_eigenvalues(&p);
    let ev_q = sym_eigenvalues(&q);
    let (lambda_min_p, lambda_max_p, lambda_min_q) = (ev_p[0], ev_p[n - 1], ev_q[0]);
    let gamma = 4.0 * lambda_max_p.powi(3) / (lambda_min_q * lambda_min_q);
    let ebar = (gamma * wbar * wbar / lambda_min_p).sqrt();
    Ok(TrackingLaw { gain, closed_loop: f, p, q, gamma, ebar, wbar, lambda_min_q, lambda_min_p, lambda_max_p })
}

impl TrackingLaw {
    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    /// Tube level γ w̄².
    pub fn level(&self) -> f64 {
        self.gamma * self.wbar * self.wbar
    }

    pub fn gain_norm(&self) -> f64 {
        self.gain.norm()
    }

    pub fn lyapunov(&self, e: &DVector<f64>) -> f64 {
        e.dot(&(&self.p * e))
    }

    /// V(x, t) = eᵀPe with e = x − x_d(t).
    pub fn lyapunov_value(&self, reference: &ReferenceSample, x: &DVector<f64>) -> f64 {
        self.lyapunov(&(x - &reference.state))
    }

    pub fn in_tube(&self, reference: &ReferenceSample, x: &DVector<f64>) -> bool {
        self.lyapunov_value(reference, x) <= self.level()
    }

    /// Re-derives the Lyapunov residual and tube constants.
    pub fn verify(&self) -> Result<()> {
        let f = &self.closed_loop;
        let res = f.transpose() * &self.p + &self.p * f + &self.q;
        if res.norm() > 1e-10 * self.q.norm() {
            return Err(Error::Consistency("Lyapunov residual too large".into()));
        }
        let gamma = 4.0 * self.lambda_max_p.powi(3) / self.lambda_min_q.powi(2);
        let ebar = (gamma * self.wbar * self.wbar / self.lambda_min_p).sqrt();
        if (gamma - self.gamma).abs() > 1e-12 * gamma || (ebar - self.ebar).abs() > 1e-12 * ebar.max(1e-300) {
            return Err(Error::Consistency("tube constants out of date".into()));
        }
        Ok(())
    }
}

fn checked_gain(sys: &SystemModel, x: &DVector<f64>) -> Result<f64> {
    let g = sys.g(x);
    if !(g.abs() >= G_MIN) {
        return Err(Error::Singularity { gain: g });
    }
    Ok(g)
}

/// F_{x_d}(x, t) = f(x) − ẋ_dⁿ(t).
fn tracking_drift(sys: &SystemModel, reference: &ReferenceSample, x: &DVector<f64>) -> f64 {
    sys.f(x) - reference.top_derivative
}

/// Input-free part of ė: (e₂, …, e_n, f(x) − ẋ_dⁿ).
fn error_drift(sys: &SystemModel, reference: &ReferenceSample, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let e = x - &reference.state;
    let mut out = DVector::zeros(n);
    for i in 0..n - 1 {
        out[i] = e[i + 1];
    }
    out[n - 1] = tracking_drift(sys, reference, x);
    out
}

/// Feedback-linearizing law g⁻¹(−F_{x_d} − Kᵀe): makes ė = F e exactly.
pub fn k_fbl(law: &TrackingLaw, sys: &SystemModel, reference: &ReferenceSample, x: &DVector<f64>) -> Result<f64> {
    let g = checked_gain(sys, x)?;
    let e = x - &reference.state;
    Ok((-tracking_drift(sys, reference, x) - law.gain.dot(&e)) / g)
}

/// Feed-forward −g⁻¹ F_{x_d}.
pub fn k_ff(sys: &SystemModel, reference: &ReferenceSample, x: &DVector<f64>) -> Result<f64> {
    let g = checked_gain(sys, x)?;
    Ok(-tracking_drift(sys, reference, x) / g)
}

/// Pieces of the CLF constraint a·u ≤ b.
fn clf_constraint(law: &TrackingLaw, sys: &SystemModel, reference: &ReferenceSample, x: &DVector<f64>) -> (f64, f64) {
    let n = x.len();
    let e = x - &reference.state;
    let grad = &law.p * &e * 2.0;
    let a = grad[n - 1] * sys.g(x);
    let b = -law.lambda_min_q * e.norm_squared() - grad.dot(&error_drift(sys, reference, x));
    (a, b)
}

/// ∇V·(f_{x_d} + g u) + λ_min(Q)‖e‖²; nonpositive when u satisfies the CLF
/// decrease constraint.
pub fn clf_residual(
    law: &TrackingLaw,
    sys: &SystemModel,
    reference: &ReferenceSample,
    x: &DVector<f64>,
    u: f64,
) -> f64 {
    let (a, b) = clf_constraint(law, sys, reference, x);
    a * u - b
}

/// Closed-form CLF-QP: the input closest to k_ff satisfying the decrease
/// constraint.
pub fn k_clf(law: &TrackingLaw, sys: &SystemModel, reference: &ReferenceSample, x: &DVector<f64>) -> Result<f64> {
    let ff = k_ff(sys, reference, x)?;
    let (a, b) = clf_constraint(law, sys, reference, x);
    let scale = 1.0 + b.abs() + law.lambda_min_q * (x - &reference.state).norm_squared();
    if a.abs() <= f64::EPSILON * scale {
        if b < -CLF_RESIDUAL_TOL * scale {
            return Err(Error::Consistency(format!("CLF constraint infeasible with a = 0 (b = {b:e})")));
        }
        return Ok(ff);
    }
    if a * ff <= b {
        Ok(ff)
    } else {
        Ok(b / a)
    }
}

/// The same CLF-QP solved as a generic conic program (for cross-checks).
pub fn k_clf_conic(
    law: &TrackingLaw,
    sys: &SystemModel,
    reference: &ReferenceSample,
    x: &DVector<f64>,
) -> Result<f64> {
    let ff = k_ff(sys, reference, x)?;
    let (a, b) = clf_constraint(law, sys, reference, x);
    let mut prog = ConicProgram::new(1);
    prog.add_quadratic(0, 0, 1.0);
    prog.set_linear(0, -ff);
    prog.add_nonneg(AffineExpr { terms: vec![(0, -a)], constant: b });
    // Tight tolerances: this is an accuracy oracle, not a hot path.
    let settings = SolverSettings { eps_abs: 1e-12, eps_rel: 1e-12, ..SolverSettings::default() };
    let res = prog.solve(&settings)?;
    if res.status != SolveStatus::Optimal {
        return Err(Error::Numerical(format!("CLF-QP solve: {:?}", res.status)));
    }
    Ok(res.x[0])
}

/// X = { x : L_jᵀx ≤ ℓ_j } with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePolytope {
    rows: Vec<DVector<f64>>,
    offsets: Vec<f64>,
}

impl StatePolytope {
    /// Normalizes rows; requires the origin strictly inside and the set bounded.
    pub fn new(rows: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        let poly = Self::normalized(rows, offsets)?;
        if let Some(j) = poly.offsets.iter().position(|&l| !(l > 0.0)) {
            return Err(Error::Precondition(format!("origin is not strictly inside row {j}")));
        }
        poly.check_bounded()?;
        Ok(poly)
    }

    /// Axis-aligned box lo ≤ x ≤ hi (lo < 0 < hi).
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n {
            return Err(Error::InvalidInput("box bounds differ in length".into()));
        }
        let mut rows = Vec::new();
        let mut offsets = Vec::new();
        for i in 0..n {
            let mut r = DVector::zeros(n);
            r[i] = 1.0;
            rows.push(r.clone());
            offsets.push(hi[i]);
            rows.push(-r);
            offsets.push(-lo[i]);
        }
        Self::new(rows, offsets)
    }

    fn normalized(rows: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || rows.len() != offsets.len() {
            return Err(Error::InvalidInput("polytope needs matching rows and offsets".into()));
        }
        let n = rows[0].len();
        let mut out_rows = Vec::with_capacity(rows.len());
        let mut out_offsets = Vec::with_capacity(rows.len());
        for (r, l) in rows.into_iter().zip(offsets) {
            if r.len() != n {
                return Err(Error::InvalidInput("polytope rows differ in length".into()));
            }
            check_finite("polytope row", r.as_slice())?;
            check_finite("polytope offset", &[l])?;
            let norm = r.norm();
            if norm == 0.0 {
                return Err(Error::InvalidInput("zero polytope row".into()));
            }
            out_rows.push(r / norm);
            out_offsets.push(l / norm);
        }
        Ok(Self { rows: out_rows, offsets: out_offsets })
    }

    /// Bounded iff every ±e_i is a nonnegative combination of the rows.
    fn check_bounded(&self) -> Result<()> {
        let n = self.dim();
        let q = self.rows.len();
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut prog = ConicProgram::new(q);
                for j in 0..q {
                    prog.add_nonneg(AffineExpr::var(j, 1.0));
                }
                let eqs = (0..n)
                    .map(|d| {
                        let mut e = AffineExpr::constant(if d == i { -sign } else { 0.0 });
                        for (j, r) in self.rows.iter().enumerate() {
                            e.push(j, r[d]);
                        }
                        e
                    })
                    .collect();
                prog.add_zero(eqs);
                match prog.solve(&SolverSettings::default())?.status {
                    SolveStatus::Optimal => {}
                    SolveStatus::PrimalInfeasible => {
                        return Err(Error::Precondition(format!("polytope is unbounded along ±x{}", i + 1)))
                    }
                    SolveStatus::IterationLimit => {
                        return Err(Error::Numerical("polytope boundedness check did not converge".into()))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// min_j (ℓ_j − L_jᵀx); nonnegative iff x ∈ X.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(r, l)| l - r.dot(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.slack(x) >= 0.0
    }
}

/// X ⊖ E: offsets reduced by the tube's support function.
pub fn tighten_polytope(poly: &StatePolytope, law: &TrackingLaw) -> Result<StatePolytope> {
    if poly.dim() != law.dim() {
        return Err(Error::InvalidInput("polytope and law dimensions differ".into()));
    }
    let level = law.level();
    let mut offsets = Vec::with_capacity(poly.offsets.len());
    for (j, (r, l)) in poly.rows.iter().zip(&poly.offsets).enumerate() {
        let tightened = l - ellipsoid_support(r, &law.p, level)?;
        if !(tightened > 0.0) {
            return Err(Error::Configuration(format!(
                "tube does not fit in the state constraints: row {j} tightened to {tightened:e} (origin must stay inside X ⊖ E)"
            )));
        }
        offsets.push(tightened);
    }
    Ok(StatePolytope { rows: poly.rows.clone(), offsets })
}
