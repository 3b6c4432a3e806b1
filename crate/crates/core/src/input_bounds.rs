//! Envelope on the feedback-linearizing input in terms of how far the
//! reference strays from its linearization anchor, and its second-order
//! cone form.
//!
//! With σ = (‖x_d − x̄‖, |ẋ_dⁿ − f(x̄)|) the bound reads
//! |k(x, t)| ≤ ½σᵀMσ + N(x̄)ᵀσ + Γ(x̄).

use nalgebra::{DVector, Matrix2, Vector2};

use crate::bezier::{BezierSpline, ReferenceSample};
use crate::dynamics::SystemModel;
use crate::error::{check_finite, Error, Result};
use crate::numerics::{cholesky_2x2, psd_project_2x2};
use crate::tracking::{TrackingLaw, G_MIN};

#[derive(Debug, Clone, PartialEq)]
pub struct InputBoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub u_max: f64,
    /// PSD projection of [[2αβ, β], [β, 0]].
    pub m: Matrix2<f64>,
    /// √λ₁ v₁: the rank-one factor of `m`.
    pub m_factor: Vector2<f64>,
    pub ebar: f64,
    pub gain_norm: f64,
}

pub fn make_params(alpha: f64, beta: f64, u_max: f64, law: &TrackingLaw) -> Result<InputBoundParams> {
    check_finite("input-bound parameters", &[alpha, beta, u_max])?;
    if alpha < 0.0 || beta < 0.0 {
        return Err(Error::Precondition("alpha and beta must be nonnegative".into()));
    }
    if !(u_max > 0.0) {
        return Err(Error::Precondition("u_max must be positive".into()));
    }
    let raw = Matrix2::new(2.0 * alpha * beta, beta, beta, 0.0);
    let proj = psd_project_2x2(&raw)?;
    let m_factor = if proj.eigenvalue > 0.0 {
        proj.eigenvector * proj.eigenvalue.sqrt()
    } else {
        Vector2::zeros()
    };
    Ok(InputBoundParams {
        alpha,
        beta,
        u_max,
        m: proj.matrix,
        m_factor,
        ebar: law.ebar,
        gain_norm: law.gain_norm(),
    })
}

impl InputBoundParams {
    fn inv_gain(&self, sys: &SystemModel, anchor: &DVector<f64>) -> Result<f64> {
        let g = sys.g(anchor);
        if !(g.abs() >= G_MIN) {
            return Err(Error::Singularity { gain: g });
        }
        Ok(1.0 / g.abs())
    }

    /// N(x̄) = (2αβē + α|g⁻¹| + β‖K‖ē, |g⁻¹| + βē).
    pub fn n_vec(&self, sys: &SystemModel, anchor: &DVector<f64>) -> Result<Vector2<f64>> {
        let gi = self.inv_gain(sys, anchor)?;
        let (a, b, e) = (self.alpha, self.beta, self.ebar);
        Ok(Vector2::new(2.0 * a * b * e + a * gi + b * self.gain_norm * e, gi + b * e))
    }

    /// Γ(x̄) = ē(βē + |g⁻¹|)(α + ‖K‖).
    pub fn gamma_at(&self, sys: &SystemModel, anchor: &DVector<f64>) -> Result<f64> {
        let gi = self.inv_gain(sys, anchor)?;
        Ok(self.ebar * (self.beta * self.ebar + gi) * (self.alpha + self.gain_norm))
    }

    /// ½σᵀMσ + N(x̄)ᵀσ + Γ(x̄).
    pub fn fbl_bound_rhs(&self, sys: &SystemModel, anchor: &DVector<f64>, sigma: &Vector2<f64>) -> Result<f64> {
        if sigma.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::Precondition("sigma must be componentwise nonnegative".into()));
        }
        Ok(0.5 * sigma.dot(&(self.m * sigma)) + self.n_vec(sys, anchor)?.dot(sigma) + self.gamma_at(sys, anchor)?)
    }
}

/// σ(t) = (‖x_d(t) − x̄‖, |ẋ_dⁿ(t) − f(x̄)|).
pub fn sigma_profile(sys: &SystemModel, reference: &ReferenceSample, anchor: &DVector<f64>) -> Vector2<f64> {
    Vector2::new((&reference.state - anchor).norm(), (reference.top_derivative - sys.f(anchor)).abs())
}

/// σ(t) on the spline, using the anchor of the segment containing t.
pub fn sigma_on_spline(
    sys: &SystemModel,
    spline: &BezierSpline,
    anchors: &[DVector<f64>],
    t: f64,
) -> Result<Vector2<f64>> {
    let (k, tau) = spline.locate(t)?;
    let anchor = anchors
        .get(k)
        .ok_or_else(|| Error::InvalidInput(format!("no anchor for segment {k}")))?;
    Ok(sigma_profile(sys, &spline.sample_in_segment(k, tau)?, anchor))
}

/// Second-order cone form of ½sᵀMs + Nᵀs + Γ ≤ u_max with auxiliary σ:
///
/// ```text
/// ‖(Lᵀs, σ)‖ ≤ σ + ½,    σ + ¼ ≤ u_max − Nᵀs − Γ,    L Lᵀ = ½M.
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SocBlock {
    /// Lower-triangular L with L Lᵀ = ½M.
    pub factor: Matrix2<f64>,
    pub m: Matrix2<f64>,
    pub n: Vector2<f64>,
    pub gamma: f64,
    pub u_max: f64,
}

pub fn soc_reformulate(params: &InputBoundParams, sys: &SystemModel, anchor: &DVector<f64>) -> Result<SocBlock> {
    Ok(SocBlock {
        factor: cholesky_2x2(&(params.m * 0.5))?,
        m: params.m,
        n: params.n_vec(sys, anchor)?,
        gamma: params.gamma_at(sys, anchor)?,
        u_max: params.u_max,
    })
}

impl SocBlock {
    pub fn quadratic_lhs(&self, s: &Vector2<f64>) -> f64 {
        0.5 * s.dot(&(self.m * s)) + self.n.dot(s) + self.gamma
    }

    /// Right-hand side of the linear row, u_max − Nᵀs − Γ − ¼.
    fn linear_cap(&self, s: &Vector2<f64>) -> f64 {
        self.u_max - self.n.dot(s) - self.gamma - 0.25
    }

    pub fn satisfied(&self, s: &Vector2<f64>, sigma: f64, tol: f64) -> bool {
        let w = self.factor.transpose() * s;
        let cone = (w.norm_squared() + sigma * sigma).sqrt() - (sigma + 0.5);
        cone <= tol && sigma - self.linear_cap(s) <= tol
    }

    /// Feasible σ values for fixed s, if any.
    pub fn sigma_interval(&self, s: &Vector2<f64>) -> Option<(f64, f64)> {
        let lo = (self.factor.transpose() * s).norm_squared() - 0.25;
        let hi = self.linear_cap(s);
        (lo <= hi).then_some((lo, hi))
    }

    /// The constructive σ: the largest value allowed by the linear row.
    pub fn witness(&self, s: &Vector2<f64>) -> f64 {
        self.linear_cap(s)
    }
}
