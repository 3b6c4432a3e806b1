//! Bernstein bases, Bézier derivative/boundary matrices and piecewise
//! splines interpolating state knots of an integrator chain.
//!
//! A state in ℝⁿ stacks a scalar output and its first n−1 derivatives, so a
//! segment of order p = 2n−1 has exactly enough freedom to match both
//! endpoint states.

use nalgebra::{DMatrix, DVector};

use crate::conic::{AffineExpr, ConicProgram, SolveStatus, SolverSettings};
use crate::error::{check_finite, Error, Result};

/// Largest accepted condition number of the boundary matrix.
pub const MAX_BOUNDARY_CONDITION: f64 = 1e12;

/// Relative slack allowed when locating a time inside a span.
const TIME_TOL: f64 = 1e-9;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinBasis {
    order: usize,
    duration: f64,
}

impl BernsteinBasis {
    pub fn new(order: usize, duration: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput("Bernstein order must be ≥ 1".into()));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidInput("Bernstein duration must be positive".into()));
        }
        Ok(Self { order, duration })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// z(τ): the p+1 basis polynomials at τ ∈ [0, T].
    pub fn eval(&self, tau: f64) -> Result<DVector<f64>> {
        let t = self.duration;
        if !(tau >= -TIME_TOL * t && tau <= t * (1.0 + TIME_TOL)) {
            return Err(Error::Range { what: "tau", value: tau, lo: 0.0, hi: t });
        }
        let s = (tau / t).clamp(0.0, 1.0);
        let p = self.order;
        Ok(DVector::from_fn(p + 1, |i, _| {
            binomial(p, i) * s.powi(i as i32) * (1.0 - s).powi((p - i) as i32)
        }))
    }
}

/// H such that r⁽¹⁾(τ) = ξ₀ᵀ H z(τ) / T for any order-p curve: the hodograph
/// (order p−1) degree-elevated back to order p.
pub fn derivative_matrix(order: usize) -> DMatrix<f64> {
    let p = order.max(1);
    let pf = p as f64;
    // Hodograph control points d = S ξ, S is p × (p+1).
    let mut s = DMatrix::zeros(p, p + 1);
    for i in 0..p {
        s[(i, i)] = -pf;
        s[(i, i + 1)] = pf;
    }
    // Degree elevation, (p+1) × p.
    let mut r = DMatrix::zeros(p + 1, p);
    for i in 0..p {
        r[(i, i)] = (pf - i as f64) / pf;
        r[(i + 1, i)] = (i + 1) as f64 / pf;
    }
    (r * s).transpose()
}

/// D = [D₀ D₁] with columns Hʲ z(0)/Tʲ and Hʲ z(T)/Tʲ, j = 0..n−1, so that
/// ξ₀ᵀ D = [x₀ᵀ x₁ᵀ].
pub fn boundary_matrix(n: usize, period: f64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("state dimension must be ≥ 1".into()));
    }
    let basis = BernsteinBasis::new(2 * n - 1, period)?;
    let h = derivative_matrix(2 * n - 1);
    let z0 = basis.eval(0.0)?;
    let z1 = basis.eval(period)?;
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    let mut hj = DMatrix::identity(2 * n, 2 * n);
    for j in 0..n {
        let scale = period.powi(-(j as i32));
        d.set_column(j, &(&hj * &z0 * scale));
        d.set_column(n + j, &(&hj * &z1 * scale));
        hj = &hj * &h;
    }
    let sv = d.singular_values();
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > MAX_BOUNDARY_CONDITION {
        return Err(Error::Numerical(format!("boundary matrix condition {cond:e} too large")));
    }
    Ok(d)
}

/// Linear maps from stacked endpoint states [x_k; x_{k+1}] to the control
/// points of every derivative order 0..=n, for one (n, T) pair.
#[derive(Debug, Clone)]
pub struct SegmentMaps {
    n: usize,
    period: f64,
    basis: BernsteinBasis,
    /// `maps[j]` is (Hʲ)ᵀ D⁻ᵀ / Tʲ.
    maps: Vec<DMatrix<f64>>,
}

impl SegmentMaps {
    pub fn new(n: usize, period: f64) -> Result<Self> {
        let d = boundary_matrix(n, period)?;
        let d_inv_t = d
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("boundary matrix is singular".into()))?;
        let ht = derivative_matrix(2 * n - 1).transpose();
        let mut maps = Vec::with_capacity(n + 1);
        let mut m = d_inv_t;
        for _ in 0..=n {
            maps.push(m.clone());
            m = &ht * m / period;
        }
        Ok(Self { n, period, basis: BernsteinBasis::new(2 * n - 1, period)?, maps })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn basis(&self) -> &BernsteinBasis {
        &self.basis
    }

    /// Map from [x_k; x_{k+1}] to ξ_j.
    pub fn derivative_map(&self, j: usize) -> &DMatrix<f64> {
        &self.maps[j]
    }

    pub fn segment(&self, x0: &DVector<f64>, x1: &DVector<f64>) -> Result<BezierSegment> {
        if x0.len() != self.n || x1.len() != self.n {
            return Err(Error::InvalidInput("knot dimension mismatch".into()));
        }
        let w = DVector::from_iterator(2 * self.n, x0.iter().chain(x1.iter()).copied());
        Ok(BezierSegment {
            basis: self.basis,
            xi: self.maps.iter().map(|m| m * &w).collect(),
        })
    }
}

/// One order-(2n−1) segment together with its derivative control points.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierSegment {
    basis: BernsteinBasis,
    /// ξ_j for j = 0..=n.
    xi: Vec<DVector<f64>>,
}

impl BezierSegment {
    pub fn dim(&self) -> usize {
        self.xi.len() - 1
    }

    pub fn xi0(&self) -> &DVector<f64> {
        &self.xi[0]
    }

    /// Control points of the j-th derivative curve, j ≤ n.
    pub fn derivative_points(&self, j: usize) -> &DVector<f64> {
        &self.xi[j]
    }

    pub fn period(&self) -> f64 {
        self.basis.duration()
    }

    /// r⁽ʲ⁾(τ).
    pub fn derivative(&self, j: usize, tau: f64) -> Result<f64> {
        if j >= self.xi.len() {
            return Err(Error::InvalidInput(format!("derivative order {j} exceeds n")));
        }
        Ok(self.xi[j].dot(&self.basis.eval(tau)?))
    }

    /// Stacked state (r, r⁽¹⁾, …, r⁽ⁿ⁻¹⁾) at τ.
    pub fn state(&self, tau: f64) -> Result<DVector<f64>> {
        let z = self.basis.eval(tau)?;
        Ok(DVector::from_fn(self.dim(), |j, _| self.xi[j].dot(&z)))
    }

    pub fn top_derivative(&self, tau: f64) -> Result<f64> {
        self.derivative(self.dim(), tau)
    }

    pub fn spatial_points(&self) -> SpatialControlPoints {
        let n = self.dim();
        let zeta = (0..2 * n)
            .map(|i| DVector::from_fn(n, |j, _| self.xi[j][i]))
            .collect();
        SpatialControlPoints { zeta, xi_n: self.xi[n].iter().copied().collect() }
    }
}

/// ζ_i ∈ ℝⁿ (state-space control points) and the scalar n-th derivative
/// control points of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialControlPoints {
    pub zeta: Vec<DVector<f64>>,
    pub xi_n: Vec<f64>,
}

impl SpatialControlPoints {
    /// sup_i ‖ζ_i − x‖.
    pub fn max_distance(&self, x: &DVector<f64>) -> f64 {
        self.zeta.iter().map(|z| (z - x).norm()).fold(0.0, f64::max)
    }

    /// sup_i |ξ_{n,i} − c|.
    pub fn max_top_deviation(&self, c: f64) -> f64 {
        self.xi_n.iter().map(|v| (v - c).abs()).fold(0.0, f64::max)
    }
}

/// Piecewise Bézier reference over [t_start, t_start + N·T].
#[derive(Debug, Clone, PartialEq)]
pub struct BezierSpline {
    t_start: f64,
    knots: Vec<DVector<f64>>,
    segments: Vec<BezierSegment>,
}

impl BezierSpline {
    pub fn from_knots(knots: &[DVector<f64>], period: f64, t_start: f64) -> Result<Self> {
        let n = knots.first().map(|k| k.len()).unwrap_or(0);
        if n == 0 {
            return Err(Error::InvalidInput("knots must be non-empty vectors".into()));
        }
        Self::with_maps(&SegmentMaps::new(n, period)?, knots, t_start)
    }

    pub fn with_maps(maps: &SegmentMaps, knots: &[DVector<f64>], t_start: f64) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidInput("a spline needs at least two knots".into()));
        }
        if !t_start.is_finite() {
            return Err(Error::InvalidInput("spline start time must be finite".into()));
        }
        for k in knots {
            if k.len() != maps.dim() {
                return Err(Error::InvalidInput("inconsistent knot dimensions".into()));
            }
            check_finite("knot", k.as_slice())?;
        }
        let segments = knots
            .windows(2)
            .map(|w| maps.segment(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { t_start, knots: knots.to_vec(), segments })
    }

    pub fn dim(&self) -> usize {
        self.knots[0].len()
    }

    pub fn period(&self) -> f64 {
        self.segments[0].period()
    }

    pub fn horizon(&self) -> usize {
        self.segments.len()
    }

    pub fn knots(&self) -> &[DVector<f64>] {
        &self.knots
    }

    pub fn segments(&self) -> &[BezierSegment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.t_start
    }

    pub fn end(&self) -> f64 {
        self.t_start + self.horizon() as f64 * self.period()
    }

    /// Segment index and local time for t; right-continuous at knots, the
    /// final time maps to τ = T of the last segment.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let period = self.period();
        let span = self.end() - self.t_start;
        let slack = TIME_TOL * span.max(1.0);
        if !(t >= self.t_start - slack && t <= self.end() + slack) {
            return Err(Error::Range { what: "t", value: t, lo: self.t_start, hi: self.end() });
        }
        let s = (t - self.t_start) / period;
        let k = ((s + TIME_TOL).floor().max(0.0) as usize).min(self.horizon() - 1);
        let tau = (t - self.t_start - k as f64 * period).clamp(0.0, period);
        Ok((k, tau))
    }

    /// x_d(t).
    pub fn state(&self, t: f64) -> Result<DVector<f64>> {
        let (k, tau) = self.locate(t)?;
        self.segments[k].state(tau)
    }

    /// r⁽ʲ⁾(t) for j ≤ n.
    pub fn derivative(&self, t: f64, j: usize) -> Result<f64> {
        let (k, tau) = self.locate(t)?;
        self.segments[k].derivative(j, tau)
    }

    /// ẋ_dⁿ(t) = r⁽ⁿ⁾(t).
    pub fn top_derivative(&self, t: f64) -> Result<f64> {
        self.derivative(t, self.dim())
    }

    /// Reference sample from segment k at local time τ, bypassing the
    /// right-continuous lookup (used for left limits at segment ends).
    pub fn sample_in_segment(&self, k: usize, tau: f64) -> Result<ReferenceSample> {
        let seg = self
            .segments
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("segment {k} out of range")))?;
        Ok(ReferenceSample { state: seg.state(tau)?, top_derivative: seg.top_derivative(tau)? })
    }

    pub fn sample(&self, t: f64) -> Result<ReferenceSample> {
        let (k, tau) = self.locate(t)?;
        self.sample_in_segment(k, tau)
    }

    pub fn spatial_points(&self, k: usize) -> SpatialControlPoints {
        self.segments[k].spatial_points()
    }
}

/// Reference state x_d and its n-th derivative at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub state: DVector<f64>,
    pub top_derivative: f64,
}

impl ReferenceSample {
    pub fn zero(n: usize) -> Self {
        Self { state: DVector::zeros(n), top_derivative: 0.0 }
    }
}

/// Signed membership slack of `p` in conv(points): ≥ 0 inside, < 0 outside.
///
/// In the plane this is the minimum signed edge distance of the exact hull
/// (or minus the distance to a degenerate hull). Other dimensions solve a
/// small distance program and return minus the distance.
pub fn hull_slack(points: &[DVector<f64>], p: &DVector<f64>) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    if points.iter().any(|q| q.len() != p.len()) {
        return Err(Error::InvalidInput("point dimension mismatch".into()));
    }
    if p.len() == 2 {
        Ok(planar_hull_slack(points, p))
    } else {
        hull_distance_program(points, p).map(|d| -d)
    }
}

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn segment_distance(a: Pt, b: Pt, p: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - s * dx).powi(2) + (p.1 - a.1 - s * dy).powi(2)).sqrt()
}

fn planar_hull_slack(points: &[DVector<f64>], p: &DVector<f64>) -> f64 {
    let mut pts: Vec<Pt> = points.iter().map(|q| (q[0], q[1])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    // Andrew's monotone chain, counter-clockwise, collinear points dropped.
    let mut hull: Vec<Pt> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Pt>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let target = (p[0], p[1]);
    match hull.len() {
        0 => -segment_distance(pts[0], pts[0], target),
        1 | 2 => {
            let (a, b) = (hull[0], *hull.last().unwrap());
            -segment_distance(a, b, target)
        }
        m => (0..m)
            .map(|i| {
                let (a, b) = (hull[i], hull[(i + 1) % m]);
                let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
                cross(a, b, target) / len
            })
            .fold(f64::INFINITY, f64::min),
    }
}

/// min ‖Σλ_i p_i − p‖ over the simplex.
fn hull_distance_program(points: &[DVector<f64>], p: &DVector<f64>) -> Result<f64> {
    let m = points.len();
    let n = p.len();
    // Variables: λ_0..λ_{m-1}, t.
    let mut prog = ConicProgram::new(m + 1);
    prog.set_linear(m, 1.0);
    let mut sum = AffineExpr::constant(-1.0);
    for i in 0..m {
        prog.add_nonneg(AffineExpr::var(i, 1.0));
        sum.push(i, 1.0);
    }
    prog.add_zero(vec![sum]);
    let rows = (0..n)
        .map(|d| {
            let mut e = AffineExpr::constant(-p[d]);
            for (i, q) in points.iter().enumerate() {
                e.push(i, q[d]);
            }
            e
        })
        .collect();
    prog.add_soc(AffineExpr::var(m, 1.0), rows);
    let res = prog.solve(&SolverSettings::default())?;
    if res.status != SolveStatus::Optimal {
        return Err(Error::Numerical(format!("hull distance program: {:?}", res.status)));
    }
    Ok(res.x[m].max(0.0))
}
