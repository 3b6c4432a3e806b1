//! The planner's finite-time optimal control problem as a conic program.
//!
//! Decision variables, in order: knots x_0..x_N, inputs u_0..u_{N−1},
//! slacks s_k ∈ ℝ², and the auxiliary σ_k of the input-bound cone. The
//! Bézier control points are linear in consecutive knots and are
//! substituted directly into the hull and slack rows.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::bezier::{boundary_matrix, BezierSpline, SegmentMaps};
use crate::conic::{AffineExpr, ConicProgram, SolveResult, SolveStatus, WarmStart};
use crate::dynamics::{DiscreteLinearization, SystemModel};
use crate::error::{check_finite, Error, Result};
use crate::input_bounds::{soc_reformulate, InputBoundParams};
use crate::numerics::symmetrize;
use crate::tracking::{StatePolytope, TrackingLaw};

/// Tolerance of the knot-reproduction check in [`Ftocp::extract`].
const EXTRACT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub state: DMatrix<f64>,
    pub input: f64,
    pub terminal: DMatrix<f64>,
}

impl CostWeights {
    /// W_x = I, w_u = 0.1, W_f = 10·I.
    pub fn default_for(n: usize) -> Self {
        Self { state: DMatrix::identity(n, n), input: 0.1, terminal: DMatrix::identity(n, n) * 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtocpConfig {
    pub horizon: usize,
    pub period: f64,
    pub weights: CostWeights,
    /// X ⊖ E.
    pub tightened: StatePolytope,
    pub params: InputBoundParams,
    pub law: TrackingLaw,
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let m = symmetrize(m, what)?;
    if m.clone().symmetric_eigen().eigenvalues.min() < -1e-12 {
        return Err(Error::Precondition(format!("{what} is not positive semidefinite")));
    }
    Ok(m)
}

impl FtocpConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.law.dim();
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be ≥ 1".into()));
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::InvalidInput("period must be positive".into()));
        }
        if self.weights.state.shape() != (n, n) || self.weights.terminal.shape() != (n, n) {
            return Err(Error::InvalidInput("cost weights must be n×n".into()));
        }
        check_psd(&self.weights.state, "state weight")?;
        check_psd(&self.weights.terminal, "terminal weight")?;
        if !(self.weights.input >= 0.0) {
            return Err(Error::Precondition("input weight must be nonnegative".into()));
        }
        if self.tightened.dim() != n {
            return Err(Error::InvalidInput("polytope dimension differs from the law".into()));
        }
        if !self.tightened.contains(&DVector::zeros(n)) {
            return Err(Error::Configuration("origin is outside the tightened constraints".into()));
        }
        Ok(())
    }
}

/// Variable offsets of one FTOCP instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn state(&self, k: usize) -> usize {
        k * self.n
    }

    pub fn input(&self, k: usize) -> usize {
        (self.horizon + 1) * self.n + k
    }

    pub fn slack(&self, k: usize) -> usize {
        (self.horizon + 1) * self.n + self.horizon + 2 * k
    }

    pub fn sigma(&self, k: usize) -> usize {
        (self.horizon + 1) * self.n + 3 * self.horizon + k
    }

    pub fn num_vars(&self) -> usize {
        (self.horizon + 1) * self.n + 4 * self.horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtocpSolution {
    pub knots: Vec<DVector<f64>>,
    pub inputs: Vec<f64>,
    pub slacks: Vec<Vector2<f64>>,
    pub sigmas: Vec<f64>,
    /// ξ₀ per segment.
    pub control_points: Vec<DVector<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Raw primal/dual vectors, reused for warm starts.
    pub raw_x: DVector<f64>,
    pub raw_y: DVector<f64>,
}

impl FtocpSolution {
    /// max_k ‖x_{k+1} − x_k‖.
    pub fn max_knot_spacing(&self) -> f64 {
        self.knots.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max)
    }
}

/// FTOCP builder for a fixed configuration.
#[derive(Debug, Clone)]
pub struct Ftocp {
    config: FtocpConfig,
    maps: SegmentMaps,
    boundary: DMatrix<f64>,
    /// Upper-triangular R with RᵀR = P.
    ellipsoid_root: DMatrix<f64>,
    layout: Layout,
}

impl Ftocp {
    pub fn new(config: FtocpConfig) -> Result<Self> {
        config.validate()?;
        let n = config.law.dim();
        let maps = SegmentMaps::new(n, config.period)?;
        let boundary = boundary_matrix(n, config.period)?;
        let ellipsoid_root = config
            .law
            .p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Precondition("P is not positive definite".into()))?
            .l()
            .transpose();
        let layout = Layout { n, horizon: config.horizon };
        Ok(Self { config, maps, boundary, ellipsoid_root, layout })
    }

    pub fn config(&self) -> &FtocpConfig {
        &self.config
    }

    pub fn maps(&self) -> &SegmentMaps {
        &self.maps
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Control-point coordinate ξ_{j,i} of segment k as an affine expression.
    fn control_point(&self, k: usize, j: usize, i: usize) -> AffineExpr {
        let n = self.layout.n;
        let g = self.maps.derivative_map(j);
        let mut e = AffineExpr::default();
        for m in 0..n {
            e.push(self.layout.state(k) + m, g[(i, m)]);
            e.push(self.layout.state(k + 1) + m, g[(i, n + m)]);
        }
        e
    }

    /// Assembles the program for the measured state and one linearization
    /// per stage; each linearization's anchor also anchors that stage's
    /// slack rows.
    pub fn build(
        &self,
        sys: &SystemModel,
        x_meas: &DVector<f64>,
        lins: &[DiscreteLinearization],
    ) -> Result<ConicProgram> {
        let cfg = &self.config;
        let lay = self.layout;
        let (n, horizon) = (lay.n, lay.horizon);
        if sys.dim != n || x_meas.len() != n {
            return Err(Error::InvalidInput("state dimension mismatch".into()));
        }
        check_finite("measured state", x_meas.as_slice())?;
        if lins.len() != horizon {
            return Err(Error::InvalidInput(format!("expected {horizon} linearizations, got {}", lins.len())));
        }
        for l in lins {
            if l.a.shape() != (n, n) || l.b.len() != n || l.c.len() != n || l.anchor_state.len() != n {
                return Err(Error::InvalidInput("linearization dimension mismatch".into()));
            }
        }

        let mut prog = ConicProgram::new(lay.num_vars());

        // Objective.
        let w = &cfg.weights;
        for k in 0..=horizon {
            let wk = if k < horizon { &w.state } else { &w.terminal };
            for a in 0..n {
                for b in 0..=a {
                    let v = 0.5 * (wk[(a, b)] + wk[(b, a)]);
                    if v != 0.0 {
                        let (ia, ib) = (lay.state(k) + a, lay.state(k) + b);
                        prog.add_quadratic(ia, ib, 2.0 * v);
                    }
                }
            }
        }
        for k in 0..horizon {
            prog.add_quadratic(lay.input(k), lay.input(k), 2.0 * w.input);
        }

        // Linearized dynamics.
        for (k, lin) in lins.iter().enumerate() {
            let rows = (0..n)
                .map(|i| {
                    let mut e = AffineExpr::constant(-lin.c[i]);
                    e.push(lay.state(k + 1) + i, 1.0);
                    for j in 0..n {
                        e.push(lay.state(k) + j, -lin.a[(i, j)]);
                    }
                    e.push(lay.input(k), -lin.b[i]);
                    e
                })
                .collect();
            prog.add_zero(rows);
        }

        // First knot inside the tube around the measured state, written with
        // unit radius so solver tolerances are relative to the tube size.
        let level = cfg.law.level();
        if level > 0.0 {
            let r = &self.ellipsoid_root / level.sqrt();
            let rx = &r * x_meas;
            let rows = (0..n)
                .map(|i| {
                    let mut e = AffineExpr::constant(-rx[i]);
                    for j in 0..n {
                        e.push(lay.state(0) + j, r[(i, j)]);
                    }
                    e
                })
                .collect();
            prog.add_soc(AffineExpr::constant(1.0), rows);
        } else {
            prog.add_zero((0..n).map(|i| AffineExpr::var(lay.state(0) + i, 1.0).with_constant(-x_meas[i])).collect());
        }

        // Terminal knot at the origin.
        prog.add_zero((0..n).map(|i| AffineExpr::var(lay.state(horizon) + i, 1.0)).collect());

        let poly = &cfg.tightened;
        for (k, lin) in lins.iter().enumerate() {
            let anchor = &lin.anchor_state;
            let f_anchor = sys.f(anchor);
            check_finite("drift at anchor", &[f_anchor])?;
            let (s1, s2) = (lay.slack(k), lay.slack(k) + 1);
            for i in 0..2 * n {
                let zeta: Vec<AffineExpr> = (0..n).map(|j| self.control_point(k, j, i)).collect();
                // Hull of ζ inside X ⊖ E.
                for (row, off) in poly.rows().iter().zip(poly.offsets()) {
                    let mut e = AffineExpr::constant(*off);
                    for (j, z) in zeta.iter().enumerate() {
                        for &(v, a) in &z.terms {
                            e.push(v, -row[j] * a);
                        }
                    }
                    prog.add_nonneg(e);
                }
                // ‖ζ_i − x̄_k‖ ≤ s_{k,1}.
                let dev = zeta.into_iter().enumerate().map(|(j, z)| z.with_constant(-anchor[j])).collect();
                prog.add_soc(AffineExpr::var(s1, 1.0), dev);
                // |ξ_{n,i} − f(x̄_k)| ≤ s_{k,2}.
                prog.add_soc(AffineExpr::var(s2, 1.0), vec![self.control_point(k, n, i).with_constant(-f_anchor)]);
            }

            // Input envelope: ‖(Lᵀs, σ)‖ ≤ σ + ½ and σ + ¼ ≤ u_max − Nᵀs − Γ.
            let block = soc_reformulate(&cfg.params, sys, anchor)?;
            let sig = lay.sigma(k);
            let lt = block.factor.transpose();
            let mut cone_rows: Vec<AffineExpr> = (0..2)
                .filter(|&r| lt[(r, 0)] != 0.0 || lt[(r, 1)] != 0.0)
                .map(|r| AffineExpr::var(s1, lt[(r, 0)]).with(s2, lt[(r, 1)]))
                .collect();
            cone_rows.push(AffineExpr::var(sig, 1.0));
            prog.add_soc(AffineExpr::var(sig, 1.0).with_constant(0.5), cone_rows);
            prog.add_nonneg(
                AffineExpr::constant(block.u_max - block.gamma - 0.25)
                    .with(s1, -block.n[0])
                    .with(s2, -block.n[1])
                    .with(sig, -1.0),
            );
        }
        Ok(prog)
    }

    /// Previous solution shifted by one stage, as a warm start.
    pub fn shifted_warm_start(&self, prev: &FtocpSolution) -> WarmStart {
        let lay = self.layout;
        let (n, horizon) = (lay.n, lay.horizon);
        let mut x = DVector::zeros(lay.num_vars());
        for k in 0..=horizon {
            let src = (k + 1).min(horizon);
            x.rows_mut(lay.state(k), n).copy_from(&prev.knots[src]);
        }
        for k in 0..horizon {
            let src = (k + 1).min(horizon - 1);
            x[lay.input(k)] = if k + 1 < horizon { prev.inputs[src] } else { 0.0 };
            x[lay.slack(k)] = prev.slacks[src][0];
            x[lay.slack(k) + 1] = prev.slacks[src][1];
            x[lay.sigma(k)] = prev.sigmas[src];
        }
        WarmStart { x, y: None }
    }

    /// De-flattens an optimal result and checks that the control points
    /// reproduce the knots through D.
    pub fn extract(&self, result: &SolveResult) -> Result<FtocpSolution> {
        if result.status != SolveStatus::Optimal {
            return Err(Error::Precondition(format!("cannot extract a {:?} result", result.status)));
        }
        let lay = self.layout;
        let (n, horizon) = (lay.n, lay.horizon);
        let x = &result.x;
        if x.len() != lay.num_vars() {
            return Err(Error::InvalidInput("result does not match the layout".into()));
        }
        let knots: Vec<DVector<f64>> = (0..=horizon).map(|k| x.rows(lay.state(k), n).into_owned()).collect();
        let mut control_points = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let seg = self.maps.segment(&knots[k], &knots[k + 1])?;
            let back = self.boundary.transpose() * seg.xi0();
            let want = DVector::from_iterator(2 * n, knots[k].iter().chain(knots[k + 1].iter()).copied());
            if (back - &want).amax() > EXTRACT_TOL * (1.0 + want.amax()) {
                return Err(Error::Consistency(format!("control points of segment {k} do not reproduce the knots")));
            }
            control_points.push(seg.xi0().clone());
        }
        Ok(FtocpSolution {
            inputs: (0..horizon).map(|k| x[lay.input(k)]).collect(),
            slacks: (0..horizon).map(|k| Vector2::new(x[lay.slack(k)], x[lay.slack(k) + 1])).collect(),
            sigmas: (0..horizon).map(|k| x[lay.sigma(k)]).collect(),
            knots,
            control_points,
            objective: result.objective,
            iterations: result.iterations,
            primal_residual: result.primal_residual,
            dual_residual: result.dual_residual,
            raw_x: result.x.clone(),
            raw_y: result.y.clone(),
        })
    }

    pub fn spline(&self, sol: &FtocpSolution, t_start: f64) -> Result<BezierSpline> {
        BezierSpline::with_maps(&self.maps, &sol.knots, t_start)
    }
}
