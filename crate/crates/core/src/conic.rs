//! Convex conic programs and an operator-splitting (ADMM) solver.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀPx + qᵀx
//! subject to  a_iᵀx + c_i ∈ K  for every cone block
//! ```
//!
//! with K a product of zero cones (equalities), nonnegative orthants and
//! second-order cones. The solver splits `z = Ax` with `z + c ∈ K`, factors
//! `P + σI + AᵀRA` once per step-size change, and detects primal
//! infeasibility from the limit of successive dual differences.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::SYMMETRY_TOL;

/// Sparse affine expression `Σ a_i x_i + c`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize, a: f64) -> Self {
        Self { terms: vec![(i, a)], constant: 0.0 }
    }

    pub fn push(&mut self, i: usize, a: f64) -> &mut Self {
        if a != 0.0 {
            self.terms.push((i, a));
        }
        self
    }

    pub fn with(mut self, i: usize, a: f64) -> Self {
        self.push(i, a);
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Every row equals zero.
    Zero,
    /// Every row is nonnegative.
    Nonneg,
    /// ‖rows[1..]‖ ≤ rows[0].
    SecondOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub kind: ConeKind,
    pub rows: Vec<AffineExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Threshold on the normalized infeasibility certificate.
    pub eps_infeasible: f64,
    /// Consecutive iterations the certificate must hold.
    pub infeasible_patience: usize,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub adaptive_rho_interval: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            eps_infeasible: 1e-7,
            infeasible_patience: 100,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            adaptive_rho_interval: 25,
        }
    }
}

/// Initial point for the iteration, in the caller's (unscaled) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    /// Dual variables, one per constraint row.
    pub y: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    /// Dual variables, one per constraint row, in declaration order.
    pub y: DVector<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Quadratic objective over affine cone constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    num_vars: usize,
    quad: DMatrix<f64>,
    linear: DVector<f64>,
    constraints: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            quad: DMatrix::zeros(num_vars, num_vars),
            linear: DVector::zeros(num_vars),
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.iter().map(|c| c.rows.len()).sum()
    }

    pub fn constraints(&self) -> &[ConeConstraint] {
        &self.constraints
    }

    pub fn objective_matrix(&self) -> &DMatrix<f64> {
        &self.quad
    }

    pub fn linear_term(&self) -> &DVector<f64> {
        &self.linear
    }

    /// Adds `v` to P[i,j] and P[j,i] (once on the diagonal); the objective
    /// is ½xᵀPx.
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) {
        self.quad[(i, j)] += v;
        if i != j {
            self.quad[(j, i)] += v;
        }
    }

    pub fn set_linear(&mut self, i: usize, v: f64) {
        self.linear[i] = v;
    }

    pub fn add_zero(&mut self, rows: Vec<AffineExpr>) {
        self.constraints.push(ConeConstraint { kind: ConeKind::Zero, rows });
    }

    pub fn add_nonneg(&mut self, row: AffineExpr) {
        self.constraints.push(ConeConstraint { kind: ConeKind::Nonneg, rows: vec![row] });
    }

    /// ‖u‖ ≤ t.
    pub fn add_soc(&mut self, t: AffineExpr, u: Vec<AffineExpr>) {
        let mut rows = Vec::with_capacity(u.len() + 1);
        rows.push(t);
        rows.extend(u);
        self.constraints.push(ConeConstraint { kind: ConeKind::SecondOrder, rows });
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.quad * x)) + self.linear.dot(x)
    }

    /// Largest cone violation of `x` (distance of each block's value to its cone).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let v = DVector::from_iterator(c.rows.len(), c.rows.iter().map(|r| r.eval(x)));
                let p = project_cone(c.kind, &v);
                (v - p).amax()
            })
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.quad.iter().chain(self.linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("objective has non-finite entries".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.quad[(i, j)] - self.quad[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidInput("objective matrix is not symmetric".into()));
                }
            }
        }
        if n > 0 {
            let ev = self.quad.clone().symmetric_eigen().eigenvalues;
            let scale = 1.0 + self.quad.amax();
            if ev.min() < -1e-9 * scale {
                return Err(Error::InvalidInput("objective matrix is not PSD".into()));
            }
        }
        for c in &self.constraints {
            if c.rows.is_empty() {
                return Err(Error::InvalidInput("empty cone block".into()));
            }
            for r in &c.rows {
                if !r.constant.is_finite() {
                    return Err(Error::InvalidInput("non-finite constraint offset".into()));
                }
                for &(i, a) in &r.terms {
                    if i >= n {
                        return Err(Error::InvalidInput(format!("variable index {i} out of range")));
                    }
                    if !a.is_finite() {
                        return Err(Error::InvalidInput("non-finite constraint coefficient".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, settings: &SolverSettings) -> Result<SolveResult> {
        self.solve_warm(settings, None)
    }

    pub fn solve_warm(&self, settings: &SolverSettings, warm: Option<&WarmStart>) -> Result<SolveResult> {
        self.validate()?;
        if let Some(w) = warm {
            if w.x.len() != self.num_vars || w.y.as_ref().is_some_and(|y| y.len() != self.num_rows()) {
                return Err(Error::InvalidInput("warm start dimension mismatch".into()));
            }
        }
        Admm::new(self, settings).run(warm)
    }

    /// Plain-text dump: a header line `vars rows`, the nonzero objective
    /// entries as `P i j v` and `q i v`, then one line per constraint block
    /// (`zero|nonneg|soc <rows>`) followed by its rows as
    /// `<constant> i:a i:a ...`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.num_vars, self.num_rows());
        for i in 0..self.num_vars {
            for j in i..self.num_vars {
                if self.quad[(i, j)] != 0.0 {
                    let _ = writeln!(s, "P {i} {j} {}", self.quad[(i, j)]);
                }
            }
        }
        for (i, v) in self.linear.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "q {i} {v}");
            }
        }
        for c in &self.constraints {
            let kind = match c.kind {
                ConeKind::Zero => "zero",
                ConeKind::Nonneg => "nonneg",
                ConeKind::SecondOrder => "soc",
            };
            let _ = writeln!(s, "{kind} {}", c.rows.len());
            for r in &c.rows {
                let _ = write!(s, "{}", r.constant);
                for (i, a) in &r.terms {
                    let _ = write!(s, " {i}:{a}");
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Euclidean projection onto {(t, u) : ‖u‖ ≤ t}.
pub fn project_soc(v: &DVector<f64>) -> DVector<f64> {
    let mut out = v.clone();
    project_soc_mut(out.as_mut_slice());
    out
}

fn project_soc_mut(v: &mut [f64]) {
    let t = v[0];
    let nu = v[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu <= t {
        return;
    }
    if nu <= -t {
        v.iter_mut().for_each(|a| *a = 0.0);
        return;
    }
    let a = 0.5 * (nu + t);
    v[0] = a;
    let f = a / nu;
    v[1..].iter_mut().for_each(|u| *u *= f);
}

fn project_cone(kind: ConeKind, v: &DVector<f64>) -> DVector<f64> {
    match kind {
        ConeKind::Zero => DVector::zeros(v.len()),
        ConeKind::Nonneg => v.map(|a| a.max(0.0)),
        ConeKind::SecondOrder => project_soc(v),
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    kind: ConeKind,
    start: usize,
    len: usize,
}

/// Row-compressed constraint matrix.
struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn mul(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for i in 0..self.rows() {
            let mut acc = 0.0;
            for k in self.ptr[i]..self.ptr[i + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            out[i] = acc;
        }
    }

    fn mul_t(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for i in 0..self.rows() {
            let yi = y[i];
            if yi != 0.0 {
                for k in self.ptr[i]..self.ptr[i + 1] {
                    out[self.col[k]] += self.val[k] * yi;
                }
            }
        }
    }
}

struct Admm<'a> {
    settings: &'a SolverSettings,
    prog: &'a ConicProgram,
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: Csr,
    c: DVector<f64>,
    blocks: Vec<Block>,
    d: DVector<f64>,
    e: DVector<f64>,
    cost_scale: f64,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

fn clamp_scale(norm: f64) -> f64 {
    if norm < 1e-4 {
        1.0
    } else {
        (1.0 / norm.sqrt()).clamp(1e-4, 1e4)
    }
}

impl<'a> Admm<'a> {
    fn new(prog: &'a ConicProgram, settings: &'a SolverSettings) -> Self {
        let n = prog.num_vars;
        let mut ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut c = Vec::new();
        let mut blocks = Vec::new();
        for cons in &prog.constraints {
            blocks.push(Block { kind: cons.kind, start: c.len(), len: cons.rows.len() });
            for r in &cons.rows {
                // Merge duplicate indices.
                let mut terms = r.terms.clone();
                terms.sort_by_key(|t| t.0);
                let mut last: Option<usize> = None;
                for (i, a) in terms {
                    if last == Some(i) {
                        *val.last_mut().unwrap() += a;
                    } else {
                        col.push(i);
                        val.push(a);
                        last = Some(i);
                    }
                }
                ptr.push(col.len());
                c.push(r.constant);
            }
        }
        let mut admm = Self {
            settings,
            prog,
            p: prog.quad.clone(),
            q: prog.linear.clone(),
            a: Csr { ptr, col, val },
            c: DVector::from_vec(c),
            blocks,
            d: DVector::from_element(n, 1.0),
            e: DVector::zeros(0),
            cost_scale: 1.0,
        };
        admm.e = DVector::from_element(admm.a.rows(), 1.0);
        admm.equilibrate();
        admm
    }

    /// Modified Ruiz equilibration of the KKT matrix, uniform inside each
    /// second-order cone so that cone membership is preserved, followed by
    /// cost scaling.
    fn equilibrate(&mut self) {
        let n = self.p.nrows();
        let m = self.a.rows();
        for _ in 0..self.settings.scaling_iters {
            let mut col_norm = DVector::from_fn(n, |j, _| {
                self.p.column(j).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
            });
            let mut row_norm = DVector::zeros(m);
            for i in 0..m {
                for k in self.a.ptr[i]..self.a.ptr[i + 1] {
                    let v = self.a.val[k].abs();
                    let j = self.a.col[k];
                    col_norm[j] = col_norm[j].max(v);
                    row_norm[i] = f64::max(row_norm[i], v);
                }
            }
            let delta = col_norm.map(clamp_scale);
            let mut eps = row_norm.map(clamp_scale);
            for b in &self.blocks {
                if b.kind == ConeKind::SecondOrder {
                    let mean = eps.rows(b.start, b.len).mean();
                    eps.rows_mut(b.start, b.len).fill(mean);
                }
            }
            for i in 0..n {
                for j in 0..n {
                    self.p[(i, j)] *= delta[i] * delta[j];
                }
            }
            self.q.component_mul_assign(&delta);
            for i in 0..m {
                for k in self.a.ptr[i]..self.a.ptr[i + 1] {
                    self.a.val[k] *= eps[i] * delta[self.a.col[k]];
                }
            }
            self.d.component_mul_assign(&delta);
            self.e.component_mul_assign(&eps);
        }
        let mean_col = if n > 0 {
            (0..n).map(|j| self.p.column(j).amax()).sum::<f64>() / n as f64
        } else {
            0.0
        };
        let norm = mean_col.max(inf_norm(&self.q));
        self.cost_scale = if norm < 1e-4 { 1.0 } else { (1.0 / norm).clamp(1e-4, 1e4) };
        self.p *= self.cost_scale;
        self.q *= self.cost_scale;
        self.c.component_mul_assign(&self.e);
    }

    fn rho_vector(&self, rho: f64) -> DVector<f64> {
        let mut r = DVector::from_element(self.a.rows(), rho);
        for b in &self.blocks {
            if b.kind == ConeKind::Zero {
                r.rows_mut(b.start, b.len).fill(rho * 1e3);
            }
        }
        r
    }

    fn factor(&self, rho: &DVector<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let n = self.p.nrows();
        let mut k = self.p.clone();
        for i in 0..n {
            k[(i, i)] += self.settings.sigma;
        }
        for i in 0..self.a.rows() {
            let (lo, hi) = (self.a.ptr[i], self.a.ptr[i + 1]);
            for s in lo..hi {
                let (ci, vi) = (self.a.col[s], self.a.val[s] * rho[i]);
                for t in lo..hi {
                    k[(ci, self.a.col[t])] += vi * self.a.val[t];
                }
            }
        }
        k.cholesky().ok_or_else(|| Error::Numerical("KKT factorization failed".into()))
    }

    /// z ← Π_C(v) with C = K − c, blockwise.
    fn project(&self, v: &mut DVector<f64>) {
        for b in &self.blocks {
            let (s, l) = (b.start, b.len);
            match b.kind {
                ConeKind::Zero => {
                    for i in s..s + l {
                        v[i] = -self.c[i];
                    }
                }
                ConeKind::Nonneg => {
                    for i in s..s + l {
                        v[i] = v[i].max(-self.c[i]);
                    }
                }
                ConeKind::SecondOrder => {
                    for i in s..s + l {
                        v[i] += self.c[i];
                    }
                    project_soc_mut(&mut v.as_mut_slice()[s..s + l]);
                    for i in s..s + l {
                        v[i] -= self.c[i];
                    }
                }
            }
        }
    }

    /// Normalized primal-infeasibility certificate test on a dual difference
    /// (scaled variables).
    fn certifies_infeasibility(&self, dy: &DVector<f64>, work: &mut DVector<f64>) -> bool {
        let dy_u = dy.component_mul(&self.e);
        let norm = inf_norm(&dy_u);
        if !(norm > 1e-30) {
            return false;
        }
        let eps = self.settings.eps_infeasible;
        // Aᵀδy (unscaled) = D⁻¹ Āᵀ δȳ.
        self.a.mul_t(dy, work);
        let at = work.component_div(&self.d);
        if inf_norm(&at) / norm > eps {
            return false;
        }
        // −δy must lie in the dual cone (zero cone: unrestricted).
        for b in &self.blocks {
            let (s, l) = (b.start, b.len);
            let seg = -dy_u.rows(s, l) / norm;
            let dist = match b.kind {
                ConeKind::Zero => 0.0,
                ConeKind::Nonneg => seg.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max),
                ConeKind::SecondOrder => {
                    let segv = DVector::from_iterator(l, seg.iter().copied());
                    (project_soc(&segv) - segv).amax()
                }
            };
            if dist > eps {
                return false;
            }
        }
        // Support of C at δy is −cᵀδy and must be negative.
        let c_u = self.c.component_div(&self.e);
        c_u.dot(&dy_u) / norm > eps
    }

    fn run(&self, warm: Option<&WarmStart>) -> Result<SolveResult> {
        let st = self.settings;
        let n = self.p.nrows();
        let m = self.a.rows();
        let mut rho = st.rho;
        let mut rho_vec = self.rho_vector(rho);
        let mut chol = self.factor(&rho_vec)?;

        let mut x = DVector::zeros(n);
        let mut z = DVector::zeros(m);
        let mut y = DVector::zeros(m);
        if let Some(w) = warm {
            x = w.x.component_div(&self.d);
            self.a.mul(&x, &mut z);
            self.project(&mut z);
            if let Some(wy) = &w.y {
                y = wy.component_div(&self.e) * self.cost_scale;
            }
        }

        let mut rhs = DVector::zeros(n);
        let mut work_n = DVector::zeros(n);
        let mut ax = DVector::zeros(m);
        let mut z_new = DVector::zeros(m);
        let mut y_prev;
        let mut infeasible_streak = 0usize;
        let mut status = SolveStatus::IterationLimit;
        let mut iterations = 0;
        let (mut prim, mut dual) = (f64::INFINITY, f64::INFINITY);

        for k in 1..=st.max_iter {
            iterations = k;
            // x̃ = K⁻¹(σx − q + Āᵀ(ρz − y))
            let w = rho_vec.component_mul(&z) - &y;
            self.a.mul_t(&w, &mut rhs);
            rhs += &x * st.sigma - &self.q;
            chol.solve_mut(&mut rhs);
            let x_tilde = &rhs;
            self.a.mul(x_tilde, &mut ax);
            // Relaxation.
            x = x_tilde * st.alpha + &x * (1.0 - st.alpha);
            let z_hat = &ax * st.alpha + &z * (1.0 - st.alpha);
            z_new.copy_from(&(&z_hat + y.component_div(&rho_vec)));
            self.project(&mut z_new);
            y_prev = y.clone();
            y += rho_vec.component_mul(&(&z_hat - &z_new));
            std::mem::swap(&mut z, &mut z_new);

            // Residuals in the caller's units.
            self.a.mul(&x, &mut ax);
            let r_prim = (&ax - &z).component_div(&self.e);
            prim = inf_norm(&r_prim);
            let px = &self.p * &x;
            self.a.mul_t(&y, &mut work_n);
            let aty = work_n.clone();
            let r_dual = (&px + &self.q + &aty).component_div(&self.d) / self.cost_scale;
            dual = inf_norm(&r_dual);
            let prim_scale = inf_norm(&ax.component_div(&self.e)).max(inf_norm(&z.component_div(&self.e)));
            let dual_scale = inf_norm(&px.component_div(&self.d))
                .max(inf_norm(&aty.component_div(&self.d)))
                .max(inf_norm(&self.q.component_div(&self.d)))
                / self.cost_scale;
            let prim_tol = st.eps_abs + st.eps_rel * prim_scale;
            let dual_tol = st.eps_abs + st.eps_rel * dual_scale;
            if prim <= prim_tol && dual <= dual_tol {
                status = SolveStatus::Optimal;
                break;
            }

            let dy = &y - &y_prev;
            if self.certifies_infeasibility(&dy, &mut work_n) {
                infeasible_streak += 1;
                if infeasible_streak >= st.infeasible_patience {
                    status = SolveStatus::PrimalInfeasible;
                    break;
                }
            } else {
                infeasible_streak = 0;
            }

            if st.adaptive_rho_interval > 0 && k % st.adaptive_rho_interval == 0 {
                // Balance the residuals measured against their own stopping
                // thresholds; a plain relative dual residual is 0/0 on
                // feasibility problems and would drive ρ to its floor.
                let ratio = ((prim / prim_tol) / (dual / dual_tol).max(1e-30)).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                    if new_rho != rho {
                        rho = new_rho;
                        rho_vec = self.rho_vector(rho);
                        chol = self.factor(&rho_vec)?;
                    }
                }
            }
        }

        let x_u = x.component_mul(&self.d);
        let y_u = y.component_mul(&self.e) / self.cost_scale;
        let objective = self.prog.objective(&x_u);
        let px = &self.prog.quad * &x_u;
        let c_u = self.c.component_div(&self.e);
        let gap = (x_u.dot(&px) + self.prog.linear.dot(&x_u) - c_u.dot(&y_u)).abs();
        Ok(SolveResult {
            status,
            x: x_u,
            y: y_u,
            objective,
            primal_residual: prim,
            dual_residual: dual,
            gap,
            iterations,
        })
    }
}
