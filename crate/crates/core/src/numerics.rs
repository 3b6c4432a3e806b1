//! Small dense matrix primitives: matrix exponential, Lyapunov solve,
//! 2×2 PSD projection and factorization, ellipsoid support function.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{check_finite, Error, Result};

/// Off-diagonal mismatch tolerated before a matrix is rejected as asymmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

const PADE_ORDER: usize = 6;
/// Scaled 1-norm target before the Padé core is applied.
const PADE_THETA: f64 = 0.5;

/// Matrix exponential by scaling and squaring with a diagonal [6/6] Padé core.
pub fn mat_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidInput("mat_exp needs a square matrix".into()));
    }
    check_finite("mat_exp argument", m.as_slice())?;
    let n = m.nrows();
    let norm = one_norm(m);
    let squarings = if norm > PADE_THETA {
        (norm / PADE_THETA).log2().ceil() as i32
    } else {
        0
    };
    let a = m * 2f64.powi(-squarings);

    // c_k = (2q-k)! q! / ((2q)! k! (q-k)!)
    let mut num = DMatrix::<f64>::identity(n, n);
    let mut den = DMatrix::<f64>::identity(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut c = 1.0;
    let q = PADE_ORDER as f64;
    for k in 1..=PADE_ORDER {
        let kf = k as f64;
        c *= (q - kf + 1.0) / (kf * (2.0 * q - kf + 1.0));
        power = &power * &a;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut r = den
        .lu()
        .solve(&num)
        .ok_or_else(|| Error::Numerical("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Checks symmetry within [`SYMMETRY_TOL`] and returns the symmetrized copy.
pub fn symmetrize(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!("{what} must be square")));
    }
    check_finite(what, m.as_slice())?;
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidInput(format!("{what} is not symmetric")));
            }
        }
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    DVector::from_vec(ev)
}

/// True when every eigenvalue of `f` has strictly negative real part.
pub fn is_hurwitz(f: &DMatrix<f64>) -> bool {
    f.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Solves `FᵀP + PF = −Q` through the vectorized (Kronecker) linear system.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !f.is_square() || f.shape() != q.shape() {
        return Err(Error::InvalidInput("F and Q must be square of equal size".into()));
    }
    check_finite("F", f.as_slice())?;
    let q = symmetrize(q, "Q")?;
    if q.clone().cholesky().is_none() {
        return Err(Error::Precondition("Q is not positive definite".into()));
    }
    if !is_hurwitz(f) {
        return Err(Error::Precondition("F is not Hurwitz".into()));
    }
    let n = f.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let ft = f.transpose();
    // Column-major vec: vec(AXB) = (Bᵀ ⊗ A) vec(X).
    let kron = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let sol = kron
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Kronecker system".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Result of [`psd_project_2x2`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsdProjection {
    pub matrix: Matrix2<f64>,
    /// Largest eigenvalue of the input.
    pub eigenvalue: f64,
    /// Unit eigenvector for `eigenvalue`, oriented with a nonnegative first
    /// component (both components nonnegative when the off-diagonal is).
    pub eigenvector: Vector2<f64>,
    /// False when the input was already PSD and returned unchanged.
    pub projected: bool,
}

/// Projection of a symmetric 2×2 matrix onto the PSD cone.
pub fn psd_project_2x2(m: &Matrix2<f64>) -> Result<PsdProjection> {
    check_finite("matrix", m.as_slice())?;
    if (m[(0, 1)] - m[(1, 0)]).abs() > SYMMETRY_TOL {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l_max, l_min) = (mid + rad, mid - rad);

    // Two algebraically equivalent eigenvector candidates; keep the larger
    // for accuracy.
    let c1 = Vector2::new(b, l_max - a);
    let c2 = Vector2::new(l_max - c, b);
    let mut v = if c1.norm() >= c2.norm() { c1 } else { c2 };
    if v.norm() == 0.0 {
        // Scalar multiple of identity.
        v = Vector2::new(1.0, 0.0);
    }
    v.normalize_mut();
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        v = -v;
    }

    let sym = Matrix2::new(a, b, b, c);
    if l_min >= 0.0 {
        return Ok(PsdProjection { matrix: sym, eigenvalue: l_max, eigenvector: v, projected: false });
    }
    let matrix = if l_max > 0.0 { v * v.transpose() * l_max } else { Matrix2::zeros() };
    Ok(PsdProjection { matrix, eigenvalue: l_max, eigenvector: v, projected: true })
}

/// Lower-triangular `L` with `L Lᵀ = m` for a symmetric PSD 2×2 matrix,
/// including the rank-deficient case.
pub fn cholesky_2x2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let tol = 1e-12 * (1.0 + m.abs().max());
    let (a, b, c) = (m[(0, 0)], m[(1, 0)], m[(1, 1)]);
    if (m[(0, 1)] - b).abs() > SYMMETRY_TOL {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    if a < -tol || c < -tol {
        return Err(Error::Numerical("matrix is not positive semidefinite".into()));
    }
    let l11 = a.max(0.0).sqrt();
    let l21 = if l11 > tol.sqrt() {
        b / l11
    } else if b.abs() <= tol {
        0.0
    } else {
        return Err(Error::Numerical("matrix is not positive semidefinite".into()));
    };
    let rem = c - l21 * l21;
    if rem < -tol.sqrt() {
        return Err(Error::Numerical("matrix is not positive semidefinite".into()));
    }
    Ok(Matrix2::new(l11, 0.0, l21, rem.max(0.0).sqrt()))
}

/// `sup { Lᵀv : vᵀPv ≤ level } = √(level · LᵀP⁻¹L)`.
pub fn ellipsoid_support(l: &DVector<f64>, p: &DMatrix<f64>, level: f64) -> Result<f64> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::Range { what: "level", value: level, lo: 0.0, hi: f64::INFINITY });
    }
    if p.nrows() != l.len() || !p.is_square() {
        return Err(Error::InvalidInput("dimension mismatch between L and P".into()));
    }
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Precondition("P is not positive definite".into()))?;
    let pinv_l = chol.solve(l);
    Ok((level * l.dot(&pinv_l)).max(0.0).sqrt())
}
