//! Randomized property checks runnable from the CLI (`cmpc selftest`).

use cmpc_core::bezier::{BernsteinBasis, SegmentMaps};
use cmpc_core::dynamics::{exact_discretization, ContinuousLinearization, SystemModel};
use cmpc_core::input_bounds::{make_params, soc_reformulate};
use cmpc_core::numerics::solve_lyapunov;
use cmpc_core::tracking::{design_law, k_clf, k_clf_conic};
use cmpc_core::bezier::ReferenceSample;
use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Result of one property suite.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale))
}

/// A random Hurwitz matrix: shift so the symmetric part is negative definite.
fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let b = random_matrix(rng, n, 2.0);
    let sym = (&b + b.transpose()) * 0.5;
    let shift = sym.symmetric_eigen().eigenvalues.max() + rng.gen_range(0.1..1.0);
    b - DMatrix::identity(n, n) * shift
}

fn lyapunov_check(rng: &mut ChaCha8Rng, trials: usize) -> Check {
    let mut worst = 0.0_f64;
    let mut ok = true;
    for _ in 0..trials {
        let n = rng.gen_range(2..=4);
        let f = random_hurwitz(rng, n);
        let q = DMatrix::identity(n, n);
        match solve_lyapunov(&f, &q) {
            Ok(p) => {
                let res = (f.transpose() * &p + &p * &f + &q).norm() / q.norm();
                worst = worst.max(res);
                ok &= res <= 1e-10 && p.symmetric_eigen().eigenvalues.min() > 0.0;
            }
            Err(_) => ok = false,
        }
    }
    Check { name: "lyapunov", passed: ok, detail: format!("{trials} trials, worst relative residual {worst:.2e}") }
}

/// RK4 on the affine ODE with step T/1000.
fn rk4_affine(lin: &ContinuousLinearization, x0: &DVector<f64>, u: f64, period: f64) -> DVector<f64> {
    let steps = 1000;
    let h = period / steps as f64;
    let field = |x: &DVector<f64>| &lin.a * x + &lin.b * u + &lin.c;
    let mut x = x0.clone();
    for _ in 0..steps {
        let k1 = field(&x);
        let k2 = field(&(&x + &k1 * (0.5 * h)));
        let k3 = field(&(&x + &k2 * (0.5 * h)));
        let k4 = field(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

fn discretization_check(rng: &mut ChaCha8Rng, trials: usize) -> Check {
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let lin = ContinuousLinearization {
            a: random_hurwitz(rng, 2),
            b: DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
            c: DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let period = rng.gen_range(0.05..1.0);
        let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let u = rng.gen_range(-2.0..2.0);
        let Ok((a, b, c)) = exact_discretization(&lin, period) else {
            return Check { name: "discretization", passed: false, detail: "discretization failed".into() };
        };
        let exact = a * &x0 + b * u + c;
        let oracle = rk4_affine(&lin, &x0, u, period);
        worst = worst.max((exact - &oracle).norm() / oracle.norm().max(1.0));
    }
    Check { name: "discretization", passed: worst <= 1e-8, detail: format!("{trials} trials, worst relative error {worst:.2e}") }
}

fn bezier_check(rng: &mut ChaCha8Rng, trials: usize) -> Check {
    let (mut endpoint, mut unity) = (0.0_f64, 0.0_f64);
    for _ in 0..trials {
        let n = rng.gen_range(1..=3);
        let period = rng.gen_range(0.1..2.0);
        let maps = SegmentMaps::new(n, period).expect("valid segment maps");
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let x1 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let seg = maps.segment(&x0, &x1).expect("segment");
        endpoint = endpoint.max((seg.state(0.0).unwrap() - &x0).amax()).max((seg.state(period).unwrap() - &x1).amax());
        let basis = BernsteinBasis::new(rng.gen_range(1..=8), period).unwrap();
        let b = basis.eval(rng.gen_range(0.0..period)).unwrap();
        unity = unity.max((b.sum() - 1.0).abs());
    }
    Check {
        name: "bezier",
        passed: endpoint <= 1e-9 && unity <= 1e-12,
        detail: format!("{trials} trials, endpoint error {endpoint:.2e}, partition-of-unity error {unity:.2e}"),
    }
}

fn soc_check(rng: &mut ChaCha8Rng, trials: usize) -> Check {
    let sys = SystemModel::paper_sincube();
    let (mut mismatches, mut tested) = (0, 0);
    for _ in 0..trials {
        let law = design_law(&[-2.0, -2.0], &DMatrix::identity(2, 2), rng.gen_range(0.0..0.05)).unwrap();
        let params = make_params(rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0), rng.gen_range(0.5..20.0), &law).unwrap();
        let anchor = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let block = soc_reformulate(&params, &sys, &anchor).unwrap();
        let s = Vector2::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let lhs = block.quadratic_lhs(&s);
        if (lhs - block.u_max).abs() < 1e-9 {
            continue;
        }
        tested += 1;
        let quad = lhs <= block.u_max;
        let cone = block.sigma_interval(&s).is_some_and(|_| block.satisfied(&s, block.witness(&s), 1e-12));
        mismatches += usize::from(quad != cone);
    }
    Check { name: "soc_equivalence", passed: mismatches == 0, detail: format!("{tested} tuples, {mismatches} disagreements") }
}

fn clf_check(rng: &mut ChaCha8Rng, trials: usize) -> Check {
    let sys = SystemModel::paper_sincube();
    let law = design_law(&[-2.0, -2.0], &DMatrix::identity(2, 2), 0.01).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let reference = ReferenceSample {
            state: DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
            top_derivative: rng.gen_range(-2.0..2.0),
        };
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-1.5..1.5));
        let closed = k_clf(&law, &sys, &reference, &x).unwrap();
        let Ok(conic) = k_clf_conic(&law, &sys, &reference, &x) else {
            return Check { name: "clf_qp", passed: false, detail: "conic oracle failed".into() };
        };
        worst = worst.max((closed - conic).abs() / closed.abs().max(1.0));
    }
    Check { name: "clf_qp", passed: worst <= 1e-8, detail: format!("{trials} states, worst closed-form vs conic gap {worst:.2e}") }
}

/// Runs every suite with a fixed seed.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        lyapunov_check(&mut rng, 100),
        discretization_check(&mut rng, 100),
        bezier_check(&mut rng, 200),
        soc_check(&mut rng, 1000),
        clf_check(&mut rng, 100),
    ]
}
