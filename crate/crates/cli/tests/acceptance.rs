//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion. Exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use cmpc_cli::{run_scenario, run_sweep, ScenarioConfig};
use cmpc_core::bezier::{hull_slack, BernsteinBasis, ReferenceSample, SegmentMaps};
use cmpc_core::conic::{AffineExpr, ConicProgram, SolveStatus, SolverSettings};
use cmpc_core::dynamics::{exact_discretization, ContinuousLinearization, SystemModel};
use cmpc_core::input_bounds::{make_params, sigma_profile, soc_reformulate};
use cmpc_core::numerics::solve_lyapunov;
use cmpc_core::tracking::design_law;
use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const TUBE_TOL: f64 = 1e-4;
const TUBE_RUNTIME_S: f64 = 10.0;
const E2E_RUNTIME_S: f64 = 60.0;
const STATE_SLACK_TOL: f64 = 1e-6;
const INPUT_TOL: f64 = 1e-6;
const DISCRETIZATION_TOL: f64 = 1e-8;
const SOC_BAND: f64 = 1e-9;
const ENDPOINT_TOL: f64 = 1e-9;
const UNITY_TOL: f64 = 1e-12;
const HULL_TOL: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-5;
const LYAPUNOV_TOL: f64 = 1e-10;
const TUBE_CONSTANT_TOL: f64 = 1e-12;
const LATTICE_TOL: f64 = 2e-3;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn reference(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&config_path(name)).expect("shipped config loads")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// 1. V(x(t), t)/(γw̄²) over every sample of the reference run.
fn tube_invariance() -> Outcome {
    let start = Instant::now();
    let o = run_scenario(&reference("reference_cmpc.json")).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let ratio = o.summary.max_tube_ratio.ok_or("no tube ratio recorded")?;
    ensure(ratio <= 1.0 + TUBE_TOL, || format!("max ratio {ratio} > 1 + {TUBE_TOL:e}"))?;
    ensure(secs < TUBE_RUNTIME_S, || format!("runtime {secs:.2} s"))?;
    Ok(format!("max V/(γw̄²) = {ratio:.8}, {} samples, {secs:.2} s", o.log.len()))
}

/// Row-normalized polytope slack, computed here from the raw config.
fn normalized_slack(cfg: &ScenarioConfig, x: &DVector<f64>) -> f64 {
    cfg.polytope
        .rows
        .iter()
        .zip(&cfg.polytope.offsets)
        .map(|(r, l)| {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            (l - r.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>()) / norm
        })
        .fold(f64::INFINITY, f64::min)
}

/// 2. Constraint satisfaction over ≥ 50 planning periods.
fn end_to_end() -> Outcome {
    let cfg = reference("reference_cmpc.json");
    let start = Instant::now();
    let o = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let s = &o.summary;
    let state_bad = o.log.rows.iter().filter(|r| normalized_slack(&cfg, &r.x) < -STATE_SLACK_TOL).count();
    let input_bad = o.log.rows.iter().filter(|r| r.u.abs() > cfg.u_max + INPUT_TOL).count();
    ensure(state_bad == 0 && input_bad == 0, || format!("{state_bad} state / {input_bad} input violations"))?;
    ensure(s.planning_steps >= 50, || format!("only {} planning steps", s.planning_steps))?;
    ensure(s.planner_failures == 0 && !s.hard_failure && !s.diverged, || "planning failed".into())?;
    ensure(secs < E2E_RUNTIME_S, || format!("runtime {secs:.2} s"))?;
    Ok(format!(
        "{} samples, {} planning steps, {} fallbacks, max |u| = {:.4}, {secs:.2} s",
        o.log.len(),
        s.planning_steps,
        s.fallback_count,
        s.max_abs_input
    ))
}

/// 3. Both baselines violate a constraint; C-MPC does not.
fn baseline_contrast() -> Outcome {
    let mut parts = Vec::new();
    for (name, expect_clean) in
        [("reference_cmpc.json", true), ("reference_clf_only.json", false), ("reference_mpc_only.json", false)]
    {
        let cfg = reference(name);
        let o = run_scenario(&cfg).map_err(|e| format!("{name}: {e}"))?;
        let bad = o
            .log
            .rows
            .iter()
            .filter(|r| normalized_slack(&cfg, &r.x) < -STATE_SLACK_TOL || r.u.abs() > cfg.u_max + INPUT_TOL)
            .count();
        ensure((bad == 0) == expect_clean, || format!("{name}: {bad} violating samples"))?;
        parts.push(format!("{}: {bad}", name.trim_start_matches("reference_").trim_end_matches(".json")));
    }
    Ok(format!("violating samples: {}", parts.join(", ")))
}

fn rk4_affine(a: &DMatrix<f64>, f: &DVector<f64>, x0: &DVector<f64>, t: f64, steps: usize) -> DVector<f64> {
    let h = t / steps as f64;
    let field = |x: &DVector<f64>| a * x + f;
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

fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
    let sym = (&b + b.transpose()) * 0.5;
    let shift = sym.symmetric_eigen().eigenvalues.max() + rng.gen_range(0.05..2.0);
    b - DMatrix::identity(n, n) * shift
}

/// 4. Exact discretization against fine RK4.
fn discretization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let a = random_hurwitz(&mut rng, 2);
        let b = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let c = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let t = rng.gen_range(0.01..1.0);
        let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let u = rng.gen_range(-2.0..2.0);
        let (ad, bd, cd) = exact_discretization(&ContinuousLinearization { a: a.clone(), b: b.clone(), c: c.clone() }, t)
            .map_err(|e| e.to_string())?;
        let exact = &ad * &x0 + &bd * u + &cd;
        let oracle = rk4_affine(&a, &(&b * u + &c), &x0, t, 1000);
        worst = worst.max((exact - &oracle).amax() / oracle.amax().max(1.0));
    }
    ensure(worst <= DISCRETIZATION_TOL, || format!("worst relative error {worst:e}"))?;
    Ok(format!("100 systems, worst relative error {worst:.2e}"))
}

/// 5. Quadratic input bound ⇔ σ-feasibility of the cone block.
fn soc_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sys = SystemModel::paper_sincube();
    let (mut checked, mut feasible) = (0, 0);
    for _ in 0..1000 {
        let law = design_law(&[-2.0, -2.0], &DMatrix::identity(2, 2), rng.gen_range(0.0..0.05)).unwrap();
        let p = make_params(rng.gen_range(0.0..8.0), rng.gen_range(0.0..8.0), rng.gen_range(0.1..20.0), &law)
            .map_err(|e| e.to_string())?;
        let anchor = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let block = soc_reformulate(&p, &sys, &anchor).map_err(|e| e.to_string())?;
        let s = Vector2::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        // Independent evaluation of ½sᵀMs + Nᵀs + Γ ≤ u_max.
        let n = p.n_vec(&sys, &anchor).map_err(|e| e.to_string())?;
        let gamma = p.gamma_at(&sys, &anchor).map_err(|e| e.to_string())?;
        let lhs = 0.5 * s.dot(&(p.m * s)) + n.dot(&s) + gamma;
        if (lhs - p.u_max).abs() < SOC_BAND {
            continue;
        }
        checked += 1;
        let quad_ok = lhs <= p.u_max;
        let cone_ok = block.sigma_interval(&s).is_some_and(|(lo, hi)| {
            let sigma = 0.5 * (lo + hi);
            block.satisfied(&s, sigma, 1e-12)
        });
        ensure(quad_ok == cone_ok, || format!("disagreement at s = {s:?}, lhs − u_max = {:e}", lhs - p.u_max))?;
        feasible += usize::from(quad_ok);
    }
    Ok(format!("{checked} tuples agree ({feasible} feasible)"))
}

fn lp_hull_member(points: &[DVector<f64>], p: &DVector<f64>) -> bool {
    let m = points.len();
    let mut prog = ConicProgram::new(m);
    for i in 0..m {
        prog.add_nonneg(AffineExpr::var(i, 1.0));
    }
    let mut rows = vec![(0..m).fold(AffineExpr::constant(-1.0), |e, i| e.with(i, 1.0))];
    for d in 0..p.len() {
        rows.push(points.iter().enumerate().fold(AffineExpr::constant(-p[d]), |e, (i, z)| e.with(i, z[d])));
    }
    prog.add_zero(rows);
    prog.solve(&SolverSettings::default()).map(|r| r.status == SolveStatus::Optimal).unwrap_or(false)
}

/// 6. Bézier structure.
fn bezier_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sys = SystemModel::paper_sincube();
    let mut unity = 0.0_f64;
    for order in 1..=12 {
        let basis = BernsteinBasis::new(order, 0.7).unwrap();
        for k in 0..=100 {
            let b = basis.eval(0.7 * k as f64 / 100.0).unwrap();
            unity = unity.max((b.sum() - 1.0).abs());
        }
    }
    ensure(unity <= UNITY_TOL, || format!("partition of unity error {unity:e}"))?;
    let (mut endpoint, mut hull) = (0.0_f64, f64::INFINITY);
    let mut lp_misses = 0;
    let mut bound_excess = f64::NEG_INFINITY;
    for seg_idx in 0..100 {
        let period = rng.gen_range(0.1..1.0);
        let maps = SegmentMaps::new(2, period).unwrap();
        let x0 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let x1 = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let seg = maps.segment(&x0, &x1).unwrap();
        endpoint = endpoint.max((seg.state(0.0).unwrap() - &x0).amax()).max((seg.state(period).unwrap() - &x1).amax());
        let sp = seg.spatial_points();
        if seg_idx < 50 {
            for k in 0..200 {
                let p = seg.state(period * k as f64 / 199.0).unwrap();
                hull = hull.min(hull_slack(&sp.zeta, &p).unwrap());
                lp_misses += usize::from(!lp_hull_member(&sp.zeta, &p));
            }
        }
        // Control-point bounds on σ against a random anchor.
        let anchor = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let bound = Vector2::new(sp.max_distance(&anchor), sp.max_top_deviation(sys.f(&anchor)));
        for k in 0..=500 {
            let tau = period * k as f64 / 500.0;
            let r = ReferenceSample { state: seg.state(tau).unwrap(), top_derivative: seg.top_derivative(tau).unwrap() };
            let s = sigma_profile(&sys, &r, &anchor);
            bound_excess = bound_excess.max(s[0] - bound[0]).max(s[1] - bound[1]);
        }
    }
    ensure(endpoint <= ENDPOINT_TOL, || format!("endpoint error {endpoint:e}"))?;
    ensure(hull >= -HULL_TOL && lp_misses == 0, || format!("hull slack {hull:e}, {lp_misses} LP misses"))?;
    ensure(bound_excess <= 1e-12, || format!("σ exceeds control-point bound by {bound_excess:e}"))?;
    Ok(format!(
        "unity {unity:.1e}, endpoints {endpoint:.1e}, min hull slack {hull:.2e} (10000 LPs), max σ − bound {bound_excess:.1e}"
    ))
}

/// 7. |k_clf| stays under the feedback-linearization bound.
fn input_bound_dominance() -> Outcome {
    let o = run_scenario(&reference("reference_cmpc.json")).map_err(|e| e.to_string())?;
    let excess = o.summary.max_bound_excess.ok_or("no bound excess recorded")?;
    ensure(excess <= BOUND_TOL, || format!("max |u| − bound = {excess:e}"))?;
    Ok(format!("max |u| − bound = {excess:.4} at α = {}, β = {}", o.summary.alpha, o.summary.beta))
}

/// 8. Lyapunov solver and tube constants.
fn lyapunov_machinery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=4);
        let f = random_hurwitz(&mut rng, n);
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let p = solve_lyapunov(&f, &q).map_err(|e| e.to_string())?;
        let res = (f.transpose() * &p + &p * &f + &q).norm() / q.norm();
        worst = worst.max(res);
        ensure(p.clone().cholesky().is_some(), || "P is not positive definite".into())?;
    }
    ensure(worst <= LYAPUNOV_TOL, || format!("residual {worst:e}"))?;
    let mut const_err = 0.0_f64;
    for _ in 0..100 {
        let poles = [-rng.gen_range(0.2..4.0), -rng.gen_range(0.2..4.0)];
        let l = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let q = &l * l.transpose() + DMatrix::identity(2, 2) * 0.1;
        let wbar = rng.gen_range(0.0..0.1);
        let law = design_law(&poles, &q, wbar).map_err(|e| e.to_string())?;
        let ep = law.p.clone().symmetric_eigen().eigenvalues;
        let eq = q.clone().symmetric_eigen().eigenvalues;
        let gamma = 4.0 * ep.max().powi(3) / eq.min().powi(2);
        let ebar = (gamma * wbar * wbar / ep.min()).sqrt();
        const_err = const_err.max((law.gamma - gamma).abs() / gamma);
        if ebar > 0.0 {
            const_err = const_err.max((law.ebar - ebar).abs() / ebar);
        }
    }
    ensure(const_err <= TUBE_CONSTANT_TOL, || format!("γ/ē relative error {const_err:e}"))?;
    Ok(format!("worst residual {worst:.2e}·‖Q‖, γ/ē relative error {const_err:.1e}"))
}

struct Instance {
    p: [[f64; 2]; 2],
    q: [f64; 2],
    center: [f64; 2],
    radius: f64,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let l = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        Self {
            p: [[l[0] * l[0] + 0.1, l[0] * l[1]], [l[0] * l[1], l[1] * l[1] + l[2] * l[2] + 0.1]],
            q: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            center: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            radius: rng.gen_range(0.3..1.5),
        }
    }

    fn objective(&self, x: [f64; 2]) -> f64 {
        let p = &self.p;
        0.5 * (p[0][0] * x[0] * x[0] + 2.0 * p[0][1] * x[0] * x[1] + p[1][1] * x[1] * x[1])
            + self.q[0] * x[0]
            + self.q[1] * x[1]
    }

    fn feasible(&self, x: [f64; 2]) -> bool {
        x.iter().all(|v| v.abs() <= 2.0) && (x[0] - self.center[0]).hypot(x[1] - self.center[1]) <= self.radius
    }

    fn program(&self) -> ConicProgram {
        let mut p = ConicProgram::new(2);
        p.add_quadratic(0, 0, self.p[0][0]);
        p.add_quadratic(1, 1, self.p[1][1]);
        p.add_quadratic(0, 1, self.p[0][1]);
        p.set_linear(0, self.q[0]);
        p.set_linear(1, self.q[1]);
        for i in 0..2 {
            p.add_nonneg(AffineExpr::var(i, -1.0).with_constant(2.0));
            p.add_nonneg(AffineExpr::var(i, 1.0).with_constant(2.0));
        }
        p.add_soc(
            AffineExpr::constant(self.radius),
            vec![AffineExpr::var(0, 1.0).with_constant(-self.center[0]), AffineExpr::var(1, 1.0).with_constant(-self.center[1])],
        );
        p
    }

    fn brute_force(&self) -> f64 {
        let mut best = (f64::INFINITY, [0.0; 2]);
        let scan = |lo: [f64; 2], h: f64, n: usize, best: &mut (f64, [f64; 2])| {
            for i in 0..=n {
                for j in 0..=n {
                    let x = [lo[0] + i as f64 * h, lo[1] + j as f64 * h];
                    if self.feasible(x) && self.objective(x) < best.0 {
                        *best = (self.objective(x), x);
                    }
                }
            }
        };
        scan([-2.0, -2.0], 0.01, 400, &mut best);
        for (half, h) in [(0.1, 1e-3), (0.01, 1e-4)] {
            let c = best.1;
            scan([c[0] - half, c[1] - half], h, 200, &mut best);
        }
        best.0
    }
}

/// 9. Conic solver against closed forms and a lattice search.
fn solver_sanity() -> Outcome {
    let settings = SolverSettings::default();
    let solve = |p: &ConicProgram| p.solve(&settings).map_err(|e| e.to_string());
    // LP: min x + y, x ≥ 1, y ≥ 2 → 3.
    let mut lp = ConicProgram::new(2);
    lp.set_linear(0, 1.0);
    lp.set_linear(1, 1.0);
    lp.add_nonneg(AffineExpr::var(0, 1.0).with_constant(-1.0));
    lp.add_nonneg(AffineExpr::var(1, 1.0).with_constant(-2.0));
    // SOC: min t, ‖(3, 4)‖ ≤ t → 5.
    let mut soc = ConicProgram::new(1);
    soc.set_linear(0, 1.0);
    soc.add_soc(AffineExpr::var(0, 1.0), vec![AffineExpr::constant(3.0), AffineExpr::constant(4.0)]);
    // QP: min ½(x − 2)², x ≤ 1 → ½ − 2 (constant dropped).
    let mut qp = ConicProgram::new(1);
    qp.add_quadratic(0, 0, 1.0);
    qp.set_linear(0, -2.0);
    qp.add_nonneg(AffineExpr::constant(1.0).with(0, -1.0));
    for (name, prog, want) in [("lp", &lp, 3.0), ("soc", &soc, 5.0), ("qp", &qp, -1.5)] {
        let r = solve(prog)?;
        ensure(r.status == SolveStatus::Optimal && (r.objective - want).abs() <= 1e-5, || {
            format!("{name}: {:?} objective {}", r.status, r.objective)
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for k in 0..100 {
        let inst = Instance::random(&mut rng);
        let prog = inst.program();
        let r = solve(&prog)?;
        ensure(r.status == SolveStatus::Optimal, || format!("instance {k}: {:?}", r.status))?;
        ensure(prog.max_violation(&r.x) <= 1e-5, || format!("instance {k}: infeasible answer"))?;
        worst = worst.max((r.objective - inst.brute_force()).abs());
    }
    ensure(worst <= LATTICE_TOL, || format!("worst lattice gap {worst:e}"))?;
    for k in 0..20 {
        let mut inst = Instance::random(&mut rng);
        inst.center[0] = 3.0 + inst.radius + rng.gen_range(0.1..1.0);
        let r = solve(&inst.program())?;
        ensure(r.status == SolveStatus::PrimalInfeasible, || format!("infeasible instance {k}: {:?}", r.status))?;
    }
    Ok(format!("3 examples, 100 instances (worst gap {worst:.1e}), 20 infeasible flagged"))
}

/// 10. Increasing gains tighten the first plan.
fn gain_sweep() -> Outcome {
    let rows = run_sweep(&reference("reference_cmpc.json"), &[(1.0, 1.0), (4.0, 4.0), (16.0, 16.0)], None)
        .map_err(|e| e.to_string())?;
    let mut spacing = Vec::new();
    for r in &rows {
        let s = r.summary.as_ref().ok_or_else(|| format!("({}, {}): {:?}", r.alpha, r.beta, r.error))?;
        ensure(s.completed() && s.violation_free(), || format!("({}, {}) violated constraints", r.alpha, r.beta))?;
        spacing.push(s.first_plan_max_spacing.ok_or("no spacing recorded")?);
    }
    ensure(spacing.windows(2).all(|w| w[1] <= w[0]), || format!("spacing not non-increasing: {spacing:?}"))?;
    Ok(format!("first-plan max spacing {:.5} ≥ {:.5} ≥ {:.5}, all violation-free", spacing[0], spacing[1], spacing[2]))
}

/// 11. Two CLI invocations give byte-identical CSVs.
fn determinism() -> Outcome {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for stem in ["first", "second"] {
        let status = Command::new(env!("CARGO_BIN_EXE_cmpc"))
            .arg("run")
            .arg(config_path("reference_cmpc.json"))
            .arg("--out")
            .arg(dir.join(stem))
            .output()
            .map_err(|e| e.to_string())?
            .status;
        ensure(status.success(), || format!("run exited with {status}"))?;
        bytes.push(std::fs::read(dir.join(format!("{stem}.csv"))).map_err(|e| e.to_string())?);
    }
    ensure(bytes[0] == bytes[1], || "CSVs differ".into())?;
    Ok(format!("{} bytes identical", bytes[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("tube invariance", tube_invariance),
        ("end-to-end constraint satisfaction", end_to_end),
        ("baseline contrast", baseline_contrast),
        ("exact discretization", discretization),
        ("cone reformulation equivalence", soc_equivalence),
        ("Bezier structure", bezier_suite),
        ("input-bound dominance", input_bound_dominance),
        ("Lyapunov machinery", lyapunov_machinery),
        ("solver sanity", solver_sanity),
        ("gain sweep", gain_sweep),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
