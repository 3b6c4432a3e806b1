mod common;

use cmpc_core::bezier::ReferenceSample;
use cmpc_core::conic::{SolveStatus, SolverSettings};
use cmpc_core::dynamics::{linearize_discretize, DiscreteLinearization, SystemModel};
use cmpc_core::input_bounds::{sigma_profile, soc_reformulate};
use cmpc_core::tracking::{design_law, tighten_polytope, StatePolytope};
use cmpc_core::Error;
use common::Fixture;
use nalgebra::{DMatrix, DVector, Vector2};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn straight_line(sys: &SystemModel, x0: &DVector<f64>, horizon: usize, period: f64) -> Vec<DiscreteLinearization> {
    (0..horizon)
        .map(|k| linearize_discretize(sys, &(x0 * (1.0 - k as f64 / horizon as f64)), 0.0, period).unwrap())
        .collect()
}

/// Equality-constrained QP min Σ‖x_k‖² + 0.1 Σ u_k² + 10‖x_N‖² with exact
/// double-integrator dynamics, x₀ fixed and x_N = 0, solved through its KKT
/// system.
fn kkt_oracle(x0: &DVector<f64>, horizon: usize, period: f64) -> (Vec<DVector<f64>>, Vec<f64>, f64) {
    let nx = 2 * (horizon + 1);
    let nz = nx + horizon;
    let neq = 2 * horizon + 4;
    let mut h = DMatrix::zeros(nz, nz);
    for i in 0..nx {
        h[(i, i)] = if i >= 2 * horizon { 10.0 } else { 1.0 };
    }
    for k in 0..horizon {
        h[(nx + k, nx + k)] = 0.1;
    }
    let mut e = DMatrix::zeros(neq, nz);
    let mut d = DVector::zeros(neq);
    for k in 0..horizon {
        // x_{k+1} − A x_k − B u_k = 0.
        let (r, c) = (2 * k, 2 * k);
        e[(r, c + 2)] = 1.0;
        e[(r + 1, c + 3)] = 1.0;
        e[(r, c)] = -1.0;
        e[(r, c + 1)] = -period;
        e[(r + 1, c + 1)] = -1.0;
        e[(r, nx + k)] = -0.5 * period * period;
        e[(r + 1, nx + k)] = -period;
    }
    let base = 2 * horizon;
    for i in 0..2 {
        e[(base + i, i)] = 1.0;
        d[base + i] = x0[i];
        e[(base + 2 + i, 2 * horizon + i)] = 1.0;
    }
    let mut kkt = DMatrix::zeros(nz + neq, nz + neq);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(&(&h * 2.0));
    kkt.view_mut((0, nz), (nz, neq)).copy_from(&e.transpose());
    kkt.view_mut((nz, 0), (neq, nz)).copy_from(&e);
    let mut rhs = DVector::zeros(nz + neq);
    rhs.rows_mut(nz, neq).copy_from(&d);
    let z = kkt.lu().solve(&rhs).unwrap();
    let z = z.rows(0, nz).into_owned();
    let knots = (0..=horizon).map(|k| z.rows(2 * k, 2).into_owned()).collect();
    let inputs = (0..horizon).map(|k| z[nx + k]).collect();
    let obj = z.dot(&(&h * &z));
    (knots, inputs, obj)
}

#[test]
fn zero_instance_has_zero_plan() {
    let fx = Fixture::reference();
    let f = fx.ftocp();
    let zero = DVector::zeros(2);
    let lins = straight_line(&fx.sys, &zero, 25, 0.5);
    let r = f.build(&fx.sys, &zero, &lins).unwrap().solve(&SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let sol = f.extract(&r).unwrap();
    assert!(sol.knots.iter().all(|k| k.amax() < 1e-6));
    assert!(sol.inputs.iter().all(|u| u.abs() < 1e-6));
    assert!(sol.objective.abs() < 1e-8);
}

#[test]
fn double_integrator_matches_kkt_oracle() {
    let fx = Fixture::new(SystemModel::double_integrator(), 0.0, [10.0, 10.0], 100.0, 6, 0.5);
    let f = fx.ftocp();
    let x0 = v(&[0.5, -0.2]);
    let lins = straight_line(&fx.sys, &x0, 6, 0.5);
    let r = f.build(&fx.sys, &x0, &lins).unwrap().solve(&SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let sol = f.extract(&r).unwrap();
    let (knots, inputs, obj) = kkt_oracle(&x0, 6, 0.5);
    for (a, b) in sol.knots.iter().zip(&knots) {
        assert!((a - b).amax() < 1e-4, "{a} vs {b}");
    }
    for (a, b) in sol.inputs.iter().zip(&inputs) {
        assert!((a - b).abs() < 1e-4);
    }
    assert!((sol.objective - obj).abs() <= 1e-5 * (1.0 + obj));
}

#[test]
fn reference_first_plan_is_feasible() {
    let fx = Fixture::reference();
    let f = fx.ftocp();
    let cfg = f.config().clone();
    let x0 = v(&[1.0, 0.0]);
    let lins = straight_line(&fx.sys, &x0, 25, 0.5);
    let r = f.build(&fx.sys, &x0, &lins).unwrap().solve(&SolverSettings::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let sol = f.extract(&r).unwrap();

    // First knot inside the tube around x0, terminal knot at the origin.
    let e = &sol.knots[0] - &x0;
    assert!(e.dot(&(&cfg.law.p * &e)) <= cfg.law.level() * (1.0 + 1e-4));
    assert!(sol.knots[25].amax() < 1e-6);
    // Linearized dynamics.
    for (k, l) in lins.iter().enumerate() {
        assert!((l.step(&sol.knots[k], sol.inputs[k]) - &sol.knots[k + 1]).amax() < 1e-6);
    }
    let spline = f.spline(&sol, 0.0).unwrap();
    for (k, lin) in lins.iter().enumerate() {
        let anchor = &lin.anchor_state;
        let block = soc_reformulate(&cfg.params, &fx.sys, anchor).unwrap();
        let mut sup = Vector2::zeros();
        for j in 0..=200 {
            let tau = 0.5 * j as f64 / 200.0;
            let r: ReferenceSample = spline.sample_in_segment(k, tau).unwrap();
            // The reference stays in X ⊖ E.
            assert!(cfg.tightened.slack(&r.state) >= -1e-6);
            sup = sup.sup(&sigma_profile(&fx.sys, &r, anchor));
        }
        // The slacks bound the sampled deviations and respect the envelope.
        assert!(sol.slacks[k][0] >= sup[0] - 1e-6 && sol.slacks[k][1] >= sup[1] - 1e-6);
        assert!(block.quadratic_lhs(&sup) <= cfg.params.u_max + 1e-5);
    }
}

#[test]
fn oversized_tube_is_a_configuration_error() {
    let law = design_law(&[-2.0, -2.0], &DMatrix::identity(2, 2), 1.0).unwrap();
    let poly = StatePolytope::from_box(&[-0.02, -0.5], &[2.0, 0.5]).unwrap();
    assert!(matches!(tighten_polytope(&poly, &law), Err(Error::Configuration(_))));
}

#[test]
fn build_checks_dimensions() {
    let fx = Fixture::reference();
    let f = fx.ftocp();
    let x0 = v(&[1.0, 0.0]);
    let lins = straight_line(&fx.sys, &x0, 25, 0.5);
    assert!(f.build(&fx.sys, &x0, &lins[..24]).is_err());
    assert!(f.build(&fx.sys, &v(&[1.0, 0.0, 0.0]), &lins).is_err());
    assert!(f.build(&fx.sys, &v(&[f64::NAN, 0.0]), &lins).is_err());
}

#[test]
fn extract_rejects_non_optimal_results() {
    let fx = Fixture::reference();
    let f = fx.ftocp();
    let x0 = v(&[1.0, 0.0]);
    let lins = straight_line(&fx.sys, &x0, 25, 0.5);
    let prog = f.build(&fx.sys, &x0, &lins).unwrap();
    let r = prog.solve(&SolverSettings { max_iter: 0, ..Default::default() }).unwrap();
    assert_eq!(r.status, SolveStatus::IterationLimit);
    assert!(f.extract(&r).is_err());
    let mut ok = prog.solve(&SolverSettings::default()).unwrap();
    ok.x = DVector::zeros(3);
    assert!(f.extract(&ok).is_err());
}

#[test]
fn shifted_warm_start_moves_one_stage() {
    let fx = Fixture::reference();
    let f = fx.ftocp();
    let x0 = v(&[1.0, 0.0]);
    let lins = straight_line(&fx.sys, &x0, 25, 0.5);
    let sol = f.extract(&f.build(&fx.sys, &x0, &lins).unwrap().solve(&SolverSettings::default()).unwrap()).unwrap();
    let w = f.shifted_warm_start(&sol);
    let lay = f.layout();
    assert_eq!(w.x.len(), lay.num_vars());
    assert_eq!(w.x.rows(lay.state(0), 2).into_owned(), sol.knots[1]);
    assert_eq!(w.x.rows(lay.state(25), 2).into_owned(), sol.knots[25]);
    assert_eq!(w.x[lay.input(0)], sol.inputs[1]);
    assert_eq!(w.x[lay.input(24)], 0.0);
}
