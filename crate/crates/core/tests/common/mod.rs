#![allow(dead_code)]

use cmpc_core::cmpc::Planner;
use cmpc_core::conic::SolverSettings;
use cmpc_core::dynamics::SystemModel;
use cmpc_core::ftocp::{CostWeights, Ftocp, FtocpConfig};
use cmpc_core::input_bounds::make_params;
use cmpc_core::tracking::{design_law, tighten_polytope, StatePolytope};
use nalgebra::DMatrix;

pub struct Fixture {
    pub sys: SystemModel,
    pub constraints: StatePolytope,
    pub config: FtocpConfig,
}

impl Fixture {
    /// Box constraints |x₁| ≤ b₁, |x₂| ≤ b₂ with poles (−2, −2) and Q = I.
    pub fn new(sys: SystemModel, wbar: f64, bounds: [f64; 2], u_max: f64, horizon: usize, period: f64) -> Self {
        let law = design_law(&[-2.0, -2.0], &DMatrix::identity(2, 2), wbar).unwrap();
        let constraints =
            StatePolytope::from_box(&[-bounds[0], -bounds[1]], &[bounds[0], bounds[1]]).unwrap();
        let tightened = tighten_polytope(&constraints, &law).unwrap();
        let params = make_params(1.0, 1.0, u_max, &law).unwrap();
        let config = FtocpConfig { horizon, period, weights: CostWeights::default_for(2), tightened, params, law };
        Self { sys, constraints, config }
    }

    /// The reference scenario's system, constraints and bounds.
    pub fn reference() -> Self {
        let law = design_law(&[-2.0, -2.0], &DMatrix::identity(2, 2), 0.005).unwrap();
        let constraints = StatePolytope::from_box(&[-0.02, -0.5], &[2.0, 0.5]).unwrap();
        let tightened = tighten_polytope(&constraints, &law).unwrap();
        let params = make_params(1.0, 1.0, 10.0, &law).unwrap();
        let config =
            FtocpConfig { horizon: 25, period: 0.5, weights: CostWeights::default_for(2), tightened, params, law };
        Self { sys: SystemModel::paper_sincube(), constraints, config }
    }

    pub fn ftocp(&self) -> Ftocp {
        Ftocp::new(self.config.clone()).unwrap()
    }

    pub fn planner(&self) -> Planner {
        Planner::new(self.sys, self.config.clone(), self.constraints.clone(), SolverSettings::default()).unwrap()
    }
}
