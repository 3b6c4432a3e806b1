//! Multi-rate constrained MPC with Bézier reference planning.
//!
//! A mid-level planner chooses spline knots by solving a second-order cone
//! program; a low-level CLF-QP tracker follows the resulting spline. The
//! tracker's robust invariant tube and input envelope are folded back into
//! the planner as constraint tightening, which gives state and input
//! constraint satisfaction for the disturbed nonlinear plant.

// Guards are written as `!(x > 0.0)` on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bezier;
pub mod cmpc;
pub mod conic;
pub mod dynamics;
pub mod error;
pub mod ftocp;
pub mod input_bounds;
pub mod numerics;
pub mod tracking;

pub use error::{Error, Result};
