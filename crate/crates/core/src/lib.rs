//! Constrained Lagrangian dynamics: nonholonomic, vakonomic and Chetaev-type
//! equations of motion, a block saddle-point solver, an RK4 integrator and the
//! skate on an inclined plane as a reference model.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN on purpose

pub mod chetaev;
pub mod error;
pub mod integrator;
pub mod mechanics;
pub mod models;
pub mod nonholonomic;
pub mod saddle;
pub mod vakonomic;

pub use error::{DynamicsError, Result};
pub use integrator::{
    integrate, DynamicsKind, IntegratorConfig, PhasePoint, ReducedDynamics, StepMode, Trajectory,
};
pub use mechanics::{GeneralConstraintField, GeneralLagrangian, LinearConstraintField, MechanicalModel};
pub use saddle::SaddleSystem;
