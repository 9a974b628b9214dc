//! Nonholonomic (Lagrange-multiplier) dynamics of natural systems.
//!
//! The constrained equations
//!
//! ```text
//! A(q)(q̈ + Γ(q)[q̇,q̇]) + ∇U(q) = B(q)ᵀ μ,     B(q) q̇ = 0
//! ```
//!
//! are reduced to normal form by differentiating the constraint once and
//! solving the saddle system for `(q̈, μ)`. `B(q) q̇` is then a first integral
//! of the reduced ODE, so admissible initial data keep the constraint exactly.

use nalgebra::DVector;

use crate::error::{check_len, DynamicsError, Result};
use crate::mechanics::{
    constraint_partials, directional_derivative, mass_matrix_partials, christoffel_with, DynamicsState,
    LinearConstraintField, MechanicalModel,
};
use crate::saddle::SaddleSystem;

/// Default bound on `|B(q₀) v₀|` for admissible initial data.
pub const DEFAULT_ADMISSIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NonholonomicRhsOutput {
    pub acceleration: DVector<f64>,
    pub multiplier: DVector<f64>,
}

/// Solves for the acceleration and multiplier at `(q, v)`.
pub fn nonholonomic_rhs<M, F>(model: &M, field: &F, q: &DVector<f64>, v: &DVector<f64>) -> Result<NonholonomicRhsOutput>
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    let n = model.dim();
    check_len("nonholonomic q", n, q.len())?;
    check_len("nonholonomic v", n, v.len())?;
    check_len("constraint field dimension", n, field.dim())?;

    let a = model.mass_matrix(q);
    let b = field.matrix(q);
    let a_partials = mass_matrix_partials(model, q);
    let b_partials = constraint_partials(field, q);

    let rhs_top = -christoffel_with(&a_partials, v, v) - model.potential_gradient(q);
    let rhs_bottom = directional_derivative(&b_partials, v) * v;

    let sol = SaddleSystem::spd(a, b)?.solve(&rhs_top, &rhs_bottom)?;
    Ok(NonholonomicRhsOutput {
        acceleration: sol.primal,
        multiplier: sol.multiplier,
    })
}

/// Euclidean norm of `B(q) v`.
fn residual_norm<F: LinearConstraintField + ?Sized>(field: &F, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_len("admissibility q", field.dim(), q.len())?;
    check_len("admissibility v", field.dim(), v.len())?;
    Ok((field.matrix(q) * v).norm())
}

/// Accepts `(q0, v0)` at `t = 0` when `|B(q0) v0| ≤ tolerance`.
pub fn admissible_initial_state<F>(field: &F, q0: &DVector<f64>, v0: &DVector<f64>, tolerance: f64) -> Result<DynamicsState>
where
    F: LinearConstraintField + ?Sized,
{
    let residual = residual_norm(field, q0, v0)?;
    if residual > tolerance {
        return Err(DynamicsError::Inadmissible { residual, tolerance });
    }
    DynamicsState::new(0.0, q0.clone(), v0.clone())
}

/// A-orthogonal projection of `v` onto the constraint distribution:
/// `v − A⁻¹Bᵀ(BA⁻¹Bᵀ)⁻¹ B v`.
pub fn project_velocity<M, F>(model: &M, field: &F, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>>
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    check_len("projection q", model.dim(), q.len())?;
    check_len("projection v", model.dim(), v.len())?;
    let b = field.matrix(q);
    let bv = &b * v;
    let sys = SaddleSystem::spd(model.mass_matrix(q), b)?;
    // A x − Bᵀ m = 0, −B x = −B v  ⇒  x = A⁻¹Bᵀ C⁻¹ B v
    let correction = sys.solve(&DVector::zeros(v.len()), &(-bv))?.primal;
    Ok(v - correction)
}

/// Like [`admissible_initial_state`], but projects an inadmissible velocity
/// instead of rejecting it.
pub fn projected_initial_state<M, F>(model: &M, field: &F, q0: &DVector<f64>, v0: &DVector<f64>) -> Result<DynamicsState>
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    let v = project_velocity(model, field, q0, v0)?;
    DynamicsState::new(0.0, q0.clone(), v)
}
