//! Vakonomic dynamics of natural systems.
//!
//! Motions are stationary curves of the action among constraint-satisfying
//! curves, equivalently the free Euler–Lagrange equations of
//! `L(q, q̇) − λ·B(q) q̇` in the pair `(q, λ)`:
//!
//! ```text
//! A(q)(q̈ + Γ[q̇,q̇]) + ∇U − Bᵀλ̇ − λ·B′(q)q̇ + ∂/∂q(λ·B(q)q̇) = 0,     B(q) q̇ = 0
//! ```
//!
//! The latent multiplier `λ` is part of the state and its initial value is free.

use nalgebra::DVector;

use crate::error::{check_len, DynamicsError, Result};
use crate::mechanics::{
    christoffel_with, constraint_partials, directional_derivative, mass_matrix_partials, LinearConstraintField,
    MatrixPartials, MechanicalModel, VakonomicState,
};
use crate::saddle::SaddleSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct VakonomicRhsOutput {
    pub acceleration: DVector<f64>,
    pub lambda_rate: DVector<f64>,
}

fn force_terms_from(partials: &MatrixPartials, v: &DVector<f64>, lam: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    // term_a_i = Σ_α λ_α Σ_j ∂B_αi/∂q_j v_j = ((Σ_j ∂B/∂q_j v_j)ᵀ λ)_i
    let term_a = directional_derivative(partials, v).transpose() * lam;
    // term_b_i = Σ_α λ_α Σ_j ∂B_αj/∂q_i v_j = λ·(∂B/∂q_i v)
    let term_b = DVector::from_iterator(v.len(), partials.iter().map(|db| lam.dot(&(db * v))));
    (term_a, term_b)
}

/// The two covectors `λ·B′(q)q̇` and `∂/∂q(λ·B(q)q̇)` entering the vakonomic equations.
pub fn multiplier_force_terms<F>(
    field: &F,
    q: &DVector<f64>,
    v: &DVector<f64>,
    lam: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: LinearConstraintField + ?Sized,
{
    check_len("multiplier terms q", field.dim(), q.len())?;
    check_len("multiplier terms v", field.dim(), v.len())?;
    check_len("multiplier terms λ", field.rows(), lam.len())?;
    Ok(force_terms_from(&constraint_partials(field, q), v, lam))
}

/// Solves the vakonomic saddle system for `(q̈, λ̇)`.
pub fn vakonomic_rhs<M, F>(model: &M, field: &F, state: &VakonomicState) -> Result<VakonomicRhsOutput>
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    let n = model.dim();
    let VakonomicState { q, v, lam, .. } = state;
    check_len("vakonomic q", n, q.len())?;
    check_len("vakonomic v", n, v.len())?;
    check_len("constraint field dimension", n, field.dim())?;
    check_len("vakonomic λ", field.rows(), lam.len())?;

    let a_partials = mass_matrix_partials(model, q);
    let b_partials = constraint_partials(field, q);
    let (term_a, term_b) = force_terms_from(&b_partials, v, lam);

    let rhs_top = -christoffel_with(&a_partials, v, v) - model.potential_gradient(q) + term_a - term_b;
    let rhs_bottom = directional_derivative(&b_partials, v) * v;

    let sol = SaddleSystem::spd(model.mass_matrix(q), field.matrix(q))?.solve(&rhs_top, &rhs_bottom)?;
    Ok(VakonomicRhsOutput {
        acceleration: sol.primal,
        lambda_rate: sol.multiplier,
    })
}

/// Accepts any `λ₀`; the velocity must satisfy `|B(q0) v0| ≤ tolerance`.
pub fn admissible_vakonomic_initial_state<F>(
    field: &F,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    lam0: &DVector<f64>,
    tolerance: f64,
) -> Result<VakonomicState>
where
    F: LinearConstraintField + ?Sized,
{
    check_len("admissibility q", field.dim(), q0.len())?;
    check_len("admissibility v", field.dim(), v0.len())?;
    check_len("admissibility λ", field.rows(), lam0.len())?;
    let residual = (field.matrix(q0) * v0).norm();
    if residual > tolerance {
        return Err(DynamicsError::Inadmissible { residual, tolerance });
    }
    Ok(VakonomicState {
        t: 0.0,
        q: q0.clone(),
        v: v0.clone(),
        lam: lam0.clone(),
    })
}
