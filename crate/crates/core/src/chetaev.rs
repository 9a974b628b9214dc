//! General nonholonomic dynamics with Chetaev-type reactions.
//!
//! For a Lagrangian `L(t, q, q̇)` and constraint `b(t, q, q̇) = 0`:
//!
//! ```text
//! d/dt ∂L/∂q̇ − ∂L/∂q = Dᵀ μ,    D = ∂b/∂q̇
//! ```
//!
//! Differentiating `b` in time gives the saddle system
//! `S q̈ − r = Dᵀ μ`, `−D q̈ − s = 0` with `S = ∂²L/∂q̇²`,
//! `r = ∂L/∂q − (∂²L/∂q̇∂q) q̇ − ∂²L/∂q̇∂t` and `s = (∂b/∂q) q̇ + ∂b/∂t`.

use nalgebra::DVector;

use crate::error::{check_len, DynamicsError, Result};
use crate::mechanics::{DynamicsState, GeneralConstraintField, GeneralLagrangian};
use crate::saddle::SaddleSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct ChetaevRhsOutput {
    pub acceleration: DVector<f64>,
    pub multiplier: DVector<f64>,
}

pub fn chetaev_rhs<L, F>(lagrangian: &L, field: &F, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> Result<ChetaevRhsOutput>
where
    L: GeneralLagrangian + ?Sized,
    F: GeneralConstraintField + ?Sized,
{
    let n = lagrangian.dim();
    check_len("chetaev q", n, q.len())?;
    check_len("chetaev v", n, v.len())?;
    check_len("constraint field dimension", n, field.dim())?;

    let s_mat = lagrangian.velocity_hessian(t, q, v);
    let d = field.velocity_jacobian(t, q, v);
    let r = lagrangian.position_gradient(t, q, v)
        - lagrangian.mixed_hessian(t, q, v) * v
        - lagrangian.velocity_time_derivative(t, q, v);
    let s = field.position_jacobian(t, q, v) * v + field.time_derivative(t, q, v);

    let sol = SaddleSystem::general(s_mat, d)?.solve(&r, &s)?;
    Ok(ChetaevRhsOutput {
        acceleration: sol.primal,
        multiplier: sol.multiplier,
    })
}

/// Accepts `(t0, q0, v0)` when `|b(t0, q0, v0)| ≤ tolerance`.
pub fn admissible_general_initial_state<F>(
    field: &F,
    t0: f64,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    tolerance: f64,
) -> Result<DynamicsState>
where
    F: GeneralConstraintField + ?Sized,
{
    check_len("admissibility q", field.dim(), q0.len())?;
    check_len("admissibility v", field.dim(), v0.len())?;
    let residual = field.value(t0, q0, v0).norm();
    if residual > tolerance {
        return Err(DynamicsError::Inadmissible { residual, tolerance });
    }
    DynamicsState::new(t0, q0.clone(), v0.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::{LinearAsGeneral, NaturalLagrangian};
    use crate::models::{FrictionSkate, Skate, SkateConstraint};
    use crate::nonholonomic::nonholonomic_rhs;
    use nalgebra::{dvector, DMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn friction_skate_at_origin() {
        let (w, k) = (1.4, 0.7);
        let out = chetaev_rhs(
            &FrictionSkate::new(k).unwrap(),
            &LinearAsGeneral(&SkateConstraint),
            0.0,
            &dvector![0.0, 0.0, 0.0],
            &dvector![0.0, 0.0, w],
        )
        .unwrap();
        assert!((out.acceleration - dvector![1.0, 0.0, -k * w]).amax() < 1e-15);
        assert!(out.multiplier[0].abs() < 1e-15);
    }

    #[test]
    fn friction_is_time_dependent_only_through_scaling() {
        // φ̈ = −kφ̇ at any time
        let k = 0.5;
        let q = dvector![0.2, 0.1, 0.8];
        let v = dvector![0.3 * 0.8f64.cos(), 0.3 * 0.8f64.sin(), 2.0];
        for t in [0.0, 1.0, 7.5] {
            let out = chetaev_rhs(&FrictionSkate::new(k).unwrap(), &LinearAsGeneral(&SkateConstraint), t, &q, &v).unwrap();
            assert!((out.acceleration[2] + k * 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_specialization_matches_nonholonomic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let phi: f64 = rng.random_range(-4.0..4.0);
            let speed: f64 = rng.random_range(-2.0..2.0);
            let q = dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), phi];
            let v = dvector![speed * phi.cos(), speed * phi.sin(), rng.random_range(-2.0..2.0)];
            let general = chetaev_rhs(&NaturalLagrangian(&Skate), &LinearAsGeneral(&SkateConstraint), 0.0, &q, &v).unwrap();
            let natural = nonholonomic_rhs(&Skate, &SkateConstraint, &q, &v).unwrap();
            assert!((general.acceleration - natural.acceleration).amax() < 1e-10);
            assert!((general.multiplier - natural.multiplier).amax() < 1e-10);
        }
    }

    /// `L = ½|q̇|² + q̇₁ q₂` (magnetic-like), constraint `b = q̇₁`.
    struct Gyro;

    impl GeneralLagrangian for Gyro {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
            0.5 * v.norm_squared() + v[0] * q[1]
        }
        fn velocity_gradient(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            dvector![v[0] + q[1], v[1]]
        }
        fn position_gradient(&self, _t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            dvector![0.0, v[0]]
        }
        fn velocity_hessian(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(2, 2)
        }
        fn mixed_hessian(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
        }
        fn velocity_time_derivative(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(2)
        }
    }

    struct FirstVelocity;

    impl GeneralConstraintField for FirstVelocity {
        fn dim(&self) -> usize {
            2
        }
        fn rows(&self) -> usize {
            1
        }
        fn value(&self, _t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            dvector![v[0]]
        }
        fn velocity_jacobian(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
        }
        fn position_jacobian(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, 2)
        }
        fn time_derivative(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(1)
        }
    }

    #[test]
    fn velocity_constraint_pins_first_acceleration() {
        let out = chetaev_rhs(&Gyro, &FirstVelocity, 0.0, &dvector![0.3, -0.2], &DVector::zeros(2)).unwrap();
        assert_eq!(out.acceleration[0], 0.0);
        // bottom row: D q̈ + (∂b/∂q) v + ∂b/∂t = 0
        let v = dvector![0.0, 1.5];
        let out = chetaev_rhs(&Gyro, &FirstVelocity, 0.0, &dvector![0.3, -0.2], &v).unwrap();
        assert!(out.acceleration[0].abs() < 1e-15);
        // q̈₂ = ∂L/∂q₂ − (mixed·v)₂ = v₁ = 0
        assert!(out.acceleration[1].abs() < 1e-15);
    }

    /// Velocity-nonlinear constraint `b = q̇₁² + q̇₂² − 1` on the free plane (N = 3, third coordinate free).
    struct UnitSpeed;

    impl GeneralConstraintField for UnitSpeed {
        fn dim(&self) -> usize {
            3
        }
        fn rows(&self) -> usize {
            1
        }
        fn value(&self, _t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            dvector![v[0] * v[0] + v[1] * v[1] - 1.0]
        }
        fn velocity_jacobian(&self, _t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 3, &[2.0 * v[0], 2.0 * v[1], 0.0])
        }
        fn position_jacobian(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, 3)
        }
        fn time_derivative(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(1)
        }
    }

    #[test]
    fn nonlinear_constraint_row_holds() {
        let lag = NaturalLagrangian(&Skate);
        let q = dvector![0.1, 0.2, 0.3];
        let v = dvector![0.6, 0.8, -0.4];
        let out = chetaev_rhs(&lag, &UnitSpeed, 0.0, &q, &v).unwrap();
        let d = UnitSpeed.velocity_jacobian(0.0, &q, &v);
        assert!((d * &out.acceleration).amax() < 1e-12);
        // the rotation coordinate feels neither potential nor reaction
        assert!(out.acceleration[2].abs() < 1e-15);
    }

    #[test]
    fn degenerate_velocity_jacobian_is_reported() {
        let lag = NaturalLagrangian(&Skate);
        let err = chetaev_rhs(&lag, &UnitSpeed, 0.0, &DVector::zeros(3), &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, DynamicsError::Degenerate { .. }));
    }

    #[test]
    fn general_admissibility() {
        let f = LinearAsGeneral(&SkateConstraint);
        assert!(admissible_general_initial_state(&f, 0.0, &dvector![0.0, 0.0, 0.0], &dvector![0.0, 0.0, 1.0], 1e-12).is_ok());
        assert!(admissible_general_initial_state(&UnitSpeed, 0.0, &DVector::zeros(3), &DVector::zeros(3), 1e-12).is_err());
    }
}
