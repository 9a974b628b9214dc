use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{dvector, DVector};
use proptest::prelude::*;
use vako_core::integrator::{
    integrate, monitor_first_integrals, reversibility_roundtrip, ChetaevSystem, IntegratorConfig, NonholonomicSystem,
    PhasePoint, VakonomicSystem,
};
use vako_core::mechanics::LinearAsGeneral;
use vako_core::models::{
    cycloid_start, friction_skate_angle, friction_skate_closed_form, lateral_start, FrictionSkate, Skate, SkateConstraint,
};
use vako_core::nonholonomic::nonholonomic_rhs;
use vako_core::vakonomic::vakonomic_rhs;
use vako_core::LinearConstraintField;

fn admissible(phi: f64, speed: f64, spin: f64) -> (DVector<f64>, DVector<f64>) {
    (dvector![0.3, -0.7, phi], dvector![speed * phi.cos(), speed * phi.sin(), spin])
}

#[test]
fn cycloid_solves_the_reduced_equations() {
    for w in [0.5, 1.0, 2.0] {
        for i in 0..50 {
            let t = 0.2 * i as f64;
            let a = w * t;
            let q = dvector![a.sin().powi(2) / (2.0 * w * w), (a - 0.5 * (2.0 * a).sin()) / (2.0 * w * w), a];
            let v = dvector![a.sin() * a.cos() / w, a.sin().powi(2) / w, w];
            let acc = dvector![(2.0 * a).cos(), (2.0 * a).sin(), 0.0];
            let out = nonholonomic_rhs(&Skate, &SkateConstraint, &q, &v).unwrap();
            assert!((out.acceleration - acc).amax() < 1e-10, "w = {w}, t = {t}");
        }
    }
}

#[test]
fn uniform_line_is_a_nonholonomic_motion() {
    let sys = NonholonomicSystem::new(&Skate, &SkateConstraint);
    let traj = integrate(&sys, &lateral_start(-1.5, None), &IntegratorConfig::fixed(1e-2, 3.0)).unwrap();
    for s in &traj.samples {
        assert!(s.q[0].abs() < 1e-14);
        assert!((s.q[1] + 1.5 * s.t).abs() < 1e-12);
        assert!((s.q[2] - FRAC_PI_2).abs() < 1e-15);
    }
}

#[test]
fn friction_quadrature_matches_integration() {
    let lagrangian = FrictionSkate::new(1.0).unwrap();
    let field = LinearAsGeneral(&SkateConstraint);
    let traj = integrate(&ChetaevSystem::new(&lagrangian, &field), &cycloid_start(1.0, None), &IntegratorConfig::fixed(1e-3, 2.0))
        .unwrap();
    let end = traj.last();
    let (x, y, phi) = friction_skate_closed_form(1.0, 1.0, 2.0, 1e-10).unwrap();
    assert!((end.q[0] - x).abs() < 1e-7);
    assert!((end.q[1] - y).abs() < 1e-7);
    assert!((end.q[2] - phi).abs() < 1e-12);
}

#[test]
fn vakonomic_lambda_counts_down_backwards_too() {
    let sys = VakonomicSystem::new(&Skate, &SkateConstraint);
    let traj = integrate(&sys, &lateral_start(0.0, Some(2.0)), &IntegratorConfig::fixed(1e-2, -3.0)).unwrap();
    assert!((traj.last().extra[0] - 5.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nonholonomic_preserves_energy_and_constraint(phi in -PI..PI, speed in -2.0..2.0f64, spin in -3.0..3.0f64) {
        let (q, v) = admissible(phi, speed, spin);
        let start = PhasePoint { t: 0.0, q, v, lam: DVector::zeros(0) };
        let traj = integrate(&NonholonomicSystem::new(&Skate, &SkateConstraint), &start, &IntegratorConfig::fixed(1e-3, 1.0)).unwrap();
        let m = monitor_first_integrals(&traj, &Skate, &SkateConstraint);
        prop_assert!(m.energy_drift <= 1e-9 * (1.0 + m.energy[0].abs()));
        prop_assert!(m.constraint_drift <= 1e-9);
    }

    #[test]
    fn vakonomic_preserves_energy_and_constraint(phi in -PI..PI, speed in -2.0..2.0f64, spin in -2.0..2.0f64, lam in -2.0..2.0f64) {
        let (q, v) = admissible(phi, speed, spin);
        let start = PhasePoint { t: 0.0, q, v, lam: dvector![lam] };
        let traj = integrate(&VakonomicSystem::new(&Skate, &SkateConstraint), &start, &IntegratorConfig::fixed(1e-3, 1.0)).unwrap();
        let m = monitor_first_integrals(&traj, &Skate, &SkateConstraint);
        prop_assert!(m.energy_drift <= 1e-8 * (1.0 + m.energy[0].abs()));
        prop_assert!(m.constraint_drift <= 1e-8);
    }

    #[test]
    fn round_trips_return_to_the_flipped_start(phi in -PI..PI, speed in -1.5..1.5f64, spin in -2.0..2.0f64, lam in -1.0..1.0f64) {
        let (q, v) = admissible(phi, speed, spin);
        let config = IntegratorConfig::fixed(1e-3, 0.0);
        let start = PhasePoint { t: 0.0, q: q.clone(), v: v.clone(), lam: DVector::zeros(0) };
        let e = reversibility_roundtrip(&NonholonomicSystem::new(&Skate, &SkateConstraint), &start, 1.0, &config).unwrap();
        prop_assert!(e.max() <= 1e-9);
        let start = PhasePoint { t: 0.0, q, v, lam: dvector![lam] };
        let e = reversibility_roundtrip(&VakonomicSystem::new(&Skate, &SkateConstraint), &start, 0.5, &config).unwrap();
        prop_assert!(e.max() <= 1e-9);
    }

    #[test]
    fn accelerations_keep_the_constraint_derivative_zero(phi in -PI..PI, speed in -2.0..2.0f64, spin in -3.0..3.0f64, lam in -3.0..3.0f64) {
        let (q, v) = admissible(phi, speed, spin);
        // d/dt (B q̇) = B q̈ + φ̇ (ẋ cos φ + ẏ sin φ)
        let drift = |acc: &DVector<f64>| (SkateConstraint.matrix(&q) * acc)[0] + v[2] * (v[0] * phi.cos() + v[1] * phi.sin());
        let nh = nonholonomic_rhs(&Skate, &SkateConstraint, &q, &v).unwrap();
        prop_assert!(drift(&nh.acceleration).abs() <= 1e-12);
        let state = vako_core::mechanics::VakonomicState { t: 0.0, q: q.clone(), v: v.clone(), lam: dvector![lam] };
        let vk = vakonomic_rhs(&Skate, &SkateConstraint, &state).unwrap();
        prop_assert!(drift(&vk.acceleration).abs() <= 1e-12);
    }

    #[test]
    fn friction_angle_solves_its_damping_law(w in -3.0..3.0f64, k in 0.1..3.0f64, t in 0.0..10.0f64) {
        let h = 1e-4;
        let f = |s: f64| friction_skate_angle(w, k, s);
        let first = (f(t + h) - f(t - h)) / (2.0 * h);
        let second = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
        prop_assert!((second + k * first).abs() <= 1e-5 * (1.0 + w.abs()));
        prop_assert!((first - w * (-k * t).exp()).abs() <= 1e-7 * (1.0 + w.abs()));
    }
}
