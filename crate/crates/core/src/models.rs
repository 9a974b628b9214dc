//! The skate on an inclined plane and its closed-form motions.
//!
//! Coordinates are `(x, y, φ)`: `x` points down the slope, `y` is horizontal
//! and `φ` is the angle between the blade and the `x` axis. With unit mass and
//! inertia the Lagrangian is `½(ẋ² + ẏ² + φ̇²) + x`, so the potential stored on
//! the model is `U = −x`. The blade cannot slip sideways:
//! `ẋ sin φ − ẏ cos φ = 0`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{dvector, DMatrix, DVector};

use crate::error::{DynamicsError, Result};
use crate::integrator::{integrate_first_order, IntegratorConfig, PhasePoint, StepMode};
use crate::mechanics::{GeneralLagrangian, LinearConstraintField, MatrixPartials, MechanicalModel};

/// Default tolerance of [`friction_skate_closed_form`].
pub const DEFAULT_QUADRATURE_TOLERANCE: f64 = 1e-10;
/// Distance from `π/2 + mπ` below which `w/k` counts as a resonant limit angle.
pub const RESONANCE_TOLERANCE: f64 = 1e-12;

/// Skate on the inclined plane with `A = I₃` and `U = −x`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Skate;

impl MechanicalModel for Skate {
    fn dim(&self) -> usize {
        3
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }

    fn mass_matrix_derivative(&self, _q: &DVector<f64>) -> Option<MatrixPartials> {
        Some(vec![DMatrix::zeros(3, 3); 3])
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        -q[0]
    }

    fn potential_gradient(&self, _q: &DVector<f64>) -> DVector<f64> {
        dvector![-1.0, 0.0, 0.0]
    }

    fn name(&self) -> &str {
        "skate"
    }
}

/// Blade constraint `B(φ) = (sin φ, −cos φ, 0)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkateConstraint;

impl LinearConstraintField for SkateConstraint {
    fn dim(&self) -> usize {
        3
    }

    fn rows(&self) -> usize {
        1
    }

    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = q[2].sin_cos();
        DMatrix::from_row_slice(1, 3, &[s, -c, 0.0])
    }

    fn matrix_derivative(&self, q: &DVector<f64>) -> Option<MatrixPartials> {
        let (s, c) = q[2].sin_cos();
        Some(vec![
            DMatrix::zeros(1, 3),
            DMatrix::zeros(1, 3),
            DMatrix::from_row_slice(1, 3, &[c, s, 0.0]),
        ])
    }
}

/// Skate whose rotational inertia grows as `e^{kt}`:
/// `L = ½(ẋ² + ẏ² + e^{kt} φ̇²) + x`, which damps the spin as `φ̈ = −k φ̇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionSkate {
    k: f64,
}

impl FrictionSkate {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(DynamicsError::Usage(format!("friction rate k must be positive, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

impl GeneralLagrangian for FrictionSkate {
    fn dim(&self) -> usize {
        3
    }

    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * (v[0] * v[0] + v[1] * v[1] + (self.k * t).exp() * v[2] * v[2]) + q[0]
    }

    fn velocity_gradient(&self, t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        dvector![v[0], v[1], (self.k * t).exp() * v[2]]
    }

    fn position_gradient(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        dvector![1.0, 0.0, 0.0]
    }

    fn velocity_hessian(&self, t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&dvector![1.0, 1.0, (self.k * t).exp()])
    }

    fn mixed_hessian(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }

    fn velocity_time_derivative(&self, t: f64, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        dvector![0.0, 0.0, self.k * (self.k * t).exp() * v[2]]
    }

    fn name(&self) -> &str {
        "friction_skate"
    }
}

/// Scenario parameters of the skate family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkateParams {
    /// Initial spin `φ̇(0)` of the cycloid start.
    pub w: f64,
    /// Friction rate of the rotational damping.
    pub k: f64,
    /// Initial lateral speed `ẏ(0)` of the sideways start.
    pub y_dot0: f64,
    /// Initial latent multiplier `λ(0)`.
    pub lambda0: f64,
}

impl Default for SkateParams {
    fn default() -> Self {
        Self {
            w: 1.0,
            k: 1.0,
            y_dot0: 0.0,
            lambda0: 0.0,
        }
    }
}

/// Start `(0, 0, 0)` with velocity `(0, 0, w)`; `lam` has length `latent`.
pub fn cycloid_start(w: f64, latent: Option<f64>) -> PhasePoint {
    PhasePoint {
        t: 0.0,
        q: DVector::zeros(3),
        v: dvector![0.0, 0.0, w],
        lam: latent.map(|l| dvector![l]).unwrap_or_else(|| DVector::zeros(0)),
    }
}

/// Start `(0, 0, π/2)` with velocity `(0, ẏ₀, 0)`.
pub fn lateral_start(y_dot0: f64, latent: Option<f64>) -> PhasePoint {
    PhasePoint {
        t: 0.0,
        q: dvector![0.0, 0.0, FRAC_PI_2],
        v: dvector![0.0, y_dot0, 0.0],
        lam: latent.map(|l| dvector![l]).unwrap_or_else(|| DVector::zeros(0)),
    }
}

/// Nonholonomic motion from the cycloid start:
/// `x = sin²(wt)/(2w²)`, `y = (wt − ½ sin 2wt)/(2w²)`, `φ = wt`.
pub fn skate_cycloid(w: f64, t: f64) -> Result<(f64, f64, f64)> {
    if w == 0.0 {
        return Err(DynamicsError::Usage(
            "cycloid needs nonzero spin w; the w = 0 motion is the uniform line".into(),
        ));
    }
    let wt = w * t;
    let scale = 0.5 / (w * w);
    Ok((scale * wt.sin().powi(2), scale * (wt - 0.5 * (2.0 * wt).sin()), wt))
}

/// Nonholonomic motion from the sideways start: `(0, ẏ₀ t, π/2)`.
pub fn skate_uniform_line(y_dot0: f64, t: f64) -> (f64, f64, f64) {
    (0.0, y_dot0 * t, FRAC_PI_2)
}

/// Vakonomic rest state at `φ = π/2`, where `λ` runs backwards in time:
/// `(0, 0, π/2, λ₀ − t)`.
pub fn vakonomic_equilibrium(lambda0: f64, t: f64) -> (f64, f64, f64, f64) {
    (0.0, 0.0, FRAC_PI_2, lambda0 - t)
}

/// One term `coefficient · tᵒʳᵈᵉʳ` of a Taylor expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorTerm {
    pub order: u32,
    pub coefficient: f64,
}

/// Leading nonconstant Taylor terms of the vakonomic skate from the sideways start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadingTerms {
    pub x: TaylorTerm,
    pub y: TaylorTerm,
    pub phi_constant: f64,
    pub phi: TaylorTerm,
}

/// For `λ₀ ≠ 0`: `x ≈ λ₀ẏ₀² t³/6`, `φ ≈ π/2 − λ₀ẏ₀ t²/2`.
/// For `λ₀ = 0`: `x ≈ −ẏ₀² t⁴/24`, `φ ≈ π/2 + ẏ₀ t³/6`. In both cases `y ≈ ẏ₀ t`.
pub fn vakonomic_leading_terms(lambda0: f64, y_dot0: f64) -> Result<LeadingTerms> {
    if y_dot0 == 0.0 {
        return Err(DynamicsError::Usage(
            "leading terms need nonzero lateral speed; ẏ₀ = 0 is the vakonomic equilibrium".into(),
        ));
    }
    let y = TaylorTerm {
        order: 1,
        coefficient: y_dot0,
    };
    let (x, phi) = if lambda0 != 0.0 {
        (
            TaylorTerm {
                order: 3,
                coefficient: lambda0 * y_dot0 * y_dot0 / 6.0,
            },
            TaylorTerm {
                order: 2,
                coefficient: -lambda0 * y_dot0 / 2.0,
            },
        )
    } else {
        (
            TaylorTerm {
                order: 4,
                coefficient: -y_dot0 * y_dot0 / 24.0,
            },
            TaylorTerm {
                order: 3,
                coefficient: y_dot0 / 6.0,
            },
        )
    };
    Ok(LeadingTerms {
        x,
        y,
        phi_constant: FRAC_PI_2,
        phi,
    })
}

/// Long-time behavior of `x(t)` for the damped skate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitClass {
    Diverges,
    ConvergesToPositiveLimit,
}

impl LimitClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LimitClass::Diverges => "diverges",
            LimitClass::ConvergesToPositiveLimit => "converges_to_positive_limit",
        }
    }
}

/// The integer `m` with `w/k = π/2 + mπ` (within [`RESONANCE_TOLERANCE`]), if any.
fn resonance(limit_angle: f64) -> Option<i64> {
    let m = ((limit_angle - FRAC_PI_2) / PI).round();
    let target = FRAC_PI_2 + m * PI;
    ((limit_angle - target).abs() <= RESONANCE_TOLERANCE * target.abs().max(1.0)).then_some(m as i64)
}

fn check_friction(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(DynamicsError::Usage(format!("friction rate k must be positive, got {k}")));
    }
    Ok(())
}

/// `x(t) → ∞` unless the limit angle `w/k` lies in `{π/2 + mπ}`, in which case
/// `x` tends to a finite positive value.
pub fn friction_skate_limit_class(w: f64, k: f64) -> Result<LimitClass> {
    check_friction(k)?;
    Ok(match resonance(w / k) {
        Some(_) => LimitClass::ConvergesToPositiveLimit,
        None => LimitClass::Diverges,
    })
}

/// `φ(t) = (w/k)(1 − e^{−kt})` of the damped skate.
pub fn friction_skate_angle(w: f64, k: f64, t: f64) -> f64 {
    (w / k) * (-(-k * t).exp_m1())
}

/// `(cos φ(τ), sin φ(τ))`. At a resonant limit angle the limit is taken as exactly
/// `π/2 + mπ` and the trigonometric functions are evaluated from the remaining
/// gap `δ = (w/k) e^{−kτ}`, which keeps their relative accuracy as `δ → 0`.
fn friction_trig(w: f64, k: f64, tau: f64) -> (f64, f64) {
    let limit = w / k;
    match resonance(limit) {
        Some(m) => {
            let gap = limit * (-k * tau).exp();
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            // cos(π/2 + mπ − δ) = (−1)^m sin δ, sin(π/2 + mπ − δ) = (−1)^m cos δ
            (sign * gap.sin(), sign * gap.cos())
        }
        None => {
            let phi = friction_skate_angle(w, k, tau);
            (phi.cos(), phi.sin())
        }
    }
}

fn quadrature_config(span: f64, tolerance: f64) -> IntegratorConfig {
    IntegratorConfig {
        dt: (span.abs() / 16.0).clamp(1e-6, 0.05),
        t_end: span,
        mode: StepMode::StepDoubling { rel_tol: tolerance },
        sample_stride: 1,
    }
}

/// `(I(t), Y(t))` with `I = ∫₀ᵗ cos φ` and `Y = ∫₀ᵗ sin φ(ξ) I(ξ) dξ`, integrated as
/// an auxiliary ODE.
fn friction_integrals(w: f64, k: f64, t: f64, tolerance: f64) -> Result<(f64, f64)> {
    if t == 0.0 {
        return Ok((0.0, 0.0));
    }
    let rhs = |tau: f64, z: &DVector<f64>| {
        let (c, s) = friction_trig(w, k, tau);
        Ok(dvector![c, s * z[0]])
    };
    let mut config = quadrature_config(t, tolerance);
    config.t_end = t;
    let z = integrate_first_order(rhs, 0.0, DVector::zeros(2), &config)?;
    Ok((z[0], z[1]))
}

/// Closed-form motion of the damped skate from the cycloid start:
/// `φ = (w/k)(1 − e^{−kt})`, `x = ½(∫₀ᵗ cos φ)²`,
/// `y = ∫₀ᵗ sin φ(ξ) ∫₀^ξ cos φ(τ) dτ dξ`.
pub fn friction_skate_closed_form(w: f64, k: f64, t: f64, quadrature_tolerance: f64) -> Result<(f64, f64, f64)> {
    check_friction(k)?;
    if !(quadrature_tolerance > 0.0) {
        return Err(DynamicsError::Usage(format!(
            "quadrature tolerance must be positive, got {quadrature_tolerance}"
        )));
    }
    let (i, y) = friction_integrals(w, k, t, quadrature_tolerance)?;
    Ok((0.5 * i * i, y, friction_skate_angle(w, k, t)))
}

/// `x(b) − x(a)` of the damped skate, evaluated as `½ ΔI (2 I(a) + ΔI)` with
/// `ΔI = ∫ₐᵇ cos φ` integrated directly and rescaled by the integrand at `a`,
/// so that increments far below the resolution of `x` itself keep their
/// relative accuracy.
pub fn friction_skate_x_increment(w: f64, k: f64, a: f64, b: f64, tolerance: f64) -> Result<f64> {
    check_friction(k)?;
    let (i_a, _) = friction_integrals(w, k, a, tolerance)?;
    let (c_a, _) = friction_trig(w, k, a);
    let scale = if c_a != 0.0 { c_a.abs() } else { 1.0 };
    let rhs = |tau: f64, z: &DVector<f64>| {
        let _ = z;
        Ok(dvector![friction_trig(w, k, tau).0 / scale])
    };
    let config = IntegratorConfig {
        t_end: b,
        ..quadrature_config(b - a, tolerance)
    };
    let delta = integrate_first_order(rhs, a, DVector::zeros(1), &config)?[0] * scale;
    Ok(0.5 * delta * (2.0 * i_a + delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::{constraint_residual, validate_model};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn skate_validates() {
        let pts = [dvector![0.0, 0.0, 0.0], dvector![0.0, 0.0, FRAC_PI_2], dvector![1.0, 2.0, FRAC_PI_4]];
        let report = validate_model(&Skate, &SkateConstraint, &pts);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn skate_basic_values() {
        let r = constraint_residual(&SkateConstraint, &dvector![0.0, 0.0, FRAC_PI_4], &dvector![1.0, 1.0, 0.0]).unwrap();
        assert!(r[0].abs() < 1e-15);
        assert_eq!(Skate.potential_gradient(&dvector![3.0, -1.0, 0.2]), dvector![-1.0, 0.0, 0.0]);
        let r = constraint_residual(&SkateConstraint, &dvector![0.0, 0.0, FRAC_PI_2], &dvector![1.0, 0.0, 0.0]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cycloid_values() {
        assert_eq!(skate_cycloid(1.0, 0.0).unwrap(), (0.0, 0.0, 0.0));
        let (x, y, phi) = skate_cycloid(1.0, FRAC_PI_2).unwrap();
        assert!((x - 0.5).abs() < 1e-15 && (y - FRAC_PI_4).abs() < 1e-15 && phi == FRAC_PI_2);
        let (x, _, phi) = skate_cycloid(2.0, PI).unwrap();
        assert!(x.abs() < 1e-15);
        assert_eq!(phi, 2.0 * PI);
        assert!(skate_cycloid(0.0, 1.0).is_err());
    }

    #[test]
    fn cycloid_stays_in_band() {
        for w in [0.5, 1.0, 2.0, -3.0] {
            let bound = 0.5 / (w * w);
            for i in 0..1000 {
                let (x, _, _) = skate_cycloid(w, 0.013 * i as f64).unwrap();
                assert!((0.0..=bound).contains(&x));
            }
        }
    }

    #[test]
    fn uniform_line_and_equilibrium() {
        assert_eq!(skate_uniform_line(0.0, 5.0), (0.0, 0.0, FRAC_PI_2));
        assert_eq!(skate_uniform_line(1.0, 2.0), (0.0, 2.0, FRAC_PI_2));
        assert_eq!(skate_uniform_line(-3.0, 1.0), (0.0, -3.0, FRAC_PI_2));
        assert_eq!(vakonomic_equilibrium(0.0, 0.0), (0.0, 0.0, FRAC_PI_2, 0.0));
        assert_eq!(vakonomic_equilibrium(5.0, 3.0), (0.0, 0.0, FRAC_PI_2, 2.0));
        assert_eq!(vakonomic_equilibrium(0.0, -1.0), (0.0, 0.0, FRAC_PI_2, 1.0));
    }

    #[test]
    fn leading_terms() {
        let lt = vakonomic_leading_terms(1.0, 1.0).unwrap();
        assert_eq!((lt.x.order, lt.phi.order, lt.y.order), (3, 2, 1));
        assert!((lt.x.coefficient - 1.0 / 6.0).abs() < 1e-15);
        assert!((lt.phi.coefficient + 0.5).abs() < 1e-15);

        let lt = vakonomic_leading_terms(0.0, 1.0).unwrap();
        assert_eq!((lt.x.order, lt.phi.order), (4, 3));
        assert!((lt.x.coefficient + 1.0 / 24.0).abs() < 1e-15);
        assert!((lt.phi.coefficient - 1.0 / 6.0).abs() < 1e-15);

        assert!((vakonomic_leading_terms(2.0, 3.0).unwrap().x.coefficient - 3.0).abs() < 1e-15);
        assert!(vakonomic_leading_terms(1.0, 0.0).is_err());
    }

    #[test]
    fn limit_classes() {
        assert_eq!(friction_skate_limit_class(1.0, 1.0).unwrap(), LimitClass::Diverges);
        assert_eq!(friction_skate_limit_class(FRAC_PI_2, 1.0).unwrap(), LimitClass::ConvergesToPositiveLimit);
        assert_eq!(friction_skate_limit_class(3.0 * FRAC_PI_2, 1.0).unwrap(), LimitClass::ConvergesToPositiveLimit);
        assert_eq!(friction_skate_limit_class(-FRAC_PI_2, 1.0).unwrap(), LimitClass::ConvergesToPositiveLimit);
        assert_eq!(friction_skate_limit_class(PI, 2.0).unwrap(), LimitClass::ConvergesToPositiveLimit);
        assert!(friction_skate_limit_class(1.0, 0.0).is_err());
    }

    #[test]
    fn friction_closed_form_basics() {
        assert_eq!(friction_skate_closed_form(1.3, 0.4, 0.0, 1e-10).unwrap(), (0.0, 0.0, 0.0));
        let (_, _, phi) = friction_skate_closed_form(1.0, 1.0, 40.0, 1e-10).unwrap();
        assert!((phi - 1.0).abs() < 1e-15);
        assert!(friction_skate_closed_form(1.0, -1.0, 1.0, 1e-10).is_err());
    }

    /// Composite Simpson reference for `∫₀ᵗ cos φ` and the nested `y` integral.
    fn simpson_reference(w: f64, k: f64, t: f64, n: usize) -> (f64, f64) {
        let h = t / n as f64;
        let phi = |tau: f64| (w / k) * (1.0 - (-k * tau).exp());
        // I on the grid by cumulative Simpson over half-steps
        let mut i_grid = vec![0.0; n + 1];
        for j in 0..n {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            i_grid[j + 1] = i_grid[j] + h / 6.0 * (phi(a).cos() + 4.0 * phi(0.5 * (a + b)).cos() + phi(b).cos());
        }
        let mut y = 0.0;
        for j in 0..n {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            let m = 0.5 * (a + b);
            let i_mid = i_grid[j] + h / 12.0 * (phi(a).cos() + 4.0 * phi(0.5 * (a + m)).cos() + phi(m).cos());
            y += h / 6.0 * (phi(a).sin() * i_grid[j] + 4.0 * phi(m).sin() * i_mid + phi(b).sin() * i_grid[j + 1]);
        }
        (0.5 * i_grid[n] * i_grid[n], y)
    }

    #[test]
    fn friction_closed_form_matches_simpson() {
        for (w, k, t) in [(1.0, 1.0, 2.0), (2.5, 0.3, 7.0), (FRAC_PI_2, 1.0, 5.0)] {
            let (x, y, _) = friction_skate_closed_form(w, k, t, 1e-12).unwrap();
            let (xr, yr) = simpson_reference(w, k, t, 20_000);
            assert!((x - xr).abs() < 1e-9, "x {x} vs {xr}");
            assert!((y - yr).abs() < 1e-9, "y {y} vs {yr}");
        }
    }

    #[test]
    fn increments_agree_with_differences() {
        let (x2, _, _) = friction_skate_closed_form(1.0, 1.0, 2.0, 1e-11).unwrap();
        let (x5, _, _) = friction_skate_closed_form(1.0, 1.0, 5.0, 1e-11).unwrap();
        let inc = friction_skate_x_increment(1.0, 1.0, 2.0, 5.0, 1e-11).unwrap();
        assert!((inc - (x5 - x2)).abs() < 1e-8 * (1.0 + x5));
    }

    #[test]
    fn resonant_increments_decay_geometrically() {
        let early = friction_skate_x_increment(FRAC_PI_2, 1.0, 5.0, 10.0, 1e-10).unwrap();
        let late = friction_skate_x_increment(FRAC_PI_2, 1.0, 10.0, 20.0, 1e-10).unwrap();
        assert!(early > 0.0 && late > 0.0);
        // ΔI ≈ (π/2)(e^{−a} − e^{−b}) to leading order
        let predicted = |a: f64, b: f64| FRAC_PI_2 * ((-a).exp() - (-b).exp());
        let i_inf = friction_skate_closed_form(FRAC_PI_2, 1.0, 60.0, 1e-10).unwrap().0.sqrt() * 2f64.sqrt();
        assert!((late / (i_inf * predicted(10.0, 20.0)) - 1.0).abs() < 1e-3);
        assert!(late < 0.1 * early);
    }
}
