//! Mechanical-system data model.
//!
//! A natural system is described by a configuration-dependent mass matrix
//! `A(q)` and a potential `U(q)`, giving the Lagrangian
//!
//! ```text
//! L(q, q̇) = ½ q̇·A(q) q̇ − U(q)
//! ```
//!
//! Velocity constraints are either linear, `B(q) q̇ = 0`, or general,
//! `b(t, q, q̇) = 0`. Derivative callbacks are optional on the natural-system
//! traits; when absent they are replaced by central finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, DynamicsError, Result};

/// Partial derivatives of a matrix-valued function of `q`: entry `k` holds `∂M/∂q_k`.
pub type MatrixPartials = Vec<DMatrix<f64>>;

/// Symmetry defect allowed for the mass matrix, relative to `1 + max|A|`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Relative singular-value floor below which `B(q)` or `D` counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Relative agreement required between analytic derivatives and finite differences.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-5;

/// Phase point `(t, q, q̇)` of a constrained system.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsState {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl DynamicsState {
    pub fn new(t: f64, q: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(DynamicsError::Usage("configuration dimension must be at least 1".into()));
        }
        check_len("DynamicsState velocity", q.len(), v.len())?;
        Ok(Self { t, q, v })
    }
}

/// Phase point `(t, q, q̇, λ)` of the vakonomic system; `λ` is the latent multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct VakonomicState {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub lam: DVector<f64>,
}

/// A natural mechanical system: mass matrix and potential.
pub trait MechanicalModel: Send + Sync {
    fn dim(&self) -> usize;

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Analytic `∂A/∂q_k`, if available.
    fn mass_matrix_derivative(&self, _q: &DVector<f64>) -> Option<MatrixPartials> {
        None
    }

    fn potential(&self, q: &DVector<f64>) -> f64;

    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64>;

    fn name(&self) -> &str {
        "custom"
    }
}

/// A linear velocity constraint `B(q) q̇ = 0` with `B` of shape `rows × dim`.
pub trait LinearConstraintField: Send + Sync {
    fn dim(&self) -> usize;

    fn rows(&self) -> usize;

    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Analytic `∂B/∂q_k`, if available.
    fn matrix_derivative(&self, _q: &DVector<f64>) -> Option<MatrixPartials> {
        None
    }
}

/// A general constraint `b(t, q, q̇) = 0` together with its partial derivatives.
pub trait GeneralConstraintField: Send + Sync {
    fn dim(&self) -> usize;

    fn rows(&self) -> usize;

    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// `D = ∂b/∂q̇`.
    fn velocity_jacobian(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;

    /// `∂b/∂q`.
    fn position_jacobian(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;

    /// `∂b/∂t`.
    fn time_derivative(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

/// A general, possibly time-dependent Lagrangian `L(t, q, q̇)` with the
/// derivatives needed to put the constrained Euler–Lagrange equation in normal form.
pub trait GeneralLagrangian: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64;

    /// `∂L/∂q̇`.
    fn velocity_gradient(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// `∂L/∂q`.
    fn position_gradient(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// `S = ∂²L/∂q̇²`.
    fn velocity_hessian(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;

    /// Matrix with entries `∂²L/∂q̇_i∂q_j`.
    fn mixed_hessian(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;

    /// `∂²L/∂q̇∂t`.
    fn velocity_time_derivative(&self, t: f64, q: &DVector<f64>, v: &DVector<f64>)
        -> DVector<f64>;

    fn name(&self) -> &str {
        "custom"
    }
}

/// Central-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

fn fd_partials<F>(q: &DVector<f64>, f: F) -> MatrixPartials
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    (0..q.len())
        .map(|k| {
            let h = fd_step(q[k]);
            let mut plus = q.clone();
            let mut minus = q.clone();
            plus[k] += h;
            minus[k] -= h;
            // the perturbation actually applied, after rounding
            let span = plus[k] - minus[k];
            (f(&plus) - f(&minus)) / span
        })
        .collect()
}

/// `∂A/∂q_k` for every `k`, analytic when supplied and finite differences otherwise.
pub fn mass_matrix_partials<M: MechanicalModel + ?Sized>(model: &M, q: &DVector<f64>) -> MatrixPartials {
    model
        .mass_matrix_derivative(q)
        .unwrap_or_else(|| fd_partials(q, |x| model.mass_matrix(x)))
}

/// `∂B/∂q_k` for every `k`, analytic when supplied and finite differences otherwise.
pub fn constraint_partials<F: LinearConstraintField + ?Sized>(field: &F, q: &DVector<f64>) -> MatrixPartials {
    field
        .matrix_derivative(q)
        .unwrap_or_else(|| fd_partials(q, |x| field.matrix(x)))
}

/// `Σ_k ∂M/∂q_k · v_k`, the time derivative of `M(q(t))` along velocity `v`.
pub fn directional_derivative(partials: &[DMatrix<f64>], v: &DVector<f64>) -> DMatrix<f64> {
    let (r, c) = partials.first().map(|m| m.shape()).unwrap_or((0, 0));
    partials
        .iter()
        .zip(v.iter())
        .fold(DMatrix::zeros(r, c), |acc, (dm, vk)| acc + dm * *vk)
}

/// `B′(q)[v, v] = (Σ_k ∂B/∂q_k v_k) v`.
pub fn constraint_velocity_quadratic<F: LinearConstraintField + ?Sized>(
    field: &F,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("constraint q", field.dim(), q.len())?;
    check_len("constraint v", field.dim(), v.len())?;
    let partials = constraint_partials(field, q);
    Ok(directional_derivative(&partials, v) * v)
}

fn christoffel_from_partials(partials: &[DMatrix<f64>], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = u.len();
    // Σ_k ∂A/∂q_k v_k and Σ_j ∂A/∂q_j u_j
    let dv = directional_derivative(partials, v);
    let du = directional_derivative(partials, u);
    let mut out = (&dv * u + &du * v) * 0.5;
    for (i, dai) in partials.iter().enumerate().take(n) {
        out[i] -= 0.5 * u.dot(&(dai * v));
    }
    out
}

/// First-kind Christoffel covector `A(q) Γ(q)[u, v]`, with components
/// `½ Σ_{j,k} (∂A_ij/∂q_k + ∂A_ik/∂q_j − ∂A_jk/∂q_i) u_j v_k`.
pub fn christoffel_force<M: MechanicalModel + ?Sized>(
    model: &M,
    q: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = model.dim();
    check_len("christoffel_force q", n, q.len())?;
    check_len("christoffel_force u", n, u.len())?;
    check_len("christoffel_force v", n, v.len())?;
    let partials = mass_matrix_partials(model, q);
    Ok(christoffel_from_partials(&partials, u, v))
}

/// Same as [`christoffel_force`] with precomputed `∂A/∂q`.
pub(crate) fn christoffel_with(partials: &[DMatrix<f64>], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    christoffel_from_partials(partials, u, v)
}

/// Total energy `½ v·A(q) v + U(q)`.
pub fn total_energy<M: MechanicalModel + ?Sized>(model: &M, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_len("total_energy q", model.dim(), q.len())?;
    check_len("total_energy v", model.dim(), v.len())?;
    Ok(0.5 * v.dot(&(model.mass_matrix(q) * v)) + model.potential(q))
}

/// Constraint value `B(q) v`.
pub fn constraint_residual<F: LinearConstraintField + ?Sized>(
    field: &F,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("constraint_residual q", field.dim(), q.len())?;
    check_len("constraint_residual v", field.dim(), v.len())?;
    Ok(field.matrix(q) * v)
}

/// Energy function `q̇·∂L/∂q̇ − L`, conserved when `L` has no explicit time dependence.
pub fn jacobi_energy<L: GeneralLagrangian + ?Sized>(lagrangian: &L, t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&lagrangian.velocity_gradient(t, q, v)) - lagrangian.value(t, q, v)
}

/// Smallest and largest singular values.
pub fn singular_value_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.singular_values();
    (sv.min(), sv.max())
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn relative_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    max_abs(&(analytic - reference)) / max_abs(reference).max(1.0)
}

/// Per-point findings of [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointValidation {
    pub q: DVector<f64>,
    pub symmetry_defect: f64,
    pub symmetric: bool,
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
    pub constraint_min_singular_value: f64,
    pub constraint_max_singular_value: f64,
    pub full_rank: bool,
    /// Relative error between supplied `∂A/∂q` and finite differences.
    pub mass_derivative_error: Option<f64>,
    /// Relative error between supplied `∂B/∂q` and finite differences.
    pub constraint_derivative_error: Option<f64>,
    pub potential_gradient_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub points: Vec<PointValidation>,
    pub dimension_ok: bool,
    pub passed: bool,
}

/// Checks the structural assumptions of a natural system with linear
/// constraints at each sample point. Failures are reported, never raised.
pub fn validate_model<M, F>(model: &M, field: &F, sample_points: &[DVector<f64>]) -> ValidationReport
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    let n = model.dim();
    let dimension_ok = n >= 1 && field.dim() == n && field.rows() < n;
    let points: Vec<PointValidation> = sample_points
        .iter()
        .map(|q| validate_point(model, field, q, dimension_ok))
        .collect();
    let passed = dimension_ok && !points.is_empty() && points.iter().all(|p| p.passed);
    ValidationReport {
        points,
        dimension_ok,
        passed,
    }
}

fn validate_point<M, F>(model: &M, field: &F, q: &DVector<f64>, dimension_ok: bool) -> PointValidation
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    let nan_report = |q: &DVector<f64>| PointValidation {
        q: q.clone(),
        symmetry_defect: f64::NAN,
        symmetric: false,
        min_eigenvalue: f64::NAN,
        positive_definite: false,
        constraint_min_singular_value: f64::NAN,
        constraint_max_singular_value: f64::NAN,
        full_rank: false,
        mass_derivative_error: None,
        constraint_derivative_error: None,
        potential_gradient_error: f64::NAN,
        passed: false,
    };
    if !dimension_ok || q.len() != model.dim() {
        return nan_report(q);
    }
    let a = model.mass_matrix(q);
    if a.shape() != (model.dim(), model.dim()) {
        return nan_report(q);
    }
    let symmetry_defect = max_abs(&(&a - a.transpose()));
    let symmetric = symmetry_defect <= SYMMETRY_TOLERANCE * (1.0 + max_abs(&a));
    let sym = (&a + a.transpose()) * 0.5;
    let min_eigenvalue = sym.clone().symmetric_eigen().eigenvalues.min();
    let positive_definite = min_eigenvalue > 0.0 && sym.cholesky().is_some();

    let b = field.matrix(q);
    let (smin, smax) = singular_value_range(&b);
    let full_rank = b.nrows() == field.rows() && smax > 0.0 && smin > RANK_TOLERANCE * smax;

    let mass_derivative_error = model
        .mass_matrix_derivative(q)
        .map(|analytic| partials_error(&analytic, &fd_partials(q, |x| model.mass_matrix(x))));
    let constraint_derivative_error = field
        .matrix_derivative(q)
        .map(|analytic| partials_error(&analytic, &fd_partials(q, |x| field.matrix(x))));

    let grad = model.potential_gradient(q);
    let fd_grad = fd_partials(q, |x| DMatrix::from_element(1, 1, model.potential(x)));
    let fd_grad = DMatrix::from_iterator(q.len(), 1, fd_grad.iter().map(|m| m[(0, 0)]));
    let potential_gradient_error = if grad.len() == q.len() {
        relative_error(&DMatrix::from_column_slice(q.len(), 1, grad.as_slice()), &fd_grad)
    } else {
        f64::INFINITY
    };

    let derivative_ok = |e: Option<f64>| e.is_none_or(|e| e <= DERIVATIVE_TOLERANCE);
    let passed = symmetric
        && positive_definite
        && full_rank
        && derivative_ok(mass_derivative_error)
        && derivative_ok(constraint_derivative_error)
        && potential_gradient_error <= DERIVATIVE_TOLERANCE;

    PointValidation {
        q: q.clone(),
        symmetry_defect,
        symmetric,
        min_eigenvalue,
        positive_definite,
        constraint_min_singular_value: smin,
        constraint_max_singular_value: smax,
        full_rank,
        mass_derivative_error,
        constraint_derivative_error,
        potential_gradient_error,
        passed,
    }
}

fn partials_error(analytic: &[DMatrix<f64>], reference: &[DMatrix<f64>]) -> f64 {
    if analytic.len() != reference.len() {
        return f64::INFINITY;
    }
    analytic
        .iter()
        .zip(reference)
        .map(|(a, r)| {
            if a.shape() != r.shape() {
                f64::INFINITY
            } else {
                relative_error(a, r)
            }
        })
        .fold(0.0, f64::max)
}

/// Per-point findings of [`validate_general`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralPointValidation {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    /// Ratio of smallest to largest singular value of `S`.
    pub velocity_hessian_conditioning: f64,
    pub constraint_min_singular_value: f64,
    /// Ratio of smallest to largest singular value of `R = D S⁻¹ Dᵀ`.
    pub schur_conditioning: f64,
    pub velocity_hessian_error: f64,
    pub mixed_hessian_error: f64,
    pub velocity_jacobian_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralValidationReport {
    pub points: Vec<GeneralPointValidation>,
    pub passed: bool,
}

/// Regularity and derivative-consistency checks for a general Lagrangian with
/// general constraints, at sample points `(t, q, v)`.
pub fn validate_general<L, F>(
    lagrangian: &L,
    field: &F,
    sample_points: &[(f64, DVector<f64>, DVector<f64>)],
) -> GeneralValidationReport
where
    L: GeneralLagrangian + ?Sized,
    F: GeneralConstraintField + ?Sized,
{
    let n = lagrangian.dim();
    let dims_ok = field.dim() == n && field.rows() < n;
    let points: Vec<GeneralPointValidation> = sample_points
        .iter()
        .map(|(t, q, v)| {
            let t = *t;
            let shapes_ok = dims_ok && q.len() == n && v.len() == n;
            if !shapes_ok {
                return GeneralPointValidation {
                    t,
                    q: q.clone(),
                    v: v.clone(),
                    velocity_hessian_conditioning: f64::NAN,
                    constraint_min_singular_value: f64::NAN,
                    schur_conditioning: f64::NAN,
                    velocity_hessian_error: f64::NAN,
                    mixed_hessian_error: f64::NAN,
                    velocity_jacobian_error: f64::NAN,
                    passed: false,
                };
            }
            let s = lagrangian.velocity_hessian(t, q, v);
            let (smin, smax) = singular_value_range(&s);
            let s_cond = if smax > 0.0 { smin / smax } else { 0.0 };
            let d = field.velocity_jacobian(t, q, v);
            let (dmin, dmax) = singular_value_range(&d);
            let schur_cond = s
                .clone()
                .try_inverse()
                .map(|sinv| {
                    let (rmin, rmax) = singular_value_range(&(&d * sinv * d.transpose()));
                    if rmax > 0.0 {
                        rmin / rmax
                    } else {
                        0.0
                    }
                })
                .unwrap_or(0.0);

            let grad_v = |x: &DVector<f64>| {
                let g = lagrangian.velocity_gradient(t, q, x);
                DMatrix::from_column_slice(n, 1, g.as_slice())
            };
            let fd_s = columns(&fd_partials(v, grad_v));
            let grad_q = |x: &DVector<f64>| {
                let g = lagrangian.velocity_gradient(t, x, v);
                DMatrix::from_column_slice(n, 1, g.as_slice())
            };
            let fd_mixed = columns(&fd_partials(q, grad_q));
            let fd_d = {
                let cols = fd_partials(v, |x| {
                    let b = field.value(t, q, x);
                    DMatrix::from_column_slice(b.len(), 1, b.as_slice())
                });
                columns(&cols)
            };

            let velocity_hessian_error = relative_error(&s, &fd_s);
            let mixed_hessian_error = relative_error(&lagrangian.mixed_hessian(t, q, v), &fd_mixed);
            let velocity_jacobian_error = relative_error(&d, &fd_d);
            let passed = s_cond > 1e-12
                && dmax > 0.0
                && dmin > RANK_TOLERANCE * dmax
                && schur_cond > 1e-12
                && velocity_hessian_error <= DERIVATIVE_TOLERANCE
                && mixed_hessian_error <= DERIVATIVE_TOLERANCE
                && velocity_jacobian_error <= DERIVATIVE_TOLERANCE;
            GeneralPointValidation {
                t,
                q: q.clone(),
                v: v.clone(),
                velocity_hessian_conditioning: s_cond,
                constraint_min_singular_value: dmin,
                schur_conditioning: schur_cond,
                velocity_hessian_error,
                mixed_hessian_error,
                velocity_jacobian_error,
                passed,
            }
        })
        .collect();
    let passed = dims_ok && !points.is_empty() && points.iter().all(|p| p.passed);
    GeneralValidationReport { points, passed }
}

/// Stacks single-column partials into a matrix whose column `k` is `∂f/∂x_k`.
fn columns(partials: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = partials.first().map(|m| m.nrows()).unwrap_or(0);
    DMatrix::from_fn(rows, partials.len(), |i, k| partials[k][(i, 0)])
}

/// Views a natural system as a general Lagrangian `½ v·A(q) v − U(q)`.
#[derive(Debug, Clone, Copy)]
pub struct NaturalLagrangian<'a, M: ?Sized>(pub &'a M);

impl<M: MechanicalModel + ?Sized> GeneralLagrangian for NaturalLagrangian<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(self.0.mass_matrix(q) * v)) - self.0.potential(q)
    }

    fn velocity_gradient(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.0.mass_matrix(q) * v
    }

    fn position_gradient(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let partials = mass_matrix_partials(self.0, q);
        let kinetic = DVector::from_iterator(q.len(), partials.iter().map(|da| 0.5 * v.dot(&(da * v))));
        kinetic - self.0.potential_gradient(q)
    }

    fn velocity_hessian(&self, _t: f64, q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        self.0.mass_matrix(q)
    }

    fn mixed_hessian(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let partials = mass_matrix_partials(self.0, q);
        let n = q.len();
        let mut m = DMatrix::zeros(n, n);
        for (j, da) in partials.iter().enumerate() {
            m.set_column(j, &(da * v));
        }
        m
    }

    fn velocity_time_derivative(&self, _t: f64, q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(q.len())
    }

    fn name(&self) -> &str {
        self.0.name()
    }
}

/// Views a linear constraint `B(q) q̇ = 0` as a general constraint `b = B(q) q̇`.
#[derive(Debug, Clone, Copy)]
pub struct LinearAsGeneral<'a, F: ?Sized>(pub &'a F);

impl<F: LinearConstraintField + ?Sized> GeneralConstraintField for LinearAsGeneral<'_, F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn rows(&self) -> usize {
        self.0.rows()
    }

    fn value(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.0.matrix(q) * v
    }

    fn velocity_jacobian(&self, _t: f64, q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        self.0.matrix(q)
    }

    fn position_jacobian(&self, _t: f64, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let partials = constraint_partials(self.0, q);
        let mut m = DMatrix::zeros(self.0.rows(), q.len());
        for (k, db) in partials.iter().enumerate() {
            m.set_column(k, &(db * v));
        }
        m
    }

    fn time_derivative(&self, _t: f64, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.0.rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    /// `A(q) = diag(1, 1 + q₁²)` with no analytic derivative.
    struct Warped;

    impl MechanicalModel for Warped {
        fn dim(&self) -> usize {
            2
        }
        fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_diagonal(&dvector![1.0, 1.0 + q[0] * q[0]])
        }
        fn potential(&self, q: &DVector<f64>) -> f64 {
            q[1]
        }
        fn potential_gradient(&self, _q: &DVector<f64>) -> DVector<f64> {
            dvector![0.0, 1.0]
        }
    }

    /// Same system with a full, configuration-dependent mass matrix and analytic derivative.
    struct Coupled;

    impl MechanicalModel for Coupled {
        fn dim(&self) -> usize {
            3
        }
        fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
            let c = q[1].cos();
            DMatrix::from_row_slice(3, 3, &[2.0 + c, 0.5 * c, 0.0, 0.5 * c, 1.0, 0.1 * q[2], 0.0, 0.1 * q[2], 1.5])
        }
        fn mass_matrix_derivative(&self, q: &DVector<f64>) -> Option<MatrixPartials> {
            let s = q[1].sin();
            Some(vec![
                DMatrix::zeros(3, 3),
                DMatrix::from_row_slice(3, 3, &[-s, -0.5 * s, 0.0, -0.5 * s, 0.0, 0.0, 0.0, 0.0, 0.0]),
                DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0]),
            ])
        }
        fn potential(&self, q: &DVector<f64>) -> f64 {
            q[0].sin()
        }
        fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
            dvector![q[0].cos(), 0.0, 0.0]
        }
    }

    struct Flat(DMatrix<f64>);

    impl MechanicalModel for Flat {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            self.0.clone()
        }
        fn potential(&self, _q: &DVector<f64>) -> f64 {
            0.0
        }
        fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(q.len())
        }
    }

    struct ConstantConstraint(DMatrix<f64>);

    impl LinearConstraintField for ConstantConstraint {
        fn dim(&self) -> usize {
            self.0.ncols()
        }
        fn rows(&self) -> usize {
            self.0.nrows()
        }
        fn matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            self.0.clone()
        }
    }

    /// Brute-force first-kind Christoffel covector from finite differences of `A`, step 1e-6.
    fn christoffel_oracle<M: MechanicalModel>(model: &M, q: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = q.len();
        let h = 1e-6;
        let d: Vec<DMatrix<f64>> = (0..n)
            .map(|k| {
                let mut p = q.clone();
                let mut m = q.clone();
                p[k] += h;
                m[k] -= h;
                (model.mass_matrix(&p) - model.mass_matrix(&m)) / (2.0 * h)
            })
            .collect();
        DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += 0.5 * (d[k][(i, j)] + d[j][(i, k)] - d[i][(j, k)]) * u[j] * v[k];
                }
            }
            s
        })
    }

    #[test]
    fn christoffel_matches_fd_oracle_on_warped_plane() {
        let q = dvector![1.0, 0.0];
        let u = dvector![1.0, 1.0];
        let expected = christoffel_oracle(&Warped, &q, &u, &u);
        // frozen from the oracle: ∂A₂₂/∂q₁ = 2q₁ = 2, so F = (−½·2·1·1, 2·1·1) = (−1, 2)
        assert!((expected - dvector![-1.0, 2.0]).amax() < 1e-8);
        let got = christoffel_force(&Warped, &q, &u, &u).unwrap();
        assert!((got - dvector![-1.0, 2.0]).amax() < 1e-5);
    }

    #[test]
    fn christoffel_with_analytic_derivative_matches_oracle() {
        let q = dvector![0.3, 0.7, -0.4];
        let u = dvector![0.2, -1.0, 0.5];
        let v = dvector![1.1, 0.4, -0.3];
        let got = christoffel_force(&Coupled, &q, &u, &v).unwrap();
        assert!((got - christoffel_oracle(&Coupled, &q, &u, &v)).amax() < 1e-8);
    }

    #[test]
    fn christoffel_vanishes_for_constant_mass_and_zero_velocity() {
        let flat = Flat(DMatrix::identity(3, 3));
        let q = dvector![0.1, 0.2, 0.3];
        let u = dvector![1.0, -2.0, 3.0];
        assert_eq!(christoffel_force(&flat, &q, &u, &u).unwrap(), DVector::zeros(3));
        let zero = DVector::zeros(3);
        assert_eq!(christoffel_force(&Coupled, &q, &zero, &u).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn christoffel_rejects_wrong_dimension() {
        let err = christoffel_force(&Warped, &dvector![1.0], &dvector![1.0, 0.0], &dvector![1.0, 0.0]);
        assert!(matches!(err, Err(DynamicsError::DimensionMismatch { .. })));
    }

    #[test]
    fn energy_of_flat_system() {
        let flat = Flat(DMatrix::identity(2, 2) * 2.0);
        let e = total_energy(&flat, &dvector![5.0, 5.0], &dvector![1.0, 2.0]).unwrap();
        assert_eq!(e, 5.0);
        assert_eq!(total_energy(&flat, &dvector![0.0, 0.0], &dvector![0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn residual_is_zero_for_zero_velocity() {
        let field = ConstantConstraint(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
        let r = constraint_residual(&field, &dvector![1.0, 1.0], &DVector::zeros(2)).unwrap();
        assert_eq!(r, DVector::zeros(1));
    }

    #[test]
    fn validation_flags_indefinite_mass_and_rank_deficiency() {
        let good_b = ConstantConstraint(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let q = [dvector![0.0, 0.0]];
        let indefinite = Flat(DMatrix::from_diagonal(&dvector![1.0, -1.0]));
        let report = validate_model(&indefinite, &good_b, &q);
        assert!(!report.passed);
        assert!(!report.points[0].positive_definite);
        assert!(report.points[0].full_rank);

        let zero_b = ConstantConstraint(DMatrix::zeros(1, 2));
        let report = validate_model(&Flat(DMatrix::identity(2, 2)), &zero_b, &q);
        assert!(!report.passed);
        assert!(!report.points[0].full_rank);

        let report = validate_model(&Flat(DMatrix::identity(2, 2)), &good_b, &q);
        assert!(report.passed);
    }

    #[test]
    fn validation_checks_supplied_derivatives() {
        let b = ConstantConstraint(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]));
        let report = validate_model(&Coupled, &b, &[dvector![0.1, 0.9, 0.4], dvector![-1.0, 2.0, 0.0]]);
        assert!(report.passed, "{report:?}");
        for p in &report.points {
            assert!(p.mass_derivative_error.unwrap() < 1e-8);
        }

        struct Lying;
        impl MechanicalModel for Lying {
            fn dim(&self) -> usize {
                3
            }
            fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
                Coupled.mass_matrix(q)
            }
            fn mass_matrix_derivative(&self, _q: &DVector<f64>) -> Option<MatrixPartials> {
                Some(vec![DMatrix::zeros(3, 3); 3])
            }
            fn potential(&self, q: &DVector<f64>) -> f64 {
                Coupled.potential(q)
            }
            fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
                Coupled.potential_gradient(q)
            }
        }
        let report = validate_model(&Lying, &b, &[dvector![0.1, 0.9, 0.4]]);
        assert!(!report.passed);
    }

    #[test]
    fn validation_rejects_asymmetric_mass() {
        let skew = Flat(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]));
        let b = ConstantConstraint(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let report = validate_model(&skew, &b, &[dvector![0.0, 0.0]]);
        assert!(!report.points[0].symmetric);
        assert!(!report.passed);
    }

    #[test]
    fn natural_lagrangian_passes_general_validation() {
        let b = ConstantConstraint(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]));
        let lag = NaturalLagrangian(&Coupled);
        let general = LinearAsGeneral(&b);
        let pts = vec![(0.0, dvector![0.1, 0.9, 0.4], dvector![1.0, -0.5, 0.5])];
        let report = validate_general(&lag, &general, &pts);
        assert!(report.passed, "{report:?}");
    }

    proptest! {
        #[test]
        fn christoffel_is_symmetric_and_linear(
            q in proptest::collection::vec(-2.0..2.0f64, 3),
            u in proptest::collection::vec(-2.0..2.0f64, 3),
            v in proptest::collection::vec(-2.0..2.0f64, 3),
            w in proptest::collection::vec(-2.0..2.0f64, 3),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
        ) {
            let (q, u, v, w) = (DVector::from_vec(q), DVector::from_vec(u), DVector::from_vec(v), DVector::from_vec(w));
            let fuv = christoffel_force(&Coupled, &q, &u, &v).unwrap();
            let fvu = christoffel_force(&Coupled, &q, &v, &u).unwrap();
            prop_assert!((&fuv - &fvu).amax() <= 1e-12);

            let lhs = christoffel_force(&Coupled, &q, &(&u * a + &w * b), &v).unwrap();
            let rhs = fuv * a + christoffel_force(&Coupled, &q, &w, &v).unwrap() * b;
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }
    }
}
