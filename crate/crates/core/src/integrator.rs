//! Time stepping of the reduced (normal-form) dynamics.
//!
//! Classical fourth-order Runge–Kutta on the flat state `[q, q̇, λ]`, either
//! with a fixed step or with step-doubling error control. Trajectories carry
//! the latent multiplier `λ` (vakonomic) or the reaction multiplier `μ`
//! (nonholonomic and Chetaev) with each sample.

use std::fmt;

use nalgebra::DVector;

use crate::chetaev::chetaev_rhs;
use crate::error::{check_len, DynamicsError, Result};
use crate::mechanics::{
    constraint_residual, jacobi_energy, total_energy, DynamicsState, GeneralConstraintField, GeneralLagrangian,
    LinearConstraintField, MechanicalModel, VakonomicState,
};
use crate::nonholonomic::{nonholonomic_rhs, project_velocity};
use crate::vakonomic::vakonomic_rhs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DynamicsKind {
    Nonholonomic,
    Vakonomic,
    Chetaev,
}

impl DynamicsKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DynamicsKind::Nonholonomic => "nonholonomic",
            DynamicsKind::Vakonomic => "vakonomic",
            DynamicsKind::Chetaev => "chetaev",
        }
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Fixed,
    /// Step doubling: each step is compared against two half steps.
    StepDoubling { rel_tol: f64 },
}

/// Default relative tolerance of the step-doubling mode.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Step magnitude (initial step in step-doubling mode).
    pub dt: f64,
    /// Absolute end time; integration runs backward when it precedes the initial time.
    pub t_end: f64,
    pub mode: StepMode,
    /// Every `sample_stride`-th step is recorded; the final state always is.
    pub sample_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            mode: StepMode::Fixed,
            sample_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Usage(format!("dt must be positive and finite, got {}", self.dt)));
        }
        if !self.t_end.is_finite() {
            return Err(DynamicsError::Usage("t_end must be finite".into()));
        }
        if self.sample_stride == 0 {
            return Err(DynamicsError::Usage("sample_stride must be at least 1".into()));
        }
        if let StepMode::StepDoubling { rel_tol } = self.mode {
            if !(rel_tol > 0.0) {
                return Err(DynamicsError::Usage(format!("rel_tol must be positive, got {rel_tol}")));
            }
        }
        Ok(())
    }
}

/// Integrator phase point; `lam` is empty except for vakonomic dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub lam: DVector<f64>,
}

impl PhasePoint {
    fn to_flat(&self) -> DVector<f64> {
        let (n, m) = (self.q.len(), self.lam.len());
        let mut y = DVector::zeros(2 * n + m);
        y.rows_mut(0, n).copy_from(&self.q);
        y.rows_mut(n, n).copy_from(&self.v);
        y.rows_mut(2 * n, m).copy_from(&self.lam);
        y
    }

    fn from_flat(t: f64, y: &DVector<f64>, n: usize) -> Self {
        let m = y.len() - 2 * n;
        Self {
            t,
            q: y.rows(0, n).into_owned(),
            v: y.rows(n, n).into_owned(),
            lam: y.rows(2 * n, m).into_owned(),
        }
    }
}

impl From<DynamicsState> for PhasePoint {
    fn from(s: DynamicsState) -> Self {
        Self {
            t: s.t,
            q: s.q,
            v: s.v,
            lam: DVector::zeros(0),
        }
    }
}

impl From<VakonomicState> for PhasePoint {
    fn from(s: VakonomicState) -> Self {
        Self {
            t: s.t,
            q: s.q,
            v: s.v,
            lam: s.lam,
        }
    }
}

/// Right-hand side evaluation of a reduced system.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub acceleration: DVector<f64>,
    /// `λ̇`; empty for systems without latent state.
    pub latent_rate: DVector<f64>,
    /// Reaction multiplier `μ`; empty for vakonomic dynamics.
    pub multiplier: DVector<f64>,
}

/// A second-order constrained system in normal form.
pub trait ReducedDynamics {
    fn kind(&self) -> DynamicsKind;

    fn dim(&self) -> usize;

    fn latent_dim(&self) -> usize {
        0
    }

    /// Length of the per-sample record (`λ` or `μ`).
    fn record_dim(&self) -> usize;

    fn model_id(&self) -> String;

    fn rates(&self, point: &PhasePoint) -> Result<Rates>;

    /// Post-step correction; identity unless a projection mode is enabled.
    fn project(&self, _point: &mut PhasePoint) -> Result<()> {
        Ok(())
    }
}

pub struct NonholonomicSystem<'a, M: ?Sized, F: ?Sized> {
    pub model: &'a M,
    pub field: &'a F,
    /// Re-project the velocity onto `B(q) q̇ = 0` after every step.
    pub project_velocity: bool,
}

impl<'a, M: ?Sized, F: ?Sized> NonholonomicSystem<'a, M, F> {
    pub fn new(model: &'a M, field: &'a F) -> Self {
        Self {
            model,
            field,
            project_velocity: false,
        }
    }
}

impl<M, F> ReducedDynamics for NonholonomicSystem<'_, M, F>
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    fn kind(&self) -> DynamicsKind {
        DynamicsKind::Nonholonomic
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn record_dim(&self) -> usize {
        self.field.rows()
    }

    fn model_id(&self) -> String {
        self.model.name().to_string()
    }

    fn rates(&self, p: &PhasePoint) -> Result<Rates> {
        let out = nonholonomic_rhs(self.model, self.field, &p.q, &p.v)?;
        Ok(Rates {
            acceleration: out.acceleration,
            latent_rate: DVector::zeros(0),
            multiplier: out.multiplier,
        })
    }

    fn project(&self, p: &mut PhasePoint) -> Result<()> {
        if self.project_velocity {
            p.v = project_velocity(self.model, self.field, &p.q, &p.v)?;
        }
        Ok(())
    }
}

pub struct VakonomicSystem<'a, M: ?Sized, F: ?Sized> {
    pub model: &'a M,
    pub field: &'a F,
    pub project_velocity: bool,
}

impl<'a, M: ?Sized, F: ?Sized> VakonomicSystem<'a, M, F> {
    pub fn new(model: &'a M, field: &'a F) -> Self {
        Self {
            model,
            field,
            project_velocity: false,
        }
    }
}

impl<M, F> ReducedDynamics for VakonomicSystem<'_, M, F>
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    fn kind(&self) -> DynamicsKind {
        DynamicsKind::Vakonomic
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn latent_dim(&self) -> usize {
        self.field.rows()
    }

    fn record_dim(&self) -> usize {
        self.field.rows()
    }

    fn model_id(&self) -> String {
        self.model.name().to_string()
    }

    fn rates(&self, p: &PhasePoint) -> Result<Rates> {
        let state = VakonomicState {
            t: p.t,
            q: p.q.clone(),
            v: p.v.clone(),
            lam: p.lam.clone(),
        };
        let out = vakonomic_rhs(self.model, self.field, &state)?;
        Ok(Rates {
            acceleration: out.acceleration,
            latent_rate: out.lambda_rate,
            multiplier: DVector::zeros(0),
        })
    }

    fn project(&self, p: &mut PhasePoint) -> Result<()> {
        if self.project_velocity {
            p.v = project_velocity(self.model, self.field, &p.q, &p.v)?;
        }
        Ok(())
    }
}

pub struct ChetaevSystem<'a, L: ?Sized, F: ?Sized> {
    pub lagrangian: &'a L,
    pub field: &'a F,
}

impl<'a, L: ?Sized, F: ?Sized> ChetaevSystem<'a, L, F> {
    pub fn new(lagrangian: &'a L, field: &'a F) -> Self {
        Self { lagrangian, field }
    }
}

impl<L, F> ReducedDynamics for ChetaevSystem<'_, L, F>
where
    L: GeneralLagrangian + ?Sized,
    F: GeneralConstraintField + ?Sized,
{
    fn kind(&self) -> DynamicsKind {
        DynamicsKind::Chetaev
    }

    fn dim(&self) -> usize {
        self.lagrangian.dim()
    }

    fn record_dim(&self) -> usize {
        self.field.rows()
    }

    fn model_id(&self) -> String {
        self.lagrangian.name().to_string()
    }

    fn rates(&self, p: &PhasePoint) -> Result<Rates> {
        let out = chetaev_rhs(self.lagrangian, self.field, p.t, &p.q, &p.v)?;
        Ok(Rates {
            acceleration: out.acceleration,
            latent_rate: DVector::zeros(0),
            multiplier: out.multiplier,
        })
    }
}

/// One recorded phase point; `extra` is `λ` (vakonomic) or `μ` (otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub extra: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub model_id: String,
    pub kind: DynamicsKind,
    pub config: IntegratorConfig,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Phase point of the final sample, with `λ` restored for vakonomic runs.
    pub fn final_point(&self) -> PhasePoint {
        let s = self.last();
        PhasePoint {
            t: s.t,
            q: s.q.clone(),
            v: s.v.clone(),
            lam: if self.kind == DynamicsKind::Vakonomic {
                s.extra.clone()
            } else {
                DVector::zeros(0)
            },
        }
    }
}

/// `dy/dt` on the flat state, plus the evaluated rates.
fn flat_derivative<S: ReducedDynamics + ?Sized>(sys: &S, t: f64, y: &DVector<f64>) -> Result<(DVector<f64>, Rates)> {
    let n = sys.dim();
    let point = PhasePoint::from_flat(t, y, n);
    let rates = sys
        .rates(&point)
        .map_err(|e| DynamicsError::AtTime { t, source: Box::new(e) })?;
    let mut dy = DVector::zeros(y.len());
    dy.rows_mut(0, n).copy_from(&point.v);
    dy.rows_mut(n, n).copy_from(&rates.acceleration);
    dy.rows_mut(2 * n, y.len() - 2 * n).copy_from(&rates.latent_rate);
    Ok((dy, rates))
}

/// One classical RK4 step from `(t, y)` of size `h`, given `k1 = f(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &DVector<f64>, h: f64, k1: &DVector<f64>) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let half = 0.5 * h;
    let k2 = f(t + half, &(y + k1 * half))?;
    let k3 = f(t + half, &(y + &k2 * half))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
}

fn all_finite(y: &DVector<f64>) -> bool {
    y.iter().all(|x| x.is_finite())
}

/// Number of fixed steps covering `span`, snapping to an integer count when
/// `span / dt` is integral up to rounding.
fn fixed_step_count(span: f64, dt: f64) -> usize {
    let ratio = span.abs() / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Drives a first-order ODE from `t0` to `t_end`, calling `on_step` with every
/// accepted `(index, t, y)`, starting with index 0 at the initial point.
fn drive<F, P, R>(
    f: &mut F,
    post: &mut P,
    t0: f64,
    y0: DVector<f64>,
    config: &IntegratorConfig,
    on_step: &mut R,
) -> Result<(f64, DVector<f64>)>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    P: FnMut(f64, &mut DVector<f64>) -> Result<()>,
    R: FnMut(usize, f64, &DVector<f64>) -> Result<()>,
{
    config.check()?;
    let sign = if config.t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    on_step(0, t, &y)?;
    match config.mode {
        StepMode::Fixed => {
            let steps = fixed_step_count(config.t_end - t0, config.dt);
            for k in 0..steps {
                let t_next = if k + 1 == steps {
                    config.t_end
                } else {
                    t0 + sign * config.dt * (k + 1) as f64
                };
                let k1 = f(t, &y)?;
                let mut next = rk4_step(f, t, &y, t_next - t, &k1)?;
                post(t_next, &mut next)?;
                if !all_finite(&next) {
                    return Err(DynamicsError::Divergence { t: t_next });
                }
                t = t_next;
                y = next;
                on_step(k + 1, t, &y)?;
            }
        }
        StepMode::StepDoubling { rel_tol } => {
            let mut h = config.dt * sign;
            let mut accepted = 0usize;
            while (config.t_end - t) * sign > 0.0 {
                let remaining = config.t_end - t;
                let last = h.abs() >= remaining.abs();
                let step = if last { remaining } else { h };
                if step.abs() <= 1e-14 * (1.0 + t.abs()) && !last {
                    return Err(DynamicsError::Divergence { t });
                }
                let k1 = f(t, &y)?;
                let full = rk4_step(f, t, &y, step, &k1)?;
                let mid = rk4_step(f, t, &y, 0.5 * step, &k1)?;
                let k1_mid = f(t + 0.5 * step, &mid)?;
                let fine = rk4_step(f, t + 0.5 * step, &mid, 0.5 * step, &k1_mid)?;
                if !all_finite(&fine) || !all_finite(&full) {
                    // shrink and retry; give up once the step is negligible
                    h = 0.25 * step;
                    if h.abs() <= 1e-14 * (1.0 + t.abs()) {
                        return Err(DynamicsError::Divergence { t });
                    }
                    continue;
                }
                // Richardson estimate of the error in `fine`
                let err = (&full - &fine)
                    .iter()
                    .zip(fine.iter())
                    .map(|(d, yi)| d.abs() / (15.0 * (1.0 + yi.abs())))
                    .fold(0.0, f64::max);
                let factor = if err == 0.0 {
                    4.0
                } else {
                    (0.9 * (rel_tol / err).powf(0.2)).clamp(0.1, 4.0)
                };
                if err <= rel_tol {
                    let t_next = if last { config.t_end } else { t + step };
                    let mut next = fine;
                    post(t_next, &mut next)?;
                    t = t_next;
                    y = next;
                    accepted += 1;
                    on_step(accepted, t, &y)?;
                    if !last {
                        h = step * factor;
                    }
                } else {
                    h = step * factor;
                }
            }
        }
    }
    Ok((t, y))
}

/// Integrates a first-order system `y' = f(t, y)` and returns the final state.
pub fn integrate_first_order<F>(mut f: F, t0: f64, y0: DVector<f64>, config: &IntegratorConfig) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut post = |_: f64, _: &mut DVector<f64>| Ok(());
    let mut on_step = |_: usize, _: f64, _: &DVector<f64>| Ok(());
    let (_, y) = drive(&mut f, &mut post, t0, y0, config, &mut on_step)?;
    Ok(y)
}

/// Integrates a reduced system from `initial` to `config.t_end`.
pub fn integrate<S>(system: &S, initial: &PhasePoint, config: &IntegratorConfig) -> Result<Trajectory>
where
    S: ReducedDynamics + ?Sized,
{
    let n = system.dim();
    check_len("initial q", n, initial.q.len())?;
    check_len("initial v", n, initial.v.len())?;
    check_len("initial λ", system.latent_dim(), initial.lam.len())?;
    if !all_finite(&initial.to_flat()) || !initial.t.is_finite() {
        return Err(DynamicsError::Divergence { t: initial.t });
    }

    let kind = system.kind();
    let stride = config.sample_stride.max(1);
    let mut samples = Vec::new();
    let record = |samples: &mut Vec<Sample>, t: f64, y: &DVector<f64>| -> Result<()> {
        let point = PhasePoint::from_flat(t, y, n);
        let extra = if kind == DynamicsKind::Vakonomic {
            point.lam.clone()
        } else {
            flat_derivative(system, t, y)?.1.multiplier
        };
        samples.push(Sample {
            t,
            q: point.q,
            v: point.v,
            extra,
        });
        Ok(())
    };

    let mut f = |t: f64, y: &DVector<f64>| flat_derivative(system, t, y).map(|(dy, _)| dy);
    let mut post = |t: f64, y: &mut DVector<f64>| -> Result<()> {
        let mut p = PhasePoint::from_flat(t, y, n);
        system
            .project(&mut p)
            .map_err(|e| DynamicsError::AtTime { t, source: Box::new(e) })?;
        *y = p.to_flat();
        Ok(())
    };
    let mut on_step = |k: usize, t: f64, y: &DVector<f64>| -> Result<()> {
        if k.is_multiple_of(stride) {
            record(&mut samples, t, y)?;
        }
        Ok(())
    };
    let y0 = initial.to_flat();
    let (t_final, y_final) = drive(&mut f, &mut post, initial.t, y0, config, &mut on_step)?;
    // always keep the final state
    let final_recorded = samples.last().is_some_and(|s| s.t == t_final);
    if !final_recorded {
        record(&mut samples, t_final, &y_final)?;
    }

    Ok(Trajectory {
        model_id: system.model_id(),
        kind,
        config: *config,
        samples,
    })
}

/// Deviations after forward integration over `T`, velocity (and `λ`) reversal,
/// and a second forward integration over `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTripErrors {
    pub q: f64,
    pub v: f64,
    pub lam: f64,
}

impl RoundTripErrors {
    pub fn max(&self) -> f64 {
        self.q.max(self.v).max(self.lam)
    }
}

/// Time-reversal experiment: the returned norms measure the distance of the
/// round-trip end state from `(q0, −v0, −λ0)`.
pub fn reversibility_roundtrip<S>(system: &S, initial: &PhasePoint, horizon: f64, config: &IntegratorConfig) -> Result<RoundTripErrors>
where
    S: ReducedDynamics + ?Sized,
{
    if !(horizon >= 0.0) {
        return Err(DynamicsError::Usage(format!("round-trip horizon must be nonnegative, got {horizon}")));
    }
    let forward = IntegratorConfig {
        t_end: initial.t + horizon,
        ..*config
    };
    let mid = integrate(system, initial, &forward)?.final_point();
    let flipped = PhasePoint {
        t: mid.t,
        q: mid.q,
        v: -mid.v,
        lam: -mid.lam,
    };
    let back = IntegratorConfig {
        t_end: flipped.t + horizon,
        ..*config
    };
    let end = integrate(system, &flipped, &back)?.final_point();
    Ok(RoundTripErrors {
        q: (&end.q - &initial.q).norm(),
        v: (&end.v + &initial.v).norm(),
        lam: (&end.lam + &initial.lam).norm(),
    })
}

/// First-integral drift along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    /// `max |E(t) − E(t₀)|`
    pub energy_drift: f64,
    /// `max ‖c(t) − c(t₀)‖_∞` for the constraint value `c`
    pub constraint_drift: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub energy_residual: Vec<f64>,
    /// `c(t) − c(t₀)` per sample.
    pub constraint_residual: Vec<DVector<f64>>,
}

/// Drift report from arbitrary energy and constraint functions of a sample.
pub fn monitor_with<E, C>(trajectory: &Trajectory, energy: E, constraint: C) -> MonitorReport
where
    E: Fn(&Sample) -> f64,
    C: Fn(&Sample) -> DVector<f64>,
{
    let samples = &trajectory.samples;
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let energy: Vec<f64> = samples.iter().map(&energy).collect();
    let c: Vec<DVector<f64>> = samples.iter().map(&constraint).collect();
    let (e0, c0) = (energy.first().copied().unwrap_or(0.0), c.first().cloned().unwrap_or_else(|| DVector::zeros(0)));
    let energy_residual: Vec<f64> = energy.iter().map(|e| e - e0).collect();
    let constraint_residual: Vec<DVector<f64>> = c.iter().map(|ci| ci - &c0).collect();
    let energy_drift = energy_residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let constraint_drift = constraint_residual.iter().fold(0.0_f64, |m, r| m.max(r.amax()));
    MonitorReport {
        energy_drift,
        constraint_drift,
        times,
        energy,
        energy_residual,
        constraint_residual,
    }
}

/// Total energy and `B(q) q̇` along a trajectory of a natural system.
pub fn monitor_first_integrals<M, F>(trajectory: &Trajectory, model: &M, field: &F) -> MonitorReport
where
    M: MechanicalModel + ?Sized,
    F: LinearConstraintField + ?Sized,
{
    monitor_with(
        trajectory,
        |s| total_energy(model, &s.q, &s.v).unwrap_or(f64::NAN),
        |s| constraint_residual(field, &s.q, &s.v).unwrap_or_else(|_| DVector::from_element(field.rows(), f64::NAN)),
    )
}

/// Energy function `q̇·∂L/∂q̇ − L` and `b(t, q, q̇)` along a trajectory.
pub fn monitor_general<L, F>(trajectory: &Trajectory, lagrangian: &L, field: &F) -> MonitorReport
where
    L: GeneralLagrangian + ?Sized,
    F: GeneralConstraintField + ?Sized,
{
    monitor_with(
        trajectory,
        |s| jacobi_energy(lagrangian, s.t, &s.q, &s.v),
        |s| field.value(s.t, &s.q, &s.v),
    )
}
