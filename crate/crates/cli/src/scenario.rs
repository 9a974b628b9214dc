//! Scenario documents: parsing, validation and resolution to a start point.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{dvector, DVector};
use serde::{Deserialize, Serialize};
use vako_core::integrator::{IntegratorConfig, PhasePoint, StepMode, DEFAULT_REL_TOL};
use vako_core::DynamicsKind;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsChoice {
    Nonholonomic,
    Vakonomic,
    Chetaev,
}

impl From<DynamicsChoice> for DynamicsKind {
    fn from(d: DynamicsChoice) -> Self {
        match d {
            DynamicsChoice::Nonholonomic => DynamicsKind::Nonholonomic,
            DynamicsChoice::Vakonomic => DynamicsKind::Vakonomic,
            DynamicsChoice::Chetaev => DynamicsKind::Chetaev,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Skate,
    FrictionSkate,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Skate => "skate",
            ModelName::FrictionSkate => "friction_skate",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_dot0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    #[serde(default)]
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStateSpec {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Fixed,
    StepDoubling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_end() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_end: default_t_end(),
            mode: ModeName::Fixed,
            rel_tol: None,
            sample_stride: default_stride(),
        }
    }
}

impl IntegratorSpec {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            t_end: self.t_end,
            mode: match self.mode {
                ModeName::Fixed => StepMode::Fixed,
                ModeName::StepDoubling => StepMode::StepDoubling {
                    rel_tol: self.rel_tol.unwrap_or(DEFAULT_REL_TOL),
                },
            },
            sample_stride: self.sample_stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    TrajectoryCsv,
    SummaryJson,
    MonitorCsv,
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::TrajectoryCsv, OutputKind::SummaryJson]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub dynamics: DynamicsChoice,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateSpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub project_velocity: bool,
}

/// Parses a scenario document, reporting the line, column and field path of
/// the first error.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Parse {
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })?;
    validate(&spec)?;
    Ok(spec)
}

/// Which built-in start the scenario resolved to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartKind {
    /// `q = (0, 0, 0)`, `q̇ = (0, 0, w)`.
    Cycloid { w: f64 },
    /// `q = (0, 0, π/2)`, `q̇ = (0, ẏ₀, 0)`.
    Lateral { y_dot0: f64 },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub spec: ScenarioSpec,
    pub kind: DynamicsKind,
    pub start: PhasePoint,
    pub start_kind: StartKind,
    /// Initial latent multiplier; present exactly for vakonomic dynamics.
    pub lambda0: Option<f64>,
    /// Friction rate; present exactly for the damped skate.
    pub k: Option<f64>,
    pub config: IntegratorConfig,
}

fn invalid(path: &str, message: impl Into<String>) -> CliError {
    CliError::Invalid {
        path: path.to_string(),
        message: message.into(),
    }
}

fn finite(path: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, "value must be finite"))
    }
}

fn validate(spec: &ScenarioSpec) -> Result<(), CliError> {
    if spec.name.is_empty() || !spec.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
        return Err(invalid("name", "name must be nonempty and use only [A-Za-z0-9_.-]"));
    }
    let p = &spec.model.params;
    for (field, value) in [("w", p.w), ("k", p.k), ("y_dot0", p.y_dot0), ("lambda0", p.lambda0)] {
        if let Some(x) = value {
            finite(&format!("model.params.{field}"), x)?;
        }
    }
    match spec.model.name {
        ModelName::Skate => {
            if p.k.is_some() {
                return Err(invalid("model.params.k", "k applies only to friction_skate"));
            }
        }
        ModelName::FrictionSkate => {
            if spec.dynamics != DynamicsChoice::Chetaev {
                return Err(invalid("dynamics", "friction_skate has a time-dependent Lagrangian and needs chetaev dynamics"));
            }
            if p.k.is_some_and(|k| k <= 0.0) {
                return Err(invalid("model.params.k", "k must be positive"));
            }
        }
    }
    if p.lambda0.is_some() && spec.dynamics != DynamicsChoice::Vakonomic {
        return Err(invalid("model.params.lambda0", "lambda0 applies only to vakonomic dynamics"));
    }
    if p.w.is_some() && p.y_dot0.is_some() {
        return Err(invalid("model.params", "give either w (spinning start) or y_dot0 (sideways start), not both"));
    }
    if let Some(init) = &spec.initial_state {
        if init.q.len() != 3 {
            return Err(invalid("initial_state.q", format!("expected 3 entries, got {}", init.q.len())));
        }
        if init.v.len() != 3 {
            return Err(invalid("initial_state.v", format!("expected 3 entries, got {}", init.v.len())));
        }
        for (i, x) in init.q.iter().enumerate() {
            finite(&format!("initial_state.q[{i}]"), *x)?;
        }
        for (i, x) in init.v.iter().enumerate() {
            finite(&format!("initial_state.v[{i}]"), *x)?;
        }
        match (&init.lambda, spec.dynamics) {
            (Some(l), DynamicsChoice::Vakonomic) => {
                if l.len() != 1 {
                    return Err(invalid("initial_state.lambda", format!("expected 1 entry, got {}", l.len())));
                }
                finite("initial_state.lambda[0]", l[0])?;
                if p.lambda0.is_some() {
                    return Err(invalid("initial_state.lambda", "lambda given both here and as model.params.lambda0"));
                }
            }
            (Some(_), _) => return Err(invalid("initial_state.lambda", "lambda applies only to vakonomic dynamics")),
            (None, _) => {}
        }
        if p.w.is_some() || p.y_dot0.is_some() {
            return Err(invalid("model.params", "w and y_dot0 set the default start and conflict with initial_state"));
        }
    }
    let it = &spec.integrator;
    if !(it.dt > 0.0 && it.dt.is_finite()) {
        return Err(invalid("integrator.dt", "dt must be positive and finite"));
    }
    finite("integrator.t_end", it.t_end)?;
    if it.sample_stride == 0 {
        return Err(invalid("integrator.sample_stride", "sample_stride must be at least 1"));
    }
    if let Some(tol) = it.rel_tol {
        if it.mode != ModeName::StepDoubling {
            return Err(invalid("integrator.rel_tol", "rel_tol applies only to step_doubling mode"));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(invalid("integrator.rel_tol", "rel_tol must be positive"));
        }
    }
    if spec.outputs.is_empty() {
        return Err(invalid("outputs", "at least one output is required"));
    }
    Ok(())
}

impl ResolvedScenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self, CliError> {
        validate(&spec)?;
        let kind = DynamicsKind::from(spec.dynamics);
        let p = spec.model.params;
        let lambda0 = match kind {
            DynamicsKind::Vakonomic => Some(
                spec.initial_state
                    .as_ref()
                    .and_then(|s| s.lambda.as_ref().map(|l| l[0]))
                    .or(p.lambda0)
                    .unwrap_or(0.0),
            ),
            _ => None,
        };
        let k = match spec.model.name {
            ModelName::FrictionSkate => Some(p.k.unwrap_or(1.0)),
            ModelName::Skate => None,
        };
        let lam = lambda0.map(|l| dvector![l]).unwrap_or_else(|| DVector::zeros(0));
        let (q, v, start_kind) = match (&spec.initial_state, p.y_dot0) {
            (Some(init), _) => (DVector::from_vec(init.q.clone()), DVector::from_vec(init.v.clone()), StartKind::Explicit),
            (None, Some(y_dot0)) => (dvector![0.0, 0.0, FRAC_PI_2], dvector![0.0, y_dot0, 0.0], StartKind::Lateral { y_dot0 }),
            (None, None) => {
                let w = p.w.unwrap_or(1.0);
                (DVector::zeros(3), dvector![0.0, 0.0, w], StartKind::Cycloid { w })
            }
        };
        let config = spec.integrator.config();
        Ok(Self {
            kind,
            start: PhasePoint { t: 0.0, q, v, lam },
            start_kind,
            lambda0,
            k,
            config,
            spec,
        })
    }
}
