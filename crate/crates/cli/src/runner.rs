//! Runs a resolved scenario and writes its output files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use vako_core::integrator::{
    integrate, monitor_first_integrals, monitor_general, ChetaevSystem, MonitorReport, NonholonomicSystem, Sample,
    StepMode, Trajectory, VakonomicSystem,
};
use vako_core::mechanics::{LinearAsGeneral, NaturalLagrangian};
use vako_core::models::{
    friction_skate_angle, friction_skate_closed_form, skate_cycloid, skate_uniform_line, vakonomic_equilibrium,
    FrictionSkate, Skate, SkateConstraint, DEFAULT_QUADRATURE_TOLERANCE,
};
use vako_core::nonholonomic::{admissible_initial_state, project_velocity, DEFAULT_ADMISSIBILITY_TOLERANCE};
use vako_core::{DynamicsKind, LinearConstraintField};

use crate::error::CliError;
use crate::output::{write_monitor_csv, write_trajectory_csv};
use crate::scenario::{ModelName, OutputKind, ResolvedScenario, ScenarioSpec, StartKind};

/// Largest number of samples at which the damped-skate quadrature is evaluated.
const FRICTION_CHECK_POINTS: usize = 50;

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub monitor: MonitorReport,
    /// Whether the initial velocity was projected onto the constraint.
    pub projected: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub simulation: Simulation,
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

/// Checks admissibility (or projects), integrates and monitors.
pub fn simulate(resolved: &ResolvedScenario, project: bool) -> Result<Simulation, CliError> {
    let clock = Instant::now();
    let mut start = resolved.start.clone();
    let residual = (SkateConstraint.matrix(&start.q) * &start.v).norm();
    let projected = project && residual > DEFAULT_ADMISSIBILITY_TOLERANCE;
    if projected {
        start.v = project_velocity(&Skate, &SkateConstraint, &start.q, &start.v).map_err(|e| CliError::from_dynamics(e, start.t))?;
    } else {
        admissible_initial_state(&SkateConstraint, &start.q, &start.v, DEFAULT_ADMISSIBILITY_TOLERANCE)
            .map_err(|e| CliError::from_dynamics(e, start.t))?;
    }

    let config = &resolved.config;
    let general = LinearAsGeneral(&SkateConstraint);
    let (trajectory, monitor) = match (resolved.spec.model.name, resolved.kind) {
        (ModelName::Skate, DynamicsKind::Nonholonomic) => {
            let traj = integrate(&NonholonomicSystem::new(&Skate, &SkateConstraint), &start, config);
            let traj = traj.map_err(|e| CliError::from_dynamics(e, start.t))?;
            let m = monitor_first_integrals(&traj, &Skate, &SkateConstraint);
            (traj, m)
        }
        (ModelName::Skate, DynamicsKind::Vakonomic) => {
            let traj = integrate(&VakonomicSystem::new(&Skate, &SkateConstraint), &start, config);
            let traj = traj.map_err(|e| CliError::from_dynamics(e, start.t))?;
            let m = monitor_first_integrals(&traj, &Skate, &SkateConstraint);
            (traj, m)
        }
        (ModelName::Skate, DynamicsKind::Chetaev) => {
            let lagrangian = NaturalLagrangian(&Skate);
            let traj = integrate(&ChetaevSystem::new(&lagrangian, &general), &start, config);
            let traj = traj.map_err(|e| CliError::from_dynamics(e, start.t))?;
            let m = monitor_general(&traj, &lagrangian, &general);
            (traj, m)
        }
        (ModelName::FrictionSkate, DynamicsKind::Chetaev) => {
            let lagrangian = FrictionSkate::new(resolved.k.unwrap_or(1.0)).map_err(|e| CliError::Invalid {
                path: "model.params.k".into(),
                message: e.to_string(),
            })?;
            let traj = integrate(&ChetaevSystem::new(&lagrangian, &general), &start, config);
            let traj = traj.map_err(|e| CliError::from_dynamics(e, start.t))?;
            let m = monitor_general(&traj, &lagrangian, &general);
            (traj, m)
        }
        (ModelName::FrictionSkate, _) => {
            return Err(CliError::Invalid {
                path: "dynamics".into(),
                message: "friction_skate needs chetaev dynamics".into(),
            })
        }
    };
    Ok(Simulation {
        trajectory,
        monitor,
        projected,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

fn max_errors<I>(samples: I, reference: impl Fn(&Sample) -> Result<[f64; 3], CliError>) -> Result<([f64; 3], usize), CliError>
where
    I: IntoIterator,
    I::Item: std::ops::Deref<Target = Sample>,
{
    let mut worst = [0.0_f64; 3];
    let mut points = 0;
    for s in samples {
        let r = reference(&s)?;
        for i in 0..3 {
            worst[i] = worst[i].max((s.q[i] - r[i]).abs());
        }
        points += 1;
    }
    Ok((worst, points))
}

fn to_cli(e: vako_core::DynamicsError) -> CliError {
    CliError::Numerical {
        t: e.failing_time().unwrap_or(f64::NAN),
        message: e.to_string(),
    }
}

/// Maximum deviation from the matching closed-form motion, when one is known.
pub fn closed_form_errors(resolved: &ResolvedScenario, sim: &Simulation) -> Result<Value, CliError> {
    if sim.projected {
        return Ok(Value::Null);
    }
    let samples = &sim.trajectory.samples;
    let report = |reference: &str, worst: [f64; 3], points: usize, extra: Option<(&str, f64)>| {
        let mut errors = json!({"x": worst[0], "y": worst[1], "phi": worst[2]});
        if let Some((key, value)) = extra {
            errors[key] = json!(value);
        }
        json!({"reference": reference, "max_abs_error": errors, "points": points})
    };
    let model = resolved.spec.model.name;
    Ok(match (model, resolved.kind, resolved.start_kind) {
        (ModelName::Skate, DynamicsKind::Nonholonomic | DynamicsKind::Chetaev, StartKind::Cycloid { w }) if w != 0.0 => {
            let (worst, n) = max_errors(samples, |s| {
                let (x, y, p) = skate_cycloid(w, s.t).map_err(to_cli)?;
                Ok([x, y, p])
            })?;
            report("skate_cycloid", worst, n, None)
        }
        (ModelName::Skate, DynamicsKind::Nonholonomic | DynamicsKind::Chetaev, StartKind::Lateral { y_dot0 }) => {
            let (worst, n) = max_errors(samples, |s| {
                let (x, y, p) = skate_uniform_line(y_dot0, s.t);
                Ok([x, y, p])
            })?;
            report("skate_uniform_line", worst, n, None)
        }
        (ModelName::Skate, DynamicsKind::Vakonomic, StartKind::Lateral { y_dot0: 0.0 }) => {
            let lambda0 = resolved.lambda0.unwrap_or(0.0);
            let (worst, n) = max_errors(samples, |s| {
                let (x, y, p, _) = vakonomic_equilibrium(lambda0, s.t);
                Ok([x, y, p])
            })?;
            let lam_err = samples
                .iter()
                .map(|s| (s.extra[0] - vakonomic_equilibrium(lambda0, s.t).3).abs())
                .fold(0.0, f64::max);
            report("vakonomic_equilibrium", worst, n, Some(("lambda", lam_err)))
        }
        (ModelName::FrictionSkate, _, StartKind::Cycloid { w }) => {
            let k = resolved.k.unwrap_or(1.0);
            let phi_err = samples
                .iter()
                .map(|s| (s.q[2] - friction_skate_angle(w, k, s.t)).abs())
                .fold(0.0, f64::max);
            let stride = samples.len().div_ceil(FRICTION_CHECK_POINTS).max(1);
            let mut subset: Vec<&Sample> = samples.iter().step_by(stride).collect();
            if subset.last().map(|s| s.t) != samples.last().map(|s| s.t) {
                subset.extend(samples.last());
            }
            let (mut worst, n) = max_errors(subset, |s| {
                let (x, y, p) = friction_skate_closed_form(w, k, s.t, DEFAULT_QUADRATURE_TOLERANCE).map_err(to_cli)?;
                Ok([x, y, p])
            })?;
            worst[2] = worst[2].max(phi_err);
            report("friction_skate_closed_form", worst, n, None)
        }
        _ => Value::Null,
    })
}

fn state_json(s: &Sample, kind: DynamicsKind) -> Value {
    let key = if kind == DynamicsKind::Vakonomic { "lambda" } else { "mu" };
    let mut v = json!({"t": s.t, "q": s.q.as_slice(), "v": s.v.as_slice()});
    v[key] = json!(s.extra.as_slice());
    v
}

pub fn summary_json(resolved: &ResolvedScenario, sim: &Simulation) -> Result<Value, CliError> {
    let spec = &resolved.spec;
    let traj = &sim.trajectory;
    let (mode, rel_tol) = match resolved.config.mode {
        StepMode::Fixed => ("fixed", Value::Null),
        StepMode::StepDoubling { rel_tol } => ("step_doubling", json!(rel_tol)),
    };
    let start = &resolved.start;
    let first = traj.first();
    Ok(json!({
        "scenario": spec.name,
        "dynamics": resolved.kind.as_str(),
        "model": spec.model.name.as_str(),
        "params": spec.model.params,
        "lambda0": resolved.lambda0,
        "k": resolved.k,
        "initial_state": {
            "t": start.t,
            "q": start.q.as_slice(),
            "v": first.v.as_slice(),
            "lambda": resolved.lambda0.map(|l| vec![l]),
        },
        "projected_velocity": sim.projected,
        "integrator": {
            "dt": resolved.config.dt,
            "t_end": resolved.config.t_end,
            "mode": mode,
            "rel_tol": rel_tol,
            "sample_stride": resolved.config.sample_stride,
        },
        "samples": traj.samples.len(),
        "final_state": state_json(traj.last(), traj.kind),
        "energy_drift": sim.monitor.energy_drift,
        "constraint_drift": sim.monitor.constraint_drift,
        "closed_form": closed_form_errors(resolved, sim)?,
        "seed": Value::Null,
        "wall_time_s": sim.wall_time_s,
    }))
}

fn output_path(out_dir: &Path, name: &str, kind: OutputKind) -> PathBuf {
    out_dir.join(match kind {
        OutputKind::TrajectoryCsv => format!("{name}_trajectory.csv"),
        OutputKind::SummaryJson => format!("{name}_summary.json"),
        OutputKind::MonitorCsv => format!("{name}_monitor.csv"),
    })
}

/// Runs a scenario end to end and writes the requested outputs into `out_dir`.
pub fn run_scenario(spec: ScenarioSpec, out_dir: &Path, project_velocity: bool) -> Result<RunOutcome, CliError> {
    let resolved = ResolvedScenario::new(spec)?;
    let project = project_velocity || resolved.spec.project_velocity;
    let simulation = simulate(&resolved, project)?;
    let summary = summary_json(&resolved, &simulation)?;
    log::info!(
        "{}: {} samples, energy drift {:e}, constraint drift {:e}",
        resolved.spec.name,
        simulation.trajectory.samples.len(),
        simulation.monitor.energy_drift,
        simulation.monitor.constraint_drift
    );

    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut kinds = resolved.spec.outputs.clone();
    kinds.dedup();
    for kind in kinds {
        let path = output_path(out_dir, &resolved.spec.name, kind);
        let file = BufWriter::new(File::create(&path)?);
        match kind {
            OutputKind::TrajectoryCsv => write_trajectory_csv(file, &simulation.trajectory)?,
            OutputKind::MonitorCsv => write_monitor_csv(file, &simulation.monitor)?,
            OutputKind::SummaryJson => {
                let mut file = file;
                serde_json::to_writer_pretty(&mut file, &summary)?;
                std::io::Write::write_all(&mut file, b"\n")?;
            }
        }
        files.push(path);
    }
    Ok(RunOutcome {
        simulation,
        summary,
        files,
    })
}
