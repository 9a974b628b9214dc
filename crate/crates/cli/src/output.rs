//! Trajectory and monitor CSV files.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which reads back
//! to the identical `f64`.

use std::io::{Read, Write};

use csv::{ReaderBuilder, Terminator, WriterBuilder};
use nalgebra::DVector;
use vako_core::integrator::{MonitorReport, Sample, Trajectory};
use vako_core::DynamicsKind;

use crate::error::CliError;

pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,q1..qN,v1..vN` followed by `lam1..` (vakonomic) or `mu1..`.
pub fn trajectory_header(kind: DynamicsKind, dim: usize, extra: usize) -> Vec<String> {
    let prefix = if kind == DynamicsKind::Vakonomic { "lam" } else { "mu" };
    std::iter::once("t".to_string())
        .chain((1..=dim).map(|i| format!("q{i}")))
        .chain((1..=dim).map(|i| format!("v{i}")))
        .chain((1..=extra).map(|i| format!("{prefix}{i}")))
        .collect()
}

pub fn write_trajectory_csv<W: Write>(out: W, trajectory: &Trajectory) -> Result<(), CliError> {
    let first = trajectory.first();
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out);
    w.write_record(trajectory_header(trajectory.kind, first.q.len(), first.extra.len()))?;
    for s in &trajectory.samples {
        let row = std::iter::once(s.t)
            .chain(s.q.iter().copied())
            .chain(s.v.iter().copied())
            .chain(s.extra.iter().copied())
            .map(format_number);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV back into samples.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<Sample>, CliError> {
    let mut r = ReaderBuilder::new().from_reader(input);
    let header = r.headers()?.clone();
    let dim = header.iter().filter(|h| h.starts_with('q')).count();
    if header.get(0) != Some("t") || header.len() < 1 + 2 * dim {
        return Err(CliError::Io(format!("unexpected trajectory header: {header:?}")));
    }
    let extra = header.len() - 1 - 2 * dim;
    let mut samples = Vec::new();
    for record in r.records() {
        let record = record?;
        let values: Vec<f64> = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| CliError::Io(format!("bad number `{f}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if values.len() != header.len() {
            return Err(CliError::Io(format!("row has {} fields, expected {}", values.len(), header.len())));
        }
        samples.push(Sample {
            t: values[0],
            q: DVector::from_column_slice(&values[1..1 + dim]),
            v: DVector::from_column_slice(&values[1 + dim..1 + 2 * dim]),
            extra: DVector::from_column_slice(&values[1 + 2 * dim..1 + 2 * dim + extra]),
        });
    }
    Ok(samples)
}

/// `t,energy,energy_residual,c1..cn` with `c` the constraint residual relative to `t₀`.
pub fn write_monitor_csv<W: Write>(out: W, report: &MonitorReport) -> Result<(), CliError> {
    let rows = report.constraint_residual.first().map_or(0, |c| c.len());
    let mut w = WriterBuilder::new().terminator(Terminator::Any(b'\n')).from_writer(out);
    let header = ["t", "energy", "energy_residual"]
        .into_iter()
        .map(String::from)
        .chain((1..=rows).map(|i| format!("c{i}")));
    w.write_record(header)?;
    for (i, t) in report.times.iter().enumerate() {
        let row = [*t, report.energy[i], report.energy_residual[i]]
            .into_iter()
            .chain(report.constraint_residual[i].iter().copied())
            .map(format_number);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use vako_core::integrator::IntegratorConfig;

    fn trajectory(kind: DynamicsKind, samples: Vec<Sample>) -> Trajectory {
        Trajectory {
            model_id: "skate".into(),
            kind,
            config: IntegratorConfig::default(),
            samples,
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(trajectory_header(DynamicsKind::Vakonomic, 3, 1).join(","), "t,q1,q2,q3,v1,v2,v3,lam1");
        assert_eq!(trajectory_header(DynamicsKind::Chetaev, 2, 1).join(","), "t,q1,q2,v1,v2,mu1");
    }

    #[test]
    fn rows_use_seventeen_digits_and_newlines() {
        let t = trajectory(
            DynamicsKind::Nonholonomic,
            vec![Sample {
                t: 0.1,
                q: dvector![1.0, -2.5, 1.0 / 3.0],
                v: dvector![0.0, 0.0, 1.0],
                extra: dvector![-0.0],
            }],
        );
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("1.0000000000000001e-1,1.0000000000000000e0,-2.5000000000000000e0,3.3333333333333331e-1"));
    }
}
