use thiserror::Error;
use vako_core::DynamicsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column} (field `{path}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },

    #[error("invalid scenario field `{path}`: {message}")]
    Invalid { path: String, message: String },

    #[error("inadmissible initial state: constraint residual {residual:e} exceeds {tolerance:e}")]
    Inadmissible { residual: f64, tolerance: f64 },

    #[error("numerical failure at t = {t}: {message}")]
    Numerical { t: f64, message: String },

    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 2 for parse or validation errors, 3 for inadmissible initial data,
    /// 4 for degeneracy or divergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid { .. } => 2,
            CliError::Inadmissible { .. } => 3,
            CliError::Numerical { .. } => 4,
            CliError::Io(_) => 1,
        }
    }

    /// Maps an engine error raised at or after time `t0`.
    pub fn from_dynamics(err: DynamicsError, t0: f64) -> Self {
        match err.root() {
            DynamicsError::Inadmissible { residual, tolerance } => CliError::Inadmissible {
                residual: *residual,
                tolerance: *tolerance,
            },
            root => CliError::Numerical {
                t: err.failing_time().unwrap_or(t0),
                message: root.to_string(),
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
