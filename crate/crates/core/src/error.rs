use thiserror::Error;

/// Errors raised by the dynamics engine.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} is degenerate: smallest singular value {smallest:e} (largest {largest:e})")]
    Degenerate {
        what: &'static str,
        smallest: f64,
        largest: f64,
    },

    #[error("inadmissible initial velocity: constraint residual {residual:e} exceeds tolerance {tolerance:e}")]
    Inadmissible { residual: f64, tolerance: f64 },

    #[error("non-finite state encountered at t = {t}")]
    Divergence { t: f64 },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<DynamicsError>,
    },

    #[error("invalid argument: {0}")]
    Usage(String),
}

impl DynamicsError {
    /// Time at which an integration failed, if known.
    pub fn failing_time(&self) -> Option<f64> {
        match self {
            DynamicsError::Divergence { t } | DynamicsError::AtTime { t, .. } => Some(*t),
            _ => None,
        }
    }

    /// Strips any time annotation.
    pub fn root(&self) -> &DynamicsError {
        match self {
            DynamicsError::AtTime { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(DynamicsError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
