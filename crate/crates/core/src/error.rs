use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Kron reduction failed: eliminated block over nodes {nodes:?} is singular or ill-conditioned ({detail})")]
    ReductionSingular { nodes: Vec<usize>, detail: String },

    #[error("equilibrium did not converge (final residual {residual:.3e} pu after {iterations} iterations)")]
    EquilibriumFailure { residual: f64, iterations: usize },

    #[error("integration diverged; last finite sample index {last_finite_sample}")]
    IntegrationDiverged { last_finite_sample: usize },

    #[error("convex weights violate the simplex constraint: {0}")]
    SimplexViolation(String),

    #[error("training labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("knowledge base is degenerate: {0}")]
    KbDegenerate(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("scheme {scheme}: {source}")]
    Scheme {
        scheme: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format { line, message: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True when the failure is numerical rather than caused by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure(_)
            | Error::IntegrationDiverged { .. }
            | Error::EquilibriumFailure { .. }
            | Error::ReductionSingular { .. } => true,
            Error::Scheme { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
