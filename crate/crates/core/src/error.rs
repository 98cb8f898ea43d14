use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes shared by every synthesis stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{name} is not symmetric (residual {residual:.3e})")]
    Asymmetric { name: &'static str, residual: f64 },

    #[error("weight matrix {0} is singular or indefinite")]
    SingularWeight(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("system is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("{context} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
        trajectory: Vec<f64>,
    },

    #[error("{context} diverged at iteration {iteration}")]
    Diverged { context: String, iteration: usize },

    #[error("singular evaluation at grid sample {index}: {detail}")]
    SingularEvaluation { index: usize, detail: String },

    #[error("Sylvester equation is resonant (|1 - lambda_i mu_j| = {gap:.3e})")]
    Resonance { gap: f64 },

    #[error("spectral factorization failed: {0}")]
    Factorization(String),

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("{what} is unstable (spectral radius {radius:.6})")]
    Unstable { what: String, radius: f64 },

    #[error("simulation diverged{} at step {step}", trial.map(|t| format!(" in trial {t}")).unwrap_or_default())]
    SimulationDiverged { trial: Option<usize>, step: usize },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
