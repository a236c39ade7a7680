use thiserror::Error;

/// Errors raised by sampling, integration and verification.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A coefficient produced a non-finite value where finiteness is part of
    /// its contract (integrability, boundedness).
    #[error("contract violation in {coefficient} at t={t}, x={x:?}: non-finite value")]
    ContractViolation {
        coefficient: String,
        t: f64,
        x: Vec<f64>,
    },

    /// A mark integrand was non-finite on the support of the mark law.
    #[error("integrand is non-finite at mark {mark}; ∫|h| dPi must be finite")]
    Integrability { mark: f64 },

    #[error("non-finite state at step {step} (t={t})")]
    Divergence { step: usize, t: f64 },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("scenario '{scenario}': {message}")]
    ScenarioParams { scenario: String, message: String },

    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(coefficient: impl Into<String>, t: f64, x: &[f64]) -> Self {
        Error::ContractViolation {
            coefficient: coefficient.into(),
            t,
            x: x.to_vec(),
        }
    }
}
