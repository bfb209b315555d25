use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("integrator failed at t = {t_reached:e} s: {reason}")]
    Integrator { t_reached: f64, reason: String },

    #[error("steady state is not unique: {0}")]
    DegenerateSteadyState(String),

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("series has not decayed: final |C| / |C(0)| = {ratio:e}")]
    NotDecayed { ratio: f64 },

    #[error("steady state did not converge (residual {residual:e})")]
    NonConvergence { residual: f64 },

    #[error("at drive frequency {frequency_hz} Hz: {source}")]
    AtFrequency {
        frequency_hz: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_frequency(frequency_hz: f64, source: Error) -> Self {
        Error::AtFrequency {
            frequency_hz,
            source: Box::new(source),
        }
    }
}
