use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or study configuration is malformed or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data could not be ingested.
    #[error("data error: {0}")]
    Data(String),

    /// A closed-form result was requested outside its validity region.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// A power series expansion does not converge (root condition violated).
    #[error("divergent expansion: {0}")]
    Divergence(String),

    /// Every optimizer start failed.
    #[error("optimization failed: {message}")]
    Optimization { message: String, trace: Vec<String> },

    /// The information matrix is singular or badly conditioned.
    #[error("singular information matrix (condition number {condition:.3e})")]
    SingularInformation { condition: f64 },

    /// No candidate order could be fitted.
    #[error("selection failed: {0}")]
    Selection(String),

    /// The series carries no variation.
    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence(_)
                | Error::Optimization { .. }
                | Error::SingularInformation { .. }
                | Error::Selection(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
