use thiserror::Error;

/// Errors produced by the link model, the harvester fit and the sweep engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The efficiency model was evaluated where its denominator is not positive.
    #[error("efficiency model `{model}` has a non-positive denominator at {p_mw} mW")]
    Evaluation { model: String, p_mw: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    /// Too few distinct input powers to determine the six coefficients.
    #[error("need at least {needed} distinct input powers, got {got}")]
    Underdetermined { needed: usize, got: usize },

    /// Invalid scenario, settings or sweep. Every violation found is listed.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
