use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario or call configuration (bad dimensions, horizons, regions).
    #[error("configuration error: {0}")]
    Config(String),

    /// A model object violated its contract, e.g. λ(u) outside (0, 1).
    #[error("model error: {0}")]
    Model(String),

    /// A non-finite value appeared during evaluation.
    #[error("numeric error at t={time}: {detail}")]
    Numeric { time: f64, detail: String },

    /// Too few samples survived a rejection step.
    #[error("acceptance rate {rate:.3e} below floor {floor:.3e} after {trials} trials; try a larger ε′")]
    LowAcceptance { rate: f64, floor: f64, trials: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
