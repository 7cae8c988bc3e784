use thiserror::Error;

/// Errors raised by the coalescence library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("distance {xi} outside certified range [{lo}, {hi}]")]
    Range { xi: f64, lo: f64, hi: f64 },

    #[error("invalid payoff specification: {0}")]
    InvalidSpec(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("population has a single group; no pair to select")]
    Terminal,

    #[error("unknown group id {0}")]
    UnknownGroup(u64),

    #[error("io error: {0}")]
    Io(String),

    #[error("schema error: {0}")]
    Schema(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
