use thiserror::Error;

/// Errors surfaced by the simulator and its verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(usize),

    #[error("model configuration: {0}")]
    ModelConfig(String),

    #[error("experiment configuration: {0}")]
    Config(String),

    #[error("synthetic control oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("invalid coefficients: c = {0}")]
    InvalidCoefficients(f64),

    #[error("counterfactual estimate unavailable: member {0} has no pulls")]
    EstimateUnavailable(usize),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("argument {0} outside the domain [-1/e, 0) of W_-1")]
    Domain(f64),

    #[error("W_-1 iteration did not converge for x = {0}")]
    NoConvergence(f64),

    #[error("q is undefined at x = {x}: Lambert argument {arg} is below -1/e")]
    XTooSmall { x: f64, arg: f64 },

    #[error("checker configuration: {0}")]
    CheckerConfig(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
