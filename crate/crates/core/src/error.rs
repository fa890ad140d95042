use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dataset has a single treatment arm (n_treated = {treated}, n_control = {control})")]
    SingleArm { treated: usize, control: usize },

    #[error("non-finite gradient in {0}; update rejected")]
    NonFiniteGradient(String),

    #[error("empty target population: all tilting values are zero")]
    EmptyTarget,

    #[error("zero weight mass in arm t = {0}")]
    ZeroMass(u8),

    #[error(
        "transport kernel underflow: every entry of exp(-lambda * M) in {axis} {index} is below the floor; \
         use a smaller lambda or rescale the representations"
    )]
    KernelUnderflow { axis: &'static str, index: usize },

    #[error("weighted sample has no positive weight")]
    EmptySample,

    #[error("instance too large for exact transport ({n} x {m} > {limit} cells)")]
    TooLarge { n: usize, m: usize, limit: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
