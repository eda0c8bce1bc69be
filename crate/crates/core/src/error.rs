use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("asymmetric distance table: dist({0}, {1}) = {2} but dist({1}, {0}) = {3}")]
    Asymmetric(String, String, f64, f64),

    #[error("unknown point id `{0}`")]
    UnknownPoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not uniformly perfect at tested scales: annulus empty at center `{center}`, radius {radius}")]
    NotUniformlyPerfect { center: String, radius: f64 },

    #[error("relative separation undefined: {0}")]
    UndefinedSeparation(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
