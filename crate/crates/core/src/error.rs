use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("point {point:?} lies outside the unit cube")]
    Domain { point: Vec<f64> },

    #[error("split on feature {feature} at {threshold} leaves an empty child")]
    SplitInfeasible { feature: usize, threshold: f64 },

    #[error("cell contains no samples")]
    EmptyCell,

    #[error("cell has zero probability mass")]
    DegenerateCell,

    #[error("quadrature did not reach tolerance (estimate {estimate}, error estimate {error_estimate})")]
    Tolerance { estimate: f64, error_estimate: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("replicate failed at n={n}, replicate={replicate}, seed={seed}: {source}")]
    Replicate {
        n: usize,
        replicate: usize,
        seed: u64,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
