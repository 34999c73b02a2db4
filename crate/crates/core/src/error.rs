use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of a function (non-finite input, bad level, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violating a structural requirement.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A row-indexed problem found while reading tabular input.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// The balancing program has no feasible point. `min_imbalance` is the smallest
    /// sup-norm imbalance achievable over the feasible weight set (NaN when the weight
    /// set itself is empty).
    #[error("weight program infeasible (minimal achievable imbalance {min_imbalance:.3e}, bound {bound:.3e})")]
    Infeasible { min_imbalance: f64, bound: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
