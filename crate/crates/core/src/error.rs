use thiserror::Error;

/// Errors raised across the simulator, controllers and pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("training did not converge after {iterations} iterations (KKT residual {kkt_residual:.3e})")]
    Training {
        iterations: usize,
        kkt_residual: f64,
        /// Last iterate, flattened as `[phi (row-major) | bias]` or empty when not applicable.
        last_iterate: Vec<f64>,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("ingestion error at row {row}, column {column}: {detail}")]
    Ingestion {
        row: usize,
        column: String,
        detail: String,
    },

    /// A multi-stage run failed part-way; `partial` holds what was completed.
    #[error("{stage} aborted: {source}")]
    Aborted {
        stage: String,
        partial: Box<serde_json::Value>,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
