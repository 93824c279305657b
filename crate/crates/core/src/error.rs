use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Empty inputs, out-of-range arguments and similar caller mistakes.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("weak first stage: |beta_hat| = {beta:e} is below {threshold:e}")]
    WeakFirstStage { beta: f64, threshold: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("monte carlo run failed: {0}")]
    MonteCarlo(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input or configuration rather than
    /// numerical failure during estimation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Config(_)
                | Error::Shape(_)
                | Error::Schema(_)
                | Error::Validation(_)
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
