use thiserror::Error;

/// Errors raised anywhere in the testing pipeline.
#[derive(Debug, Error)]
pub enum FlrtError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: function on {left} points combined with function on {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("degenerate design: boundary Gram matrix has condition number {condition:e}")]
    DegenerateDesign { condition: f64 },

    #[error("degenerate response: residual sum of squares under the null is zero")]
    DegenerateResponse,

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported output format {format} for {what}")]
    UnsupportedFormat { format: String, what: String },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: u64,
        #[source]
        source: Box<FlrtError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FlrtError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FlrtError::InvalidInput(_) | FlrtError::UnsupportedFormat { .. } => 1,
            FlrtError::Data(_)
            | FlrtError::Io(_)
            | FlrtError::Csv(_)
            | FlrtError::GridMismatch { .. }
            | FlrtError::DegenerateDesign { .. }
            | FlrtError::DegenerateResponse => 2,
            FlrtError::Numeric(_) => 3,
            FlrtError::Replication { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FlrtError>;
