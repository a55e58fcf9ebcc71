use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or unsupported parameter combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument violates the operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The frame's estimated signal power is too close to the noise floor to normalize.
    #[error("degenerate frame: estimated signal power {signal_power:.3e} below {threshold:.3e}")]
    DegenerateFrame { signal_power: f64, threshold: f64 },

    #[error("insufficient data: {usable} usable frame(s), need at least {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
            Error::Config(_) | Error::Argument(_) => 2,
            Error::InsufficientData { .. } | Error::DegenerateFrame { .. } => 3,
        }
    }
}
