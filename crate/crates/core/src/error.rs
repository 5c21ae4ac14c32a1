use thiserror::Error;

/// Errors produced by the numerical, simulation, network and evaluation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported version {found:#04x} (expected {expected:#04x})")]
    UnsupportedVersion { found: u8, expected: u8 },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no blinking event: peak difference {peak:.3} does not exceed {threshold:.3}")]
    NoBlinkingEvent { peak: f64, threshold: f64 },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
