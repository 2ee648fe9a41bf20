use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor rank or dimension disagreement, names the offending axis.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration or argument value.
    #[error("config error: {0}")]
    Config(String),

    /// Binary or text format violation (bad magic, truncated payload, bad field).
    #[error("format error: {0}")]
    Format(String),

    /// Dataset manifest problem, names the offending line or entry.
    #[error("manifest error: {0}")]
    Manifest(String),

    /// Clip content unusable (too short, out-of-range pixels, bad fps).
    #[error("clip error: {0}")]
    Clip(String),

    /// Training aborted (non-finite loss, empty split, ...).
    #[error("training error: {0}")]
    Train(String),

    /// Event delivery failure after retries.
    #[error("delivery error: {0}")]
    Delivery(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
