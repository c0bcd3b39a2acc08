use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected} entries, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("oracle DFT is limited to {limit} points, got {actual}")]
    OracleTooLarge { limit: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The solution left the representable range. `t` is the time of the
    /// last completed step.
    #[error("blow-up at t = {t}: {reason} (sup norm {sup_norm})")]
    BlowUp {
        t: f64,
        sup_norm: f64,
        reason: String,
    },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
