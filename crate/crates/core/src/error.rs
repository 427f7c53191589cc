use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("row {row}: price must be positive, got {price}")]
    NonPositivePrice { row: usize, price: f64 },

    #[error("record {index}: timestamp {stamp} is not after the previous one")]
    UnsortedTimestamps { index: usize, stamp: String },

    #[error("crash instant {crash} is outside the data range [{first}, {last}]")]
    CrashOutOfRange {
        crash: String,
        first: String,
        last: String,
    },

    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("window [{start}, {end}) is empty or outside the return series")]
    BadWindow { start: i64, end: i64 },

    #[error("threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),

    #[error("event times must be finite, nonnegative and strictly increasing (index {0})")]
    UnsortedEvents(usize),

    #[error("evaluation grid must be sorted and nonnegative (index {0})")]
    UnsortedGrid(usize),

    #[error("invalid parameters: {0}")]
    InvalidParameter(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("estimator failed on {failed} of {total} bootstrap resamples")]
    BootstrapFailure { failed: usize, total: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
