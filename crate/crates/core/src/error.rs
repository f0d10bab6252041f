use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A record in an input file violates the documented schema.
    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty trade subset")]
    EmptySubset,

    #[error("need at least {needed} trades, got {got}")]
    TooFewTrades { needed: usize, got: usize },

    #[error("no reference price: product has no trades at or before the forecast time")]
    NoReferencePrice,

    #[error("feature unavailable: {0}")]
    FeatureUnavailable(String),

    #[error("degenerate normalization: insufficient price history")]
    DegenerateNormalization,

    /// Feature set asks for a neighbor that does not trade in the period ("N/A" cell).
    #[error("feature set {feature_set} is not available in period {period}")]
    NotAvailable { feature_set: String, period: String },

    #[error("forecast time outside the forecasting window: {0}")]
    OutsideWindow(String),

    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("series too short: need {needed}, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("unknown identifier: {0}")]
    Unknown(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        let path = path.into();
        // Surface csv's own line numbers as schema errors.
        if let Some(pos) = source.position() {
            let line = pos.line();
            if matches!(
                source.kind(),
                csv::ErrorKind::Deserialize { .. } | csv::ErrorKind::UnequalLengths { .. }
            ) {
                return Error::Schema {
                    path,
                    line,
                    message: source.to_string(),
                };
            }
        }
        Error::Csv { path, source }
    }

    /// Short machine-readable kind tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::Schema { .. } => "schema",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Json(_) => "json",
            Error::EmptySubset => "empty_subset",
            Error::TooFewTrades { .. } => "too_few_trades",
            Error::NoReferencePrice => "no_reference_price",
            Error::FeatureUnavailable(_) => "feature_unavailable",
            Error::DegenerateNormalization => "degenerate_normalization",
            Error::NotAvailable { .. } => "not_available",
            Error::OutsideWindow(_) => "outside_window",
            Error::LayoutMismatch(_) => "layout_mismatch",
            Error::SeriesTooShort { .. } => "series_too_short",
            Error::Unknown(_) => "unknown",
        }
    }

    /// Path associated with the error, if any.
    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Error::Schema { path, .. } | Error::Io { path, .. } | Error::Csv { path, .. } => {
                Some(path)
            }
            _ => None,
        }
    }
}
