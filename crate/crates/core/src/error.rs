use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter fell outside the domain of the operation.
    #[error("parameter `{name}` out of domain: {reason}")]
    Domain { name: &'static str, reason: String },

    /// Particle count exceeded the configured cap.
    #[error(
        "population overflow: {count} individuals exceeds cap {cap}; \
         use the superprocess module (mass rescaling with resampling) for this regime"
    )]
    PopulationOverflow { count: u128, cap: u128 },

    /// The ODE integrator could not make progress.
    #[error("numeric failure at t={t}, v={v}: {reason}")]
    Numeric { t: f64, v: f64, reason: String },

    #[error("{path}: parse error at row {row}, column {col}: {reason}")]
    RasterParse {
        path: String,
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    /// Configuration problem. `line` is set when the key came from a file.
    #[error("config error for `{key}`{}: {reason}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        key: String,
        line: Option<usize>,
        reason: String,
    },

    #[error("raster geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line: None,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 runtime/numeric, 4 overflow.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain { .. } | Error::Validation(_) => 2,
            Error::RasterParse { .. } => 2,
            Error::PopulationOverflow { .. } => 4,
            _ => 3,
        }
    }
}
