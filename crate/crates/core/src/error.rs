use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate bins: {distinct} distinct event times for {bins} bins")]
    DegenerateBins { distinct: usize, bins: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("budget exceeded: spending {requested} with {remaining} remaining")]
    BudgetExceeded { requested: f64, remaining: f64 },

    #[error("duplicate instance {0} in probe batch")]
    DuplicateProbe(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("training exceeded its wall-clock cap after {epoch} epochs")]
    Timeout { epoch: usize },

    #[error("degenerate probability row: tail mass {tail_mass:e} from bin {censor_bin}")]
    DegenerateRow { censor_bin: usize, tail_mass: f64 },

    #[error("joint configuration space of {configs} exceeds the exact limit {limit}; use sampled mode")]
    ConfigSpaceOverflow { configs: u128, limit: u128 },

    #[error("pool of {size} exceeds the exhaustive limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
