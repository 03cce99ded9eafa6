//! Files: the native dataset format, adapters for foreign logs, and
//! experiment configuration.

pub mod config;
pub mod dataset;
pub mod external;

use std::path::{Path, PathBuf};

pub use config::{EstimatorConfig, ExperimentConfig, SourceConfig};
pub use dataset::{
    format_dataset, parse_dataset, read_dataset, read_dataset_with, write_dataset, ReadOptions,
    ReadOutcome, Warning,
};
pub use external::{import_external, MappingSpec};

use crate::measurement::Violation;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported dataset format version `{0}`")]
    UnsupportedVersion(String),
    #[error("line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        column: Option<usize>,
        message: String,
    },
    #[error("line {line}: measurement fails validation ({violation})")]
    ValidationFailed { line: usize, violation: Violation },
    #[error("cannot encode: {0}")]
    InvalidField(String),
    #[error("mapped column `{0}` is missing")]
    MissingRequiredColumn(String),
    #[error("unit `{unit}` is not valid for {field}")]
    UnitMismatch { field: String, unit: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
