use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("schema: {0}")]
    SchemaParse(String),

    #[error("schema failed validation: {}", .0.join("; "))]
    InvalidSchema(Vec<String>),

    #[error("catalog: {0}")]
    Catalog(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("column {column:?} is not declared in the schema")]
    UnknownColumn { column: String },

    #[error("duplicate column {column:?} in header")]
    DuplicateColumn { column: String },

    #[error("unknown field {0:?}")]
    UnknownField(String),

    #[error("row {row}, field {field}: invalid date {value:?}")]
    InvalidDate {
        row: usize,
        field: String,
        value: String,
    },

    #[error("row {row}, field {field}: invalid number {value:?}")]
    InvalidNumber {
        row: usize,
        field: String,
        value: String,
    },

    #[error("row {row}: no derivable report date")]
    NoReportDate { row: usize },

    #[error("row {row}: missing {field}")]
    MissingReportDate { row: usize, field: String },

    #[error("row {row}: race value {value:?} outside declared domain")]
    RaceOutOfDomain { row: usize, value: String },

    #[error("insufficient records for k-anonymity: {remaining} row(s) cannot reach k={k} even with every quasi-identifier suppressed")]
    InsufficientRecords { remaining: usize, k: usize },

    #[error("suppression action targets row {row} but the dataset has {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },

    #[error("suppression plan targets row {row} field {field} twice")]
    DuplicateAction { row: usize, field: String },

    #[error("invalid override: {0}")]
    InvalidOverride(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with any stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
