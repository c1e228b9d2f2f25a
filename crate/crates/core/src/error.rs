use std::path::PathBuf;

use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("missed grasp at pose {pose}: finger {finger} found no surface")]
    MissedGrasp { pose: usize, finger: usize },

    #[error("degenerate grasp at pose {pose}: two contacts coincide")]
    DegenerateGrasp { pose: usize },

    #[error("object `{object}` unreachable: only {valid} of {total} poses produce a grasp")]
    ObjectUnreachable {
        object: String,
        valid: usize,
        total: usize,
    },

    #[error("degenerate contact pair: contacts are {distance:e} mm apart")]
    DegeneratePair { distance: f64 },

    #[error("table file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt table file: {0}")]
    CorruptFile(String),

    #[error("quantizer mismatch: {0}")]
    QuantizerMismatch(String),

    #[error("table mismatch: {0}")]
    TableMismatch(String),

    #[error("empty table set")]
    EmptyTableSet,

    #[error("posterior degenerated: every object has zero probability")]
    DegeneratePosterior,

    #[error("no valid pose available for object `{object}`")]
    NoValidPose { object: String },

    #[error("tables were trained without per-pose records")]
    MissingPoseRecords,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
            Error::UnsupportedFormat(_) => "unsupported-format",
            Error::InvalidMesh(_) => "invalid-mesh",
            Error::MissedGrasp { .. } => "missed-grasp",
            Error::DegenerateGrasp { .. } => "degenerate-grasp",
            Error::ObjectUnreachable { .. } => "object-unreachable",
            Error::DegeneratePair { .. } => "degenerate-pair",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::CorruptFile(_) => "corrupt-file",
            Error::QuantizerMismatch(_) => "quantizer-mismatch",
            Error::TableMismatch(_) => "table-mismatch",
            Error::EmptyTableSet => "empty-table-set",
            Error::DegeneratePosterior => "degenerate-posterior",
            Error::NoValidPose { .. } => "no-valid-pose",
            Error::MissingPoseRecords => "missing-pose-records",
            Error::InvalidConfig(_) => "invalid-config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
