use std::io;

use thiserror::Error;

use crate::mesh::TopologyReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// The input is not a well-formed file of the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input using a feature this crate does not support.
    #[error("unsupported: {0}")]
    Capability(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("no iso-surface crossing in volume")]
    EmptySurface,

    #[error("topology correction failed: {report}")]
    CorrectionFailed { report: TopologyReport },

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
