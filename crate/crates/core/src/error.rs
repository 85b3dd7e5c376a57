use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate score vector: {0}")]
    DegenerateScores(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid frame {frame_id}: {reason}")]
    InvalidFrame { frame_id: u64, reason: String },

    #[error("frame {frame_id}: {reason}")]
    Misaligned { frame_id: u64, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("buffer {buffer_id} cost {cost} exceeds storage capacity {capacity}")]
    ExceedsCapacity {
        buffer_id: u64,
        cost: f64,
        capacity: f64,
    },

    #[error("corrupt manifest for buffer {buffer_id}: {reason}")]
    CorruptManifest { buffer_id: u64, reason: String },

    #[error("codec failure on frame {frame_id}: {reason}")]
    Codec { frame_id: u64, reason: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("report: {0}")]
    Report(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
