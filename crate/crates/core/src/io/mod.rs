//! Dataset input/output: point clouds (PCD), depth images (16-bit PNG),
//! and the JSONL record files that tie a replay dataset together.
//!
//! All readers fail closed: malformed headers, non-finite coordinates, or
//! wrong pixel formats are errors that carry the offending path (and line
//! or byte offset where that makes sense), never silently skipped data.

mod dataset;
mod depth_png;
mod pcd;
mod records;

pub use dataset::{Dataset, FrameBundle, PoseStream, MAX_POSE_GAP};
pub use depth_png::{read_depth_png, write_depth_png};
pub use pcd::{read_pcd, write_pcd, PcdEncoding};
pub use records::{
    read_camera_json, read_det2d, read_gt, read_manifest, read_results, write_camera_json,
    write_det2d, write_gt, write_manifest, write_results, CameraRecord, Det2dRecord, GtBox,
    GtFrame, ManifestEntry, OdomRecord, ResultFrame, ResultObstacle,
};

use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors from dataset readers and writers.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        IoError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        IoError::Format { path: path.to_path_buf(), msg: msg.into() }
    }
}
