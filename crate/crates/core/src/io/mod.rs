//! Image, point-cloud and JSON persistence.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

mod calib;
mod dataset;
mod json;
mod ply;
mod pnm;

pub use calib::{read_calibration, write_calibration, BoardFile, CalibrationFile, ImageSize, IntrinsicsBlock, ViewRecord, CALIBRATION_SCHEMA};
pub use dataset::{
    image_files, BoardDataset, BoardRenderSpec, CubeDataset, CubeRenderSpec, GroundTruth, GroundTruthView, PoseRangeSpec, GROUND_TRUTH_FILE,
};
pub use json::{read_json, to_json_string, write_json, PoseFile, SceneFile, SceneView};
pub use ply::{decode_ply, encode_ply, read_ply, write_ply};
pub use pnm::{decode_pnm, encode_pgm, read_image, write_image};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("{}: {source}", path.display())]
    IoFailure { path: PathBuf, source: std::io::Error },
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::IoFailure { path: path.to_path_buf(), source })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::IoFailure { path: path.to_path_buf(), source })
}
