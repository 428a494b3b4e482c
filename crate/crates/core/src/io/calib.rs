//! Calibration results as versioned JSON.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::json::{from_json_str, to_json_string};
use super::{read_bytes, write_bytes, IoError};
use crate::calibration::{CalibrationResult, StandardErrors};
use crate::geometry::{CameraIntrinsics, CameraPose, DistortionCoeffs};
use crate::target::CheckerboardSpec;

pub const CALIBRATION_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

/// `matrix` is `K` row-major; `transposed` is `Kᵀ`, with the principal point
/// in its third row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsBlock {
    pub matrix: [[f64; 3]; 3],
    pub transposed: [[f64; 3]; 3],
}

impl IntrinsicsBlock {
    pub fn new(k: &CameraIntrinsics) -> Self {
        let m = k.matrix();
        let rows = |m: nalgebra::Matrix3<f64>| [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]);
        Self { matrix: rows(m), transposed: rows(m.transpose()) }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, IoError> {
        let m = self.matrix;
        if m[1][0] != 0.0 || m[2] != [0.0, 0.0, 1.0] {
            return Err(IoError::SchemaMismatch("intrinsic matrix is not upper triangular with K[2][2] = 1".into()));
        }
        let transposed = [0, 1, 2].map(|r| [m[0][r], m[1][r], m[2][r]]);
        if transposed != self.transposed {
            return Err(IoError::SchemaMismatch("transposed intrinsics disagree with the matrix".into()));
        }
        CameraIntrinsics::with_skew(m[0][0], m[1][1], m[0][2], m[1][2], m[0][1]).map_err(|e| IoError::SchemaMismatch(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardFile {
    pub squares_x: usize,
    pub squares_y: usize,
    /// Millimetres.
    pub square_size: f64,
}

impl BoardFile {
    pub fn from_spec(spec: &CheckerboardSpec) -> Self {
        Self { squares_x: spec.squares_x(), squares_y: spec.squares_y(), square_size: spec.square_size() }
    }

    pub fn spec(&self) -> Result<CheckerboardSpec, IoError> {
        CheckerboardSpec::new(self.squares_x, self.squares_y, self.square_size).map_err(|e| IoError::SchemaMismatch(e.to_string()))
    }
}

impl Default for BoardFile {
    fn default() -> Self {
        Self::from_spec(&CheckerboardSpec::standard())
    }
}

/// Uncertainties of the camera model, one sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelErrors {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Board → camera pose of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    /// Axis-angle, radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    pub mean_error: f64,
    pub rotation_std: [f64; 3],
    pub translation_std: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub schema_version: u32,
    pub image_size: ImageSize,
    pub intrinsics: IntrinsicsBlock,
    pub distortion: DistortionCoeffs,
    /// Always `mean_euclidean`: mean distance in pixels over all corners.
    pub error_metric: String,
    pub mean_error: f64,
    pub standard_errors: ModelErrors,
    pub views: Vec<ViewRecord>,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Target used for the calibration, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub board: Option<BoardFile>,
}

impl CalibrationFile {
    pub fn from_result(r: &CalibrationResult) -> Self {
        let se = &r.standard_errors;
        let views = r
            .poses
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let w = p.axis_angle();
                let t = p.translation();
                ViewRecord {
                    rotation: [w.x, w.y, w.z],
                    translation: [t.x, t.y, t.z],
                    mean_error: r.per_view_errors.get(i).copied().unwrap_or(f64::NAN),
                    rotation_std: se.rotations.get(i).copied().unwrap_or_default(),
                    translation_std: se.translations.get(i).copied().unwrap_or_default(),
                }
            })
            .collect();
        Self {
            schema_version: CALIBRATION_SCHEMA,
            image_size: ImageSize { width: r.image_width, height: r.image_height },
            intrinsics: IntrinsicsBlock::new(&r.intrinsics),
            distortion: r.distortion,
            error_metric: "mean_euclidean".into(),
            mean_error: r.mean_error,
            standard_errors: ModelErrors {
                fx: se.fx,
                fy: se.fy,
                cx: se.cx,
                cy: se.cy,
                skew: se.skew,
                k1: se.k1,
                k2: se.k2,
                k3: se.k3,
                p1: se.p1,
                p2: se.p2,
            },
            views,
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            board: None,
        }
    }

    pub fn with_board(mut self, spec: &CheckerboardSpec) -> Self {
        self.board = Some(BoardFile::from_spec(spec));
        self
    }

    pub fn to_result(&self) -> Result<CalibrationResult, IoError> {
        if self.schema_version != CALIBRATION_SCHEMA {
            return Err(IoError::SchemaMismatch(format!("schema version {}, expected {CALIBRATION_SCHEMA}", self.schema_version)));
        }
        if self.error_metric != "mean_euclidean" {
            return Err(IoError::SchemaMismatch(format!("unknown error metric {:?}", self.error_metric)));
        }
        if self.image_size.width == 0 || self.image_size.height == 0 {
            return Err(IoError::SchemaMismatch("empty image size".into()));
        }
        if !self.distortion.is_finite() {
            return Err(IoError::SchemaMismatch("non-finite distortion".into()));
        }
        let intrinsics = self.intrinsics.intrinsics()?;
        let poses = self.views.iter().map(|v| CameraPose::from_axis_angle(&Vector3::from(v.rotation), Vector3::from(v.translation))).collect();
        let e = &self.standard_errors;
        Ok(CalibrationResult {
            intrinsics,
            distortion: self.distortion,
            poses,
            per_view_errors: self.views.iter().map(|v| v.mean_error).collect(),
            mean_error: self.mean_error,
            standard_errors: StandardErrors {
                fx: e.fx,
                fy: e.fy,
                cx: e.cx,
                cy: e.cy,
                skew: e.skew,
                k1: e.k1,
                k2: e.k2,
                k3: e.k3,
                p1: e.p1,
                p2: e.p2,
                rotations: self.views.iter().map(|v| v.rotation_std).collect(),
                translations: self.views.iter().map(|v| v.translation_std).collect(),
            },
            image_width: self.image_size.width,
            image_height: self.image_size.height,
            initial_cost: self.initial_cost,
            final_cost: self.final_cost,
        })
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    /// Parses and validates; the file must describe a usable camera.
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let file: Self = from_json_str(text)?;
        file.to_result()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_bytes(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let bytes = read_bytes(path)?;
        Self::from_json(std::str::from_utf8(&bytes).map_err(|e| IoError::CorruptFile(e.to_string()))?)
    }
}

pub fn write_calibration(result: &CalibrationResult, path: &Path) -> Result<(), IoError> {
    CalibrationFile::from_result(result).save(path)
}

pub fn read_calibration(path: &Path) -> Result<CalibrationResult, IoError> {
    CalibrationFile::load(path)?.to_result()
}
