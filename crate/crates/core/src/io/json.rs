//! JSON helpers and the pose and reconstruction summaries.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes, IoError};
use crate::geometry::{CameraIntrinsics, CameraPose, DistortionCoeffs};
use crate::sfm::SfmScene;

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Type errors become `SchemaMismatch`, everything else `CorruptFile`.
pub(crate) fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => IoError::SchemaMismatch(e.to_string()),
        _ => IoError::CorruptFile(e.to_string()),
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    write_bytes(path, to_json_string(value).as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = read_bytes(path)?;
    from_json_str(std::str::from_utf8(&bytes).map_err(|e| IoError::CorruptFile(e.to_string()))?)
}

fn rows(m: &nalgebra::Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

/// Board → camera pose estimated from one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub image: String,
    /// Axis-angle, radians.
    pub rotation: [f64; 3],
    pub rotation_matrix: [[f64; 3]; 3],
    pub translation: [f64; 3],
    /// Camera center in board coordinates.
    pub camera_center: [f64; 3],
    pub units: String,
    pub error_metric: String,
    pub mean_error: f64,
}

impl PoseFile {
    pub fn new(image: &str, pose: &CameraPose, mean_error: f64) -> Self {
        let (w, t, c) = (pose.axis_angle(), pose.translation(), pose.center());
        Self {
            image: image.to_string(),
            rotation: [w.x, w.y, w.z],
            rotation_matrix: rows(pose.rotation()),
            translation: [t.x, t.y, t.z],
            camera_center: [c.x, c.y, c.z],
            units: "mm".into(),
            error_metric: "mean_euclidean".into(),
            mean_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub image: String,
    /// World → camera pose, absent when the view was not registered.
    pub rotation: Option<[f64; 3]>,
    pub translation: Option<[f64; 3]>,
    pub center: Option<[f64; 3]>,
    pub features: usize,
    /// Observations of valid points.
    pub observations: usize,
}

/// Reconstruction summary written next to the point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub views: Vec<SceneView>,
    /// `[reference, scale]` views fixing the gauge.
    pub gauge: [usize; 2],
    pub points: usize,
    pub error_metric: String,
    pub mean_reprojection_error: f64,
    /// Name of the PLY file holding the points.
    pub cloud: String,
}

impl SceneFile {
    pub fn new(scene: &SfmScene, images: &[String], cloud: &str) -> Self {
        let mut observations = vec![0; scene.poses.len()];
        for r in scene.residuals() {
            observations[r.view] += 1;
        }
        let views = scene
            .poses
            .iter()
            .enumerate()
            .map(|(v, pose)| {
                let pose = pose.as_ref();
                let a = pose.map(|p| p.axis_angle());
                SceneView {
                    image: images.get(v).cloned().unwrap_or_else(|| format!("view {v}")),
                    rotation: a.map(|a| [a.x, a.y, a.z]),
                    translation: pose.map(|p| [p.translation().x, p.translation().y, p.translation().z]),
                    center: pose.map(|p| p.center().into()),
                    features: scene.keypoints[v].len(),
                    observations: observations[v],
                }
            })
            .collect();
        Self {
            intrinsics: scene.intrinsics,
            distortion: scene.distortion,
            views,
            gauge: [scene.gauge.0, scene.gauge.1],
            points: scene.valid_track_count(),
            error_metric: "mean_euclidean".into(),
            mean_reprojection_error: scene.mean_reprojection_error(),
            cloud: cloud.to_string(),
        }
    }
}
