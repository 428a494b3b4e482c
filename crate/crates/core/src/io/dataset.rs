//! Rendered synthetic datasets and their ground-truth files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calib::{BoardFile, ImageSize};
use super::json::{read_json, write_json};
use super::pnm::write_image;
use super::IoError;
use crate::geometry::{project, CameraIntrinsics, CameraPose, DistortionCoeffs};
use crate::image::GrayImage;
use crate::synthetic::{
    cube_orbit_poses, try_random_board_poses, webcam_distortion, webcam_intrinsics, BoardPoseRange, CubeScene, TexturedCube, WEBCAM_HEIGHT,
    WEBCAM_WIDTH,
};
use crate::target::{board_world_points, render_board};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

const POSE_ATTEMPTS: usize = 100_000;

/// Portable-map files in `dir`, sorted by name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let entries = fs::read_dir(dir).map_err(|source| IoError::IoFailure { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| IoError::IoFailure { path: dir.to_path_buf(), source })?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm" | "ppm" | "pnm")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn view_name(i: usize) -> String {
    format!("view_{i:03}.pgm")
}

fn camera_defaults() -> (CameraIntrinsics, DistortionCoeffs, ImageSize) {
    (webcam_intrinsics(), webcam_distortion(), ImageSize { width: WEBCAM_WIDTH, height: WEBCAM_HEIGHT })
}

fn check_camera(k: &CameraIntrinsics, d: &DistortionCoeffs, size: &ImageSize) -> Result<(), IoError> {
    k.validate().map_err(|e| IoError::SchemaMismatch(e.to_string()))?;
    if !d.is_finite() {
        return Err(IoError::SchemaMismatch("non-finite distortion".into()));
    }
    if size.width < 32 || size.height < 32 {
        return Err(IoError::SchemaMismatch(format!("image {}×{} is too small", size.width, size.height)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseRangeSpec {
    pub max_tilt: f64,
    pub max_spin: f64,
    pub min_distance: f64,
    pub max_distance: f64,
    pub margin: f64,
}

impl Default for PoseRangeSpec {
    fn default() -> Self {
        let r = BoardPoseRange::default();
        Self { max_tilt: r.max_tilt, max_spin: r.max_spin, min_distance: r.min_distance, max_distance: r.max_distance, margin: r.margin }
    }
}

/// Input of `render-board`. Every field is optional in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoardRenderSpec {
    pub board: BoardFile,
    pub views: usize,
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub image_size: ImageSize,
    pub poses: PoseRangeSpec,
}

impl Default for BoardRenderSpec {
    fn default() -> Self {
        let (intrinsics, distortion, image_size) = camera_defaults();
        Self { board: BoardFile::default(), views: 20, seed: 0, intrinsics, distortion, image_size, poses: PoseRangeSpec::default() }
    }
}

/// Input of `render-scene`: a textured cube on a circular orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubeRenderSpec {
    pub edge: f64,
    pub blobs_per_face: usize,
    pub seed: u64,
    pub views: usize,
    pub distance: f64,
    pub elevation_deg: f64,
    pub center_azimuth_deg: f64,
    pub step_deg: f64,
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub image_size: ImageSize,
}

impl Default for CubeRenderSpec {
    fn default() -> Self {
        let (intrinsics, distortion, image_size) = camera_defaults();
        Self {
            edge: 200.0,
            blobs_per_face: 120,
            seed: 0,
            views: 5,
            distance: 750.0,
            elevation_deg: 30.0,
            center_azimuth_deg: 45.0,
            step_deg: 8.0,
            intrinsics,
            distortion,
            image_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthView {
    pub image: String,
    /// World → camera, axis-angle radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    /// Distorted projections of the board's interior corners, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corners: Option<Vec<[f64; 2]>>,
}

impl GroundTruthView {
    pub fn pose(&self) -> CameraPose {
        CameraPose::from_axis_angle(&Vector3::from(self.rotation), Vector3::from(self.translation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeFile {
    pub edge: f64,
    pub seed: u64,
    pub blobs_per_face: usize,
}

/// Everything used to render a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub image_size: ImageSize,
    pub views: Vec<GroundTruthView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub board: Option<BoardFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube: Option<CubeFile>,
}

impl GroundTruth {
    pub fn poses(&self) -> Vec<CameraPose> {
        self.views.iter().map(GroundTruthView::pose).collect()
    }

    /// The cube scene, for datasets made by [`CubeRenderSpec`].
    pub fn cube_scene(&self) -> Option<CubeScene> {
        let c = self.cube?;
        Some(CubeScene {
            cube: TexturedCube::new(c.edge, c.seed, c.blobs_per_face),
            intrinsics: self.intrinsics,
            distortion: self.distortion,
            width: self.image_size.width,
            height: self.image_size.height,
            poses: self.poses(),
        })
    }

    pub fn load(dir: &Path) -> Result<Self, IoError> {
        read_json(&dir.join(GROUND_TRUTH_FILE))
    }
}

fn write_dataset(dir: &Path, images: &[GrayImage], truth: &GroundTruth) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError::IoFailure { path: dir.to_path_buf(), source })?;
    for (img, view) in images.iter().zip(&truth.views) {
        write_image(img, &dir.join(&view.image))?;
    }
    write_json(truth, &dir.join(GROUND_TRUTH_FILE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardDataset {
    pub images: Vec<GrayImage>,
    pub truth: GroundTruth,
}

impl BoardRenderSpec {
    pub fn render(&self) -> Result<BoardDataset, IoError> {
        let spec = self.board.spec()?;
        let (k, d, size) = (self.intrinsics, self.distortion, self.image_size);
        check_camera(&k, &d, &size)?;
        let p = &self.poses;
        let valid = p.max_tilt >= 0.0 && p.max_spin >= 0.0 && p.min_distance > 0.0 && p.min_distance <= p.max_distance && p.margin >= 0.0;
        if !valid {
            return Err(IoError::SchemaMismatch("pose range must be non-negative with min_distance ≤ max_distance".into()));
        }
        let range = BoardPoseRange {
            max_tilt: p.max_tilt,
            max_spin: p.max_spin,
            min_distance: p.min_distance,
            max_distance: p.max_distance,
            margin: p.margin,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let poses = try_random_board_poses(&mut rng, self.views, &spec, &k, &d, size.width, size.height, &range, POSE_ATTEMPTS)
            .ok_or_else(|| IoError::SchemaMismatch("no pose in the range keeps the board inside the image".into()))?;
        let images = poses
            .par_iter()
            .map(|pose| render_board(&spec, &k, &d, pose, size.width, size.height))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::SchemaMismatch(e.to_string()))?;
        let world = board_world_points(&spec);
        let views = poses
            .iter()
            .enumerate()
            .map(|(i, pose)| {
                let corners = world.iter().map(|w| project(w, pose, &k, &d).map(|p| [p.u, p.v])).collect::<Result<Vec<_>, _>>().ok();
                let (w, t) = (pose.axis_angle(), pose.translation());
                GroundTruthView { image: view_name(i), rotation: w.into(), translation: [t.x, t.y, t.z], corners }
            })
            .collect();
        let truth = GroundTruth { intrinsics: k, distortion: d, image_size: size, views, board: Some(self.board), cube: None };
        Ok(BoardDataset { images, truth })
    }
}

impl BoardDataset {
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        write_dataset(dir, &self.images, &self.truth)
    }
}

#[derive(Debug, Clone)]
pub struct CubeDataset {
    pub images: Vec<GrayImage>,
    pub truth: GroundTruth,
    pub scene: CubeScene,
}

impl CubeRenderSpec {
    pub fn render(&self) -> Result<CubeDataset, IoError> {
        let (k, d, size) = (self.intrinsics, self.distortion, self.image_size);
        check_camera(&k, &d, &size)?;
        if !(self.edge > 0.0 && self.edge.is_finite()) || self.distance <= self.edge {
            return Err(IoError::SchemaMismatch(format!("cameras at {} cannot view a cube of edge {}", self.distance, self.edge)));
        }
        let poses = cube_orbit_poses(
            self.views,
            self.distance,
            self.elevation_deg.to_radians(),
            self.center_azimuth_deg.to_radians(),
            self.step_deg.to_radians(),
        );
        let scene = CubeScene {
            cube: TexturedCube::new(self.edge, self.seed, self.blobs_per_face),
            intrinsics: k,
            distortion: d,
            width: size.width,
            height: size.height,
            poses,
        };
        let views = scene
            .poses
            .iter()
            .enumerate()
            .map(|(i, pose)| {
                let (w, t) = (pose.axis_angle(), pose.translation());
                GroundTruthView { image: view_name(i), rotation: w.into(), translation: [t.x, t.y, t.z], corners: None }
            })
            .collect();
        let cube = CubeFile { edge: self.edge, seed: self.seed, blobs_per_face: self.blobs_per_face };
        let truth = GroundTruth { intrinsics: k, distortion: d, image_size: size, views, board: None, cube: Some(cube) };
        Ok(CubeDataset { images: scene.render(), truth, scene })
    }
}

impl CubeDataset {
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        write_dataset(dir, &self.images, &self.truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_image;

    #[test]
    fn empty_spec_uses_defaults() {
        let spec: BoardRenderSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(spec, BoardRenderSpec::default());
        let spec: CubeRenderSpec = serde_json::from_str("{\"seed\": 4}").unwrap();
        assert_eq!(spec, CubeRenderSpec { seed: 4, ..CubeRenderSpec::default() });
    }

    #[test]
    fn board_dataset_round_trips() {
        let spec = BoardRenderSpec { views: 3, seed: 9, ..BoardRenderSpec::default() };
        let data = spec.render().unwrap();
        assert_eq!(data, spec.render().unwrap());
        let dir = tempfile::tempdir().unwrap();
        data.write(dir.path()).unwrap();
        let files = image_files(dir.path()).unwrap();
        assert_eq!(
            files.iter().map(|f| f.file_name().unwrap().to_str().unwrap()).collect::<Vec<_>>(),
            ["view_000.pgm", "view_001.pgm", "view_002.pgm"]
        );
        assert_eq!(read_image(&files[1]).unwrap(), data.images[1]);
        let truth = GroundTruth::load(dir.path()).unwrap();
        assert_eq!(truth.views.len(), 3);
        assert_eq!(truth.views[0].corners.as_ref().unwrap().len(), 54);
        for (a, b) in truth.poses().iter().zip(data.truth.poses()) {
            assert!((a.rotation() - b.rotation()).amax() < 1e-12 && a.translation() == b.translation());
        }
    }

    #[test]
    fn impossible_pose_range_is_reported() {
        let spec = BoardRenderSpec {
            views: 1,
            poses: PoseRangeSpec { min_distance: 50.0, max_distance: 60.0, ..PoseRangeSpec::default() },
            ..BoardRenderSpec::default()
        };
        assert!(matches!(spec.render(), Err(IoError::SchemaMismatch(_))));
    }

    #[test]
    fn cube_truth_rebuilds_the_scene() {
        let spec = CubeRenderSpec { views: 2, blobs_per_face: 10, image_size: ImageSize { width: 160, height: 120 }, ..CubeRenderSpec::default() };
        let data = spec.render().unwrap();
        let rebuilt = data.truth.cube_scene().unwrap();
        assert_eq!(rebuilt.cube.blobs(), data.scene.cube.blobs());
        assert_eq!(data.images.len(), 2);
    }
}
