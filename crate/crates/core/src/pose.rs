//! Single-view pose against a known board and the extrinsics visualization scene.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{estimate_homography, extrinsics_from_homography, CalibrationError, CalibrationResult};
use crate::geometry::{
    axis_angle_to_matrix, camera_to_normalized, distort_normalized, project_with_jacobian, undistort_pixel, CameraIntrinsics, CameraPose,
    DistortionCoeffs, NormalizedPoint, PixelPoint, WorldPoint,
};
use crate::optim::{levenberg_marquardt, LmConfig, LmReport, NlsProblem, OptimError};
use crate::target::{board_world_points, CheckerboardSpec, CornerGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("estimated pose puts points behind the camera")]
    BehindCamera,
    #[error("corner grid has {found} corners, board has {expected}")]
    IncompleteGrid { found: usize, expected: usize },
    #[error("pose refinement failed: {0}")]
    Optim(#[from] OptimError),
}

impl From<CalibrationError> for PoseError {
    fn from(e: CalibrationError) -> Self {
        PoseError::DegenerateConfiguration(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardPose {
    pub pose: CameraPose,
    /// Mean Euclidean reprojection error of the corners, pixels.
    pub mean_error: f64,
}

/// Undistort → homography → decomposition → LM on the pixel reprojection error.
pub fn estimate_board_pose(
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
    corners: &CornerGrid,
    spec: &CheckerboardSpec,
) -> Result<BoardPose, PoseError> {
    let world = board_world_points(spec);
    if corners.corners.len() != world.len() {
        return Err(PoseError::IncompleteGrid { found: corners.corners.len(), expected: world.len() });
    }
    let ideal: Vec<PixelPoint> = corners
        .corners
        .iter()
        .map(|&px| undistort_pixel(px, k, d).map(|n| k.normalized_to_pixel(n)))
        .collect::<Result<_, _>>()
        .map_err(|e| PoseError::DegenerateConfiguration(e.to_string()))?;
    let plane: Vec<Vector2<f64>> = world.iter().map(|p| Vector2::new(p.x, p.y)).collect();
    let h = estimate_homography(&plane, &ideal)?;
    let init = extrinsics_from_homography(k, &h)?;
    let (pose, _) = refine_pose(&world, &corners.corners, k, d, &init, &LmConfig::default())?;
    let mean_error = mean_error(&world, &corners.corners, &pose, k, d)?;
    Ok(BoardPose { pose, mean_error })
}

/// The pixel reprojection problem `refine_pose` solves, over `[ω | t]`,
/// and the parameter vector of `pose`.
pub fn pose_problem<'a>(
    world: &'a [WorldPoint],
    observed: &'a [PixelPoint],
    k: &'a CameraIntrinsics,
    d: &'a DistortionCoeffs,
    pose: &CameraPose,
) -> (impl NlsProblem + 'a, DVector<f64>) {
    let mut x = DVector::zeros(6);
    x.fixed_rows_mut::<3>(0).copy_from(&pose.axis_angle());
    x.fixed_rows_mut::<3>(3).copy_from(pose.translation());
    (PoseProblem { world, observed, k, d }, x)
}

/// 6-DoF LM refinement of `init` against observed pixels.
pub fn refine_pose(
    world: &[WorldPoint],
    observed: &[PixelPoint],
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
    init: &CameraPose,
    cfg: &LmConfig,
) -> Result<(CameraPose, LmReport), PoseError> {
    if world.len() != observed.len() {
        return Err(PoseError::IncompleteGrid { found: observed.len(), expected: world.len() });
    }
    if world.len() < 3 {
        return Err(PoseError::DegenerateConfiguration(format!("{} correspondences", world.len())));
    }
    let problem = PoseProblem { world, observed, k, d };
    let mut x0 = DVector::zeros(6);
    x0.fixed_rows_mut::<3>(0).copy_from(&init.axis_angle());
    x0.fixed_rows_mut::<3>(3).copy_from(init.translation());
    if !problem.residuals(&x0).iter().all(|r| r.is_finite()) {
        return Err(PoseError::BehindCamera);
    }
    let report = levenberg_marquardt(&problem, &x0, cfg)?;
    let p = &report.params;
    let pose = CameraPose::from_axis_angle(&Vector3::new(p[0], p[1], p[2]), Vector3::new(p[3], p[4], p[5]));
    if world.iter().any(|w| pose.transform(&w.to_vector()).z <= 0.0) {
        return Err(PoseError::BehindCamera);
    }
    Ok((pose, report))
}

fn mean_error(
    world: &[WorldPoint],
    observed: &[PixelPoint],
    pose: &CameraPose,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<f64, PoseError> {
    crate::calibration::mean_reprojection_error(world, observed, pose, k, d).map_err(|_| PoseError::BehindCamera)
}

struct PoseProblem<'a> {
    world: &'a [WorldPoint],
    observed: &'a [PixelPoint],
    k: &'a CameraIntrinsics,
    d: &'a DistortionCoeffs,
}

impl PoseProblem<'_> {
    fn split(x: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]))
    }
}

impl NlsProblem for PoseProblem<'_> {
    fn num_params(&self) -> usize {
        6
    }

    fn num_residuals(&self) -> usize {
        2 * self.world.len()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (w, t) = Self::split(x);
        let r = axis_angle_to_matrix(&w);
        let mut out = DVector::zeros(self.num_residuals());
        for (i, (p, obs)) in self.world.iter().zip(self.observed).enumerate() {
            let pc = r * p.to_vector() + t;
            let (ru, rv) = match camera_to_normalized(&pc) {
                Ok((n, _)) => {
                    let px = self.k.normalized_to_pixel(distort_normalized(n, self.d));
                    (px.u - obs.u, px.v - obs.v)
                }
                Err(_) => (f64::NAN, f64::NAN),
            };
            out[2 * i] = ru;
            out[2 * i + 1] = rv;
        }
        out
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (w, t) = Self::split(x);
        let mut jac = DMatrix::zeros(self.num_residuals(), 6);
        for (i, p) in self.world.iter().enumerate() {
            let pj = project_with_jacobian(&p.to_vector(), &w, &t, self.k, self.d).ok()?;
            jac.view_mut((2 * i, 0), (2, 3)).copy_from(&pj.d_rotation);
            jac.view_mut((2 * i, 3), (2, 3)).copy_from(&pj.d_translation);
        }
        Some(jac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneMode {
    /// Board fixed at the origin, one camera per view.
    Pattern,
    /// Camera fixed at the origin, one board per view.
    Camera,
}

impl std::str::FromStr for SceneMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pattern" => Ok(Self::Pattern),
            "camera" => Ok(Self::Camera),
            other => Err(format!("unknown mode {other:?}, expected pattern or camera")),
        }
    }
}

/// Rigid placement of an entity in the scene frame (entity → scene).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl Placement {
    pub fn from_pose(p: &CameraPose) -> Self {
        let w = p.axis_angle();
        let t = p.translation();
        Self { rotation: [w.x, w.y, w.z], translation: [t.x, t.y, t.z] }
    }

    pub fn to_pose(&self) -> CameraPose {
        CameraPose::from_axis_angle(&Vector3::from(self.rotation), Vector3::from(self.translation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frustum {
    pub view: Option<usize>,
    pub placement: Placement,
    /// Optical center in scene coordinates.
    pub apex: [f64; 3],
    /// Image corners pushed out to the frustum depth, clockwise from top-left.
    pub base: [[f64; 3]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardOutline {
    pub view: Option<usize>,
    pub placement: Placement,
    /// Outer corners of the checker area in scene coordinates.
    pub corners: [[f64; 3]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicsScene {
    pub mode: SceneMode,
    pub units: String,
    pub frustum_depth: f64,
    pub cameras: Vec<Frustum>,
    pub boards: Vec<BoardOutline>,
}

/// Builds the pattern-centric or camera-centric view of a calibration.
/// Frustum depth is half the median distance from camera to board center.
pub fn export_extrinsics_scene(result: &CalibrationResult, spec: &CheckerboardSpec, mode: SceneMode) -> ExtrinsicsScene {
    let (nx, ny) = spec.corner_dims();
    let s = spec.square_size();
    let board_center = Vector3::new((nx - 1) as f64 * s / 2.0, (ny - 1) as f64 * s / 2.0, 0.0);
    let mut dists: Vec<f64> = result.poses.iter().map(|p| p.transform(&board_center).norm()).collect();
    dists.sort_by(f64::total_cmp);
    let median = match dists.len() {
        0 => 0.0,
        n if n % 2 == 1 => dists[n / 2],
        n => 0.5 * (dists[n / 2 - 1] + dists[n / 2]),
    };
    let depth = 0.5 * median;
    let outline = [(-1.0, -1.0), (nx as f64, -1.0), (nx as f64, ny as f64), (-1.0, ny as f64)].map(|(i, j)| Vector3::new(i * s, j * s, 0.0));
    let (w, h) = (result.image_width as f64, result.image_height as f64);
    let image_corners = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)];
    let k = &result.intrinsics;

    let frustum = |view: Option<usize>, camera_to_scene: &CameraPose| -> Frustum {
        let base = image_corners.map(|(u, v)| {
            let n: NormalizedPoint = k.pixel_to_normalized(PixelPoint::new(u, v));
            arr(&camera_to_scene.transform(&(n.to_homogeneous() * depth)))
        });
        Frustum { view, placement: Placement::from_pose(camera_to_scene), apex: arr(camera_to_scene.translation()), base }
    };
    let board = |view: Option<usize>, board_to_scene: &CameraPose| -> BoardOutline {
        BoardOutline { view, placement: Placement::from_pose(board_to_scene), corners: outline.map(|c| arr(&board_to_scene.transform(&c))) }
    };

    let (cameras, boards) = match mode {
        SceneMode::Pattern => {
            (result.poses.iter().enumerate().map(|(i, p)| frustum(Some(i), &p.inverse())).collect(), vec![board(None, &CameraPose::identity())])
        }
        SceneMode::Camera => {
            (vec![frustum(None, &CameraPose::identity())], result.poses.iter().enumerate().map(|(i, p)| board(Some(i), p)).collect())
        }
    };
    ExtrinsicsScene { mode, units: "mm".into(), frustum_depth: depth, cameras, boards }
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}
