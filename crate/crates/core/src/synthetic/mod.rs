//! Ground-truth scenes for tests, benchmarks and the `render-*` commands.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{axis_angle_to_matrix, project, CameraIntrinsics, CameraPose, DistortionCoeffs, PixelPoint};
use crate::target::{board_world_points, CheckerboardSpec, CornerGrid};

mod cube;

pub use cube::{cube_orbit_poses, render_cube, Blob, CubeEvaluation, CubeScene, TexturedCube, CUBE_BACKGROUND};

/// Intrinsics of the reference 640×480 webcam.
pub fn webcam_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(839.3458, 839.5573, 332.3661, 259.5099).expect("valid constants")
}

pub fn webcam_distortion() -> DistortionCoeffs {
    DistortionCoeffs::radial(0.0101, -0.1883)
}

pub const WEBCAM_WIDTH: usize = 640;
pub const WEBCAM_HEIGHT: usize = 480;

/// Sampling ranges for [`random_board_poses`].
#[derive(Debug, Clone)]
pub struct BoardPoseRange {
    /// Maximum out-of-plane tilt (radians) about each in-plane axis.
    pub max_tilt: f64,
    /// Maximum in-plane spin (radians).
    pub max_spin: f64,
    pub min_distance: f64,
    pub max_distance: f64,
    /// Every board square corner, including the outer ring, keeps this many
    /// pixels from the image border.
    pub margin: f64,
}

impl Default for BoardPoseRange {
    fn default() -> Self {
        Self { max_tilt: 0.6, max_spin: 0.5, min_distance: 400.0, max_distance: 700.0, margin: 8.0 }
    }
}

/// Draws board poses whose full checker area stays inside the image.
///
/// # Panics
/// If 100 000 draws do not yield `count` poses.
#[allow(clippy::too_many_arguments)]
pub fn random_board_poses<R: Rng>(
    rng: &mut R,
    count: usize,
    spec: &CheckerboardSpec,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
    width: usize,
    height: usize,
    range: &BoardPoseRange,
) -> Vec<CameraPose> {
    try_random_board_poses(rng, count, spec, k, d, width, height, range, 100_000).expect("pose range cannot fit the board into the image")
}

/// As [`random_board_poses`], giving up after `max_attempts` draws.
#[allow(clippy::too_many_arguments)]
pub fn try_random_board_poses<R: Rng>(
    rng: &mut R,
    count: usize,
    spec: &CheckerboardSpec,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
    width: usize,
    height: usize,
    range: &BoardPoseRange,
    max_attempts: usize,
) -> Option<Vec<CameraPose>> {
    let (nx, ny) = spec.corner_dims();
    let s = spec.square_size();
    let center = Vector3::new((nx - 1) as f64 * s / 2.0, (ny - 1) as f64 * s / 2.0, 0.0);
    // outline of the checker area including the outer square ring
    let outline: Vec<Vector3<f64>> =
        [(-1.0, -1.0), (nx as f64, -1.0), (nx as f64, ny as f64), (-1.0, ny as f64)].iter().map(|&(i, j)| Vector3::new(i * s, j * s, 0.0)).collect();
    let mut poses = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while poses.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return None;
        }
        let w = Vector3::new(
            rng.random_range(-range.max_tilt..=range.max_tilt),
            rng.random_range(-range.max_tilt..=range.max_tilt),
            rng.random_range(-range.max_spin..=range.max_spin),
        );
        let r = axis_angle_to_matrix(&w);
        let z = rng.random_range(range.min_distance..=range.max_distance);
        let lateral = 0.25 * z;
        let offset = Vector3::new(rng.random_range(-lateral..=lateral), rng.random_range(-0.7 * lateral..=0.7 * lateral), z);
        let pose = CameraPose::from_axis_angle(&w, offset - r * center);
        let inside = outline.iter().all(|p| {
            project(&crate::geometry::WorldPoint::from_vector(p), &pose, k, d).is_ok_and(|px| {
                px.u >= range.margin
                    && px.v >= range.margin
                    && px.u <= width as f64 - 1.0 - range.margin
                    && px.v <= height as f64 - 1.0 - range.margin
            })
        });
        if inside {
            poses.push(pose);
        }
    }
    Some(poses)
}

/// Projects the board corners of every pose, adding isotropic Gaussian
/// pixel noise of standard deviation `noise`.
pub fn synthesize_corner_grids<R: Rng>(
    rng: &mut R,
    spec: &CheckerboardSpec,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
    poses: &[CameraPose],
    noise: f64,
) -> Vec<CornerGrid> {
    let world = board_world_points(spec);
    let (nx, ny) = spec.corner_dims();
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite sigma");
    poses
        .iter()
        .enumerate()
        .map(|(view, pose)| {
            let corners = world
                .iter()
                .map(|w| {
                    let p = project(w, pose, k, d).expect("board in front of camera");
                    if noise > 0.0 {
                        PixelPoint::new(p.u + normal.sample(rng), p.v + normal.sample(rng))
                    } else {
                        p
                    }
                })
                .collect();
            CornerGrid { view_id: view, cols: nx, rows: ny, corners }
        })
        .collect()
}
