//! Pinhole camera model and point-level transforms.
//!
//! Convention is column-vector: `pixel_h ∝ K [R | t] X_h`. A [`CameraPose`]
//! maps world points into the camera frame, distortion is applied to the
//! normalized coordinates after the perspective divide, and the intrinsics
//! map the distorted normalized point to pixels.

mod jacobian;
mod rotation;

pub use jacobian::{project_with_jacobian, rotated_point_jacobian, ProjectionJacobian};
pub use rotation::{axis_angle_to_matrix, matrix_to_axis_angle, nearest_rotation};

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum camera-frame depth for a point to be projectable.
pub const MIN_DEPTH: f64 = 1e-12;

const UNDISTORT_TOL: f64 = 1e-12;
const UNDISTORT_MAX_ITERS: usize = 50;
const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("point has non-positive camera depth {depth}")]
    NonPositiveDepth { depth: f64 },
    #[error("undistortion did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is not a proper rotation (orthonormality error {orthogonality}, det {det})")]
    InvalidRotation { orthogonality: f64, det: f64 },
    #[error("focal lengths must be positive (fx={fx}, fy={fy})")]
    InvalidIntrinsics { fx: f64, fy: f64 },
}

/// Image point in pixels; `u` along columns, `v` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.u, self.v)
    }

    pub fn distance(self, other: PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// World point, millimeters by convention.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Camera-frame coordinates divided by depth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Homogeneous bearing `(x, y, 1)`.
    pub fn to_homogeneous(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, 1.0)
    }
}

/// Positive depth scale relating a homogeneous image point to its world point.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ScaleFactor(f64);

impl ScaleFactor {
    pub fn new(w: f64) -> Result<Self, GeometryError> {
        if w > MIN_DEPTH && w.is_finite() {
            Ok(Self(w))
        } else {
            Err(GeometryError::NonPositiveDepth { depth: w })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, skew };
        k.validate()?;
        Ok(k)
    }

    pub fn identity() -> Self {
        Self { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, skew: 0.0 }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.skew].iter().all(|v| v.is_finite());
        if self.fx > 0.0 && self.fy > 0.0 && finite {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics { fx: self.fx, fy: self.fy })
        }
    }

    /// Upper-triangular `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn from_matrix(k: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let k = k / k[(2, 2)];
        Self::with_skew(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)], k[(0, 1)])
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let (fx, fy, s, cx, cy) = (self.fx, self.fy, self.skew, self.cx, self.cy);
        Matrix3::new(1.0 / fx, -s / (fx * fy), (s * cy - cx * fy) / (fx * fy), 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0)
    }

    /// Maps a (distorted) normalized point to pixels.
    pub fn normalized_to_pixel(&self, n: NormalizedPoint) -> PixelPoint {
        PixelPoint::new(self.fx * n.x + self.skew * n.y + self.cx, self.fy * n.y + self.cy)
    }

    /// Exact inverse of [`Self::normalized_to_pixel`].
    pub fn pixel_to_normalized(&self, px: PixelPoint) -> NormalizedPoint {
        let y = (px.v - self.cy) / self.fy;
        let x = (px.u - self.cx - self.skew * y) / self.fx;
        NormalizedPoint::new(x, y)
    }
}

/// Brown–Conrady radial + tangential coefficients. Absent terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionCoeffs {
    pub k1: f64,
    pub k2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
}

impl DistortionCoeffs {
    pub const fn none() -> Self {
        Self { k1: 0.0, k2: 0.0, k3: None, p1: None, p2: None }
    }

    pub const fn radial(k1: f64, k2: f64) -> Self {
        Self { k1, k2, k3: None, p1: None, p2: None }
    }

    pub fn k3(&self) -> f64 {
        self.k3.unwrap_or(0.0)
    }

    pub fn p1(&self) -> f64 {
        self.p1.unwrap_or(0.0)
    }

    pub fn p2(&self) -> f64 {
        self.p2.unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3() == 0.0 && self.p1() == 0.0 && self.p2() == 0.0
    }

    pub fn is_finite(&self) -> bool {
        [self.k1, self.k2, self.k3(), self.p1(), self.p2()].iter().all(|v| v.is_finite())
    }

    /// Returns a copy with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k1: self.k1 * factor,
            k2: self.k2 * factor,
            k3: self.k3.map(|v| v * factor),
            p1: self.p1.map(|v| v * factor),
            p2: self.p2.map(|v| v * factor),
        }
    }

    fn radial_factor(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3()))
    }

    fn tangential(&self, x: f64, y: f64) -> (f64, f64) {
        let (p1, p2) = (self.p1(), self.p2());
        let r2 = x * x + y * y;
        (2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x), p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y)
    }
}

/// Rigid world→camera transform: `X_c = R X_w + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_axis_angle(axis_angle: &Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: axis_angle_to_matrix(axis_angle), translation }
    }

    /// Pose of a camera centered at `center` whose optical axis points at
    /// `target`, with image rows running along `down` as far as possible.
    pub fn look_at(center: &Vector3<f64>, target: &Vector3<f64>, down: &Vector3<f64>) -> Self {
        let z = (target - center).normalize();
        let x = down.cross(&z).normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self { rotation, translation: -rotation * center }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn axis_angle(&self) -> Vector3<f64> {
        // The stored rotation is always valid, so conversion cannot fail.
        matrix_to_axis_angle(&self.rotation).unwrap_or_else(|_| Vector3::zeros())
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &CameraPose) -> Self {
        Self { rotation: self.rotation * first.rotation, translation: self.rotation * first.translation + self.translation }
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), GeometryError> {
    let orthogonality = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if orthogonality < ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL {
        Ok(())
    } else {
        Err(GeometryError::InvalidRotation { orthogonality, det })
    }
}

/// Perspective divide of a camera-frame point.
pub fn camera_to_normalized(pc: &Vector3<f64>) -> Result<(NormalizedPoint, ScaleFactor), GeometryError> {
    let w = ScaleFactor::new(pc.z)?;
    Ok((NormalizedPoint::new(pc.x / pc.z, pc.y / pc.z), w))
}

/// Projects a world point to pixels.
pub fn project(p: &WorldPoint, pose: &CameraPose, k: &CameraIntrinsics, d: &DistortionCoeffs) -> Result<PixelPoint, GeometryError> {
    project_scaled(p, pose, k, d).map(|(px, _)| px)
}

/// Like [`project`], also returning the scale `w` of `w [u v 1]ᵀ = K [R|t] X`.
pub fn project_scaled(
    p: &WorldPoint,
    pose: &CameraPose,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<(PixelPoint, ScaleFactor), GeometryError> {
    let pc = pose.transform(&p.to_vector());
    let (n, w) = camera_to_normalized(&pc)?;
    Ok((k.normalized_to_pixel(distort_normalized(n, d)), w))
}

pub fn pixel_to_normalized(px: PixelPoint, k: &CameraIntrinsics) -> NormalizedPoint {
    k.pixel_to_normalized(px)
}

pub fn distort_normalized(n: NormalizedPoint, d: &DistortionCoeffs) -> NormalizedPoint {
    let r2 = n.x * n.x + n.y * n.y;
    let radial = d.radial_factor(r2);
    let (tx, ty) = d.tangential(n.x, n.y);
    NormalizedPoint::new(n.x * radial + tx, n.y * radial + ty)
}

/// Inverts [`distort_normalized`] by fixed-point iteration.
pub fn undistort_normalized(n: NormalizedPoint, d: &DistortionCoeffs) -> Result<NormalizedPoint, GeometryError> {
    if d.is_zero() {
        return Ok(n);
    }
    let (mut x, mut y) = (n.x, n.y);
    for _ in 0..UNDISTORT_MAX_ITERS {
        let radial = d.radial_factor(x * x + y * y);
        let (tx, ty) = d.tangential(x, y);
        let nx = (n.x - tx) / radial;
        let ny = (n.y - ty) / radial;
        if !(nx.is_finite() && ny.is_finite()) {
            break;
        }
        let step = (nx - x).hypot(ny - y);
        x = nx;
        y = ny;
        if step < UNDISTORT_TOL {
            return Ok(NormalizedPoint::new(x, y));
        }
    }
    Err(GeometryError::NoConvergence { iterations: UNDISTORT_MAX_ITERS })
}

/// Pixel → undistorted normalized coordinates.
pub fn undistort_pixel(px: PixelPoint, k: &CameraIntrinsics, d: &DistortionCoeffs) -> Result<NormalizedPoint, GeometryError> {
    undistort_normalized(k.pixel_to_normalized(px), d)
}
