use nalgebra::{Matrix2, Matrix2x3, Matrix3, SMatrix, Vector3};

use super::{axis_angle_to_matrix, CameraIntrinsics, DistortionCoeffs, GeometryError, PixelPoint, MIN_DEPTH};

pub type Matrix2x5 = SMatrix<f64, 2, 5>;

/// Pixel projection together with its partial derivatives.
///
/// Intrinsic columns are ordered `fx, fy, cx, cy, skew`; distortion columns
/// `k1, k2, k3, p1, p2`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionJacobian {
    pub pixel: PixelPoint,
    pub d_rotation: Matrix2x3<f64>,
    pub d_translation: Matrix2x3<f64>,
    pub d_point: Matrix2x3<f64>,
    pub d_intrinsics: Matrix2x5,
    pub d_distortion: Matrix2x5,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `∂(R(w) p) / ∂w` for the axis-angle parameterization.
pub fn rotated_point_jacobian(w: &Vector3<f64>, p: &Vector3<f64>) -> Matrix3<f64> {
    let r = axis_angle_to_matrix(w);
    let theta2 = w.norm_squared();
    if theta2 < 1e-16 {
        return -r * skew(p);
    }
    let inner = w * w.transpose() + (r.transpose() - Matrix3::identity()) * skew(w);
    -r * skew(p) * inner / theta2
}

/// Projects `p` through the pose `(w, t)` and differentiates analytically.
pub fn project_with_jacobian(
    p: &Vector3<f64>,
    w: &Vector3<f64>,
    t: &Vector3<f64>,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<ProjectionJacobian, GeometryError> {
    let r = axis_angle_to_matrix(w);
    let pc = r * p + t;
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::NonPositiveDepth { depth: pc.z });
    }
    let iz = 1.0 / pc.z;
    let (x, y) = (pc.x * iz, pc.y * iz);

    let (k1, k2, k3, p1, p2) = (d.k1, d.k2, d.k3(), d.p1(), d.p2());
    let r2 = x * x + y * y;
    let r4 = r2 * r2;
    let r6 = r4 * r2;
    let radial = 1.0 + k1 * r2 + k2 * r4 + k3 * r6;
    let dradial = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r4;
    let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;

    let d_dist_d_norm = Matrix2::new(
        radial + 2.0 * x * x * dradial + 2.0 * p1 * y + 6.0 * p2 * x,
        2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y,
        2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y,
        radial + 2.0 * y * y * dradial + 6.0 * p1 * y + 2.0 * p2 * x,
    );
    let d_pix_d_dist = Matrix2::new(k.fx, k.skew, 0.0, k.fy);
    let d_norm_d_cam = Matrix2x3::new(iz, 0.0, -x * iz, 0.0, iz, -y * iz);
    let d_pix_d_cam = d_pix_d_dist * d_dist_d_norm * d_norm_d_cam;

    let d_intrinsics = Matrix2x5::new(xd, 0.0, 1.0, 0.0, yd, 0.0, yd, 0.0, 1.0, 0.0);
    let d_dist_d_coeffs =
        Matrix2x5::new(x * r2, x * r4, x * r6, 2.0 * x * y, r2 + 2.0 * x * x, y * r2, y * r4, y * r6, r2 + 2.0 * y * y, 2.0 * x * y);

    Ok(ProjectionJacobian {
        pixel: PixelPoint::new(k.fx * xd + k.skew * yd + k.cx, k.fy * yd + k.cy),
        d_rotation: d_pix_d_cam * rotated_point_jacobian(w, p),
        d_translation: d_pix_d_cam,
        d_point: d_pix_d_cam * r,
        d_intrinsics,
        d_distortion: d_pix_d_dist * d_dist_d_coeffs,
    })
}
