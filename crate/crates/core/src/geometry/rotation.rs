use nalgebra::{Matrix3, Vector3};

use super::{check_rotation, GeometryError};

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// Rodrigues formula.
pub fn axis_angle_to_matrix(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = skew(w);
    if theta2 < 1e-24 {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let theta = theta2.sqrt();
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta2;
    Matrix3::identity() + a * k + b * k * k
}

/// Inverse Rodrigues; the returned angle `‖w‖` lies in `[0, π]`.
pub fn matrix_to_axis_angle(r: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    check_rotation(r)?;
    let v = vee(r);
    let sin2 = v.norm(); // 2 sin θ
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = (0.5 * sin2).atan2(cos);

    if theta < 1e-12 {
        return Ok(0.5 * v);
    }
    if theta < std::f64::consts::PI - 1e-3 {
        return Ok(v * (theta / sin2));
    }

    // Near π the antisymmetric part vanishes; read the axis from k kᵀ instead.
    let sym = (r + r.transpose()) * 0.5;
    let kkt = (sym - Matrix3::identity() * cos) / (1.0 - cos);
    let col = (0..3).max_by(|&a, &b| kkt[(a, a)].total_cmp(&kkt[(b, b)])).unwrap_or(0);
    let mut axis: Vector3<f64> = kkt.column(col).into();
    axis /= axis.norm();
    if axis.dot(&v) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Closest rotation in Frobenius norm (`U Vᵀ` with a determinant fix).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn zero_is_identity() {
        assert_eq!(axis_angle_to_matrix(&Vector3::zeros()), Matrix3::identity());
        assert_eq!(matrix_to_axis_angle(&Matrix3::identity()).unwrap(), Vector3::zeros());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = axis_angle_to_matrix(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let y = r * Vector3::x();
        assert!((y - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn half_turn_round_trip() {
        for axis in [Vector3::x(), Vector3::new(1.0, 1.0, 0.0).normalize(), Vector3::new(-0.3, 0.5, 0.8).normalize()] {
            for angle in [PI, PI - 1e-5, PI - 2e-3] {
                let w = axis * angle;
                let back = matrix_to_axis_angle(&axis_angle_to_matrix(&w)).unwrap();
                let err = (axis_angle_to_matrix(&back) - axis_angle_to_matrix(&w)).abs().max();
                assert!(err < 1e-10, "angle {angle}: {err}");
                assert!(back.norm() <= PI + 1e-15);
            }
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(matches!(matrix_to_axis_angle(&m), Err(GeometryError::InvalidRotation { .. })));
        assert!(matrix_to_axis_angle(&(Matrix3::identity() * 1.01)).is_err());
    }

    #[test]
    fn nearest_rotation_projects() {
        let r = axis_angle_to_matrix(&Vector3::new(0.3, 0.2, -0.1));
        let noisy = r + Matrix3::new(1e-3, -2e-3, 0.0, 0.0, 1e-3, 5e-4, -1e-3, 0.0, 2e-3);
        let fixed = nearest_rotation(&noisy);
        assert!(check_rotation(&fixed).is_ok());
        assert!((fixed - r).abs().max() < 5e-3);
        let reflected = -r;
        assert!((nearest_rotation(&reflected).determinant() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip(ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in -1.0..1.0f64, angle in 0.0..std::f64::consts::PI) {
            let axis = Vector3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-3);
            let w = axis.normalize() * angle;
            let r = axis_angle_to_matrix(&w);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            let back = matrix_to_axis_angle(&r).unwrap();
            prop_assert!((back - w).abs().max() < 1e-10);
        }

        #[test]
        fn fixed_angle_round_trip(ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in -1.0..1.0f64) {
            let axis = Vector3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-3);
            let w = axis.normalize() * 0.7;
            let r2 = axis_angle_to_matrix(&matrix_to_axis_angle(&axis_angle_to_matrix(&w)).unwrap());
            prop_assert!((r2 - axis_angle_to_matrix(&w)).abs().max() < 1e-10);
        }
    }
}
