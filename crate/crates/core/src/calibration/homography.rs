use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use super::CalibrationError;
use crate::geometry::PixelPoint;

/// Condition-number cap past which a DLT solution is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Plane-to-image projective map, scaled so `H[(2,2)] = 1` when that entry
/// is not vanishingly small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

impl Homography {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self, CalibrationError> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(CalibrationError::DegenerateConfiguration("non-finite homography".into()));
        }
        let sv = matrix.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if !(lo > 0.0 && hi / lo < MAX_CONDITION) {
            return Err(CalibrationError::DegenerateConfiguration(format!("homography condition number {:e}", hi / lo)));
        }
        let h33 = matrix[(2, 2)];
        let matrix = if h33.abs() > 1e-12 * matrix.norm() { matrix / h33 } else { matrix / matrix.norm() };
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    /// Maps a plane point; `None` if it lands on the line at infinity.
    pub fn apply(&self, p: &Vector2<f64>) -> Option<PixelPoint> {
        let q = self.matrix * Vector3::new(p.x, p.y, 1.0);
        (q.z.abs() > f64::EPSILON * q.norm()).then(|| PixelPoint::new(q.x / q.z, q.y / q.z))
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(pts: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(mean_dist > 0.0 && mean_dist.is_finite()) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

fn apply_affine(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Ratio of the smaller to the larger principal spread; 0 for collinear sets.
fn planar_spread(pts: &[Vector2<f64>]) -> f64 {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let cov = pts.iter().fold(nalgebra::Matrix2::zeros(), |a, p| a + (p - c) * (p - c).transpose());
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi > 0.0 {
        lo.max(0.0) / hi
    } else {
        0.0
    }
}

/// Normalized DLT from plane coordinates to pixels.
pub fn estimate_homography(world_xy: &[Vector2<f64>], image: &[PixelPoint]) -> Result<Homography, CalibrationError> {
    if world_xy.len() != image.len() {
        return Err(CalibrationError::ShapeMismatch(format!("{} plane points vs {} image points", world_xy.len(), image.len())));
    }
    if world_xy.len() < 4 {
        return Err(CalibrationError::DegenerateConfiguration(format!("{} correspondences, need 4", world_xy.len())));
    }
    let img: Vec<Vector2<f64>> = image.iter().map(|p| p.to_vector()).collect();
    if planar_spread(world_xy) < 1e-12 || planar_spread(&img) < 1e-12 {
        return Err(CalibrationError::DegenerateConfiguration("points are collinear".into()));
    }
    let degenerate = || CalibrationError::DegenerateConfiguration("coincident points".into());
    let tw = normalizer(world_xy).ok_or_else(degenerate)?;
    let ti = normalizer(&img).ok_or_else(degenerate)?;

    // Padded to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * world_xy.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (w, p)) in world_xy.iter().zip(&img).enumerate() {
        let (x, y) = {
            let q = apply_affine(&tw, w);
            (q.x, q.y)
        };
        let (u, v) = {
            let q = apply_affine(&ti, p);
            (q.x, q.y)
        };
        let r0 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        let r1 = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v];
        for c in 0..9 {
            a[(2 * k, c)] = r0[c];
            a[(2 * k + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| CalibrationError::DegenerateConfiguration("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    // A second (near-)zero singular value means the solution is not unique.
    let next = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[order.len() - 1]];
    if next <= 1e-10 * largest {
        return Err(CalibrationError::DegenerateConfiguration("rank-deficient DLT system".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let ti_inv = ti.try_inverse().ok_or_else(degenerate)?;
    Homography::new(ti_inv * hn * tw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<Vector2<f64>> {
        (0..6).flat_map(|j| (0..9).map(move |i| Vector2::new(i as f64 * 23.0, j as f64 * 23.0))).collect()
    }

    #[test]
    fn identity_from_four_points() {
        let pts = [Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(1.0, 1.0), Vector2::new(0.0, 1.0)];
        let img: Vec<_> = pts.iter().map(|p| PixelPoint::new(p.x, p.y)).collect();
        let h = estimate_homography(&pts, &img).unwrap();
        assert!((h.matrix() - Matrix3::identity()).amax() < 1e-10);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<_> = (0..4).map(|i| Vector2::new(i as f64, 2.0 * i as f64)).collect();
        let img: Vec<_> = pts.iter().map(|p| PixelPoint::new(p.x + 3.0, p.y)).collect();
        assert!(matches!(estimate_homography(&pts, &img), Err(CalibrationError::DegenerateConfiguration(_))));
    }

    #[test]
    fn too_few_or_mismatched() {
        let pts = grid();
        let img: Vec<_> = pts.iter().map(|p| PixelPoint::new(p.x, p.y)).collect();
        assert!(estimate_homography(&pts[..3], &img[..3]).is_err());
        assert!(matches!(estimate_homography(&pts, &img[..10]), Err(CalibrationError::ShapeMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn recovers_random_homography(e in proptest::collection::vec(-0.3f64..0.3, 8)) {
            // Well-conditioned: identity-like scale plus bounded perturbation.
            let h = Matrix3::new(
                2.0 + e[0], e[1], 300.0 + 100.0 * e[2],
                e[3], 2.0 + e[4], 200.0 + 100.0 * e[5],
                1e-3 * e[6], 1e-3 * e[7], 1.0,
            );
            let truth = Homography::new(h).unwrap();
            let pts = grid();
            let img: Vec<_> = pts.iter().map(|p| truth.apply(p).unwrap()).collect();
            let est = estimate_homography(&pts, &img).unwrap();
            let rel = (est.matrix() - truth.matrix()).amax() / truth.matrix().amax();
            prop_assert!(rel < 1e-8, "relative error {rel}");
        }
    }
}
