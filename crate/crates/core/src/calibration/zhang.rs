use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{CalibrationError, Homography};
use crate::geometry::{nearest_rotation, CameraIntrinsics, CameraPose};

/// Row `v_ij` of the constraint `h_iᵀ B h_j = v_ij · b`, with
/// `b = (B11, B12, B22, B13, B23, B33)`.
fn v_row(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let (hi, hj) = (h.column(i), h.column(j));
    [hi[0] * hj[0], hi[0] * hj[1] + hi[1] * hj[0], hi[1] * hj[1], hi[2] * hj[0] + hi[0] * hj[2], hi[2] * hj[1] + hi[1] * hj[2], hi[2] * hj[2]]
}

/// Closed-form intrinsics from the image of the absolute conic, skew fixed at 0.
pub fn init_intrinsics(homographies: &[Homography]) -> Result<CameraIntrinsics, CalibrationError> {
    init_intrinsics_with(homographies, false)
}

pub fn init_intrinsics_with(homographies: &[Homography], estimate_skew: bool) -> Result<CameraIntrinsics, CalibrationError> {
    let needed = if estimate_skew { 3 } else { 2 };
    if homographies.len() < needed {
        return Err(CalibrationError::InsufficientViews { views: homographies.len(), needed });
    }
    // Columns of b that are solved for; B12 is pinned to zero without skew.
    let cols: &[usize] = if estimate_skew { &[0, 1, 2, 3, 4, 5] } else { &[0, 2, 3, 4, 5] };
    let mut v = DMatrix::<f64>::zeros(2 * homographies.len(), cols.len());
    for (k, h) in homographies.iter().enumerate() {
        let m = h.matrix() / h.matrix().norm();
        let v12 = v_row(&m, 0, 1);
        let v11 = v_row(&m, 0, 0);
        let v22 = v_row(&m, 1, 1);
        let r1: Vec<f64> = cols.iter().map(|&c| v12[c]).collect();
        let r2: Vec<f64> = cols.iter().map(|&c| v11[c] - v22[c]).collect();
        for (row, vals) in [(2 * k, r1), (2 * k + 1, r2)] {
            let norm = vals.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for (c, x) in vals.iter().enumerate() {
                v[(row, c)] = x / norm;
            }
        }
    }
    // Column equilibration: B's entries span several orders of magnitude.
    let scales: Vec<f64> = (0..cols.len()).map(|c| v.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    for (c, s) in scales.iter().enumerate() {
        v.column_mut(c).unscale_mut(*s);
    }
    let rows = v.nrows().max(cols.len());
    let v = v.resize_vertically(rows, 0.0);
    let svd = v.svd(false, true);
    let v_t = svd.v_t.ok_or(CalibrationError::DegenerateMotion("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[order.len() - 1]];
    if svd.singular_values[order[1]] <= 1e-9 * largest {
        return Err(CalibrationError::DegenerateMotion("board orientations do not constrain the intrinsics".into()));
    }
    let sol = v_t.row(order[0]);
    let mut b = [0.0; 6];
    for (c, &col) in cols.iter().enumerate() {
        b[col] = sol[c] / scales[c];
    }
    if b[0] < 0.0 {
        b.iter_mut().for_each(|x| *x = -*x);
    }
    let [b11, b12, b22, b13, b23, b33] = b;
    let bm = Matrix3::new(b11, b12, b13, b12, b22, b23, b13, b23, b33);
    if bm.cholesky().is_none() {
        return Err(CalibrationError::DegenerateMotion("absolute conic estimate is not positive definite".into()));
    }
    let den = b11 * b22 - b12 * b12;
    let cy = (b12 * b13 - b11 * b23) / den;
    let lambda = b33 - (b13 * b13 + cy * (b12 * b13 - b11 * b23)) / b11;
    let fx = (lambda / b11).sqrt();
    let fy = (lambda * b11 / den).sqrt();
    let skew = -b12 * fx * fx * fy / lambda;
    let cx = skew * cy / fy - b13 * fx * fx / lambda;
    CameraIntrinsics::with_skew(fx, fy, cx, cy, skew)
        .map_err(|_| CalibrationError::DegenerateMotion("intrinsics from the conic are not finite".into()))
}

/// Board pose from its homography: `H ∝ K [r1 r2 t]`.
pub fn extrinsics_from_homography(k: &CameraIntrinsics, h: &Homography) -> Result<CameraPose, CalibrationError> {
    k.validate().map_err(|_| CalibrationError::SingularIntrinsics)?;
    let kinv = k.inverse_matrix();
    let m = kinv * h.matrix();
    let (h1, h2, h3) = (m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned());
    let mut lambda = 1.0 / h1.norm();
    if !lambda.is_finite() {
        return Err(CalibrationError::DegenerateConfiguration("homography has a null first column".into()));
    }
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let r3 = r1.cross(&r2);
    let t: Vector3<f64> = h3 * lambda;
    let r = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]));
    CameraPose::new(r, t).map_err(CalibrationError::Geometry)
}
