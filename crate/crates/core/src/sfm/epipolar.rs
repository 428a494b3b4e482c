//! Two-view geometry in normalized image coordinates.
//!
//! Convention: for the second camera at `x₂ = R x₁ + t`, correspondences
//! satisfy `x₂ᵀ E x₁ = 0` with `E = [t]ₓ R`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SfmError;
use crate::geometry::{axis_angle_to_matrix, CameraPose, NormalizedPoint, WorldPoint};
use crate::optim::{levenberg_marquardt, FnProblem, LmConfig};

/// Baselines at or below this are treated as a single viewpoint.
pub const MIN_BASELINE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    /// Inlier threshold on the Sampson distance, normalized units.
    pub threshold: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop early once a model is this likely to be all-inlier.
    pub confidence: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { threshold: 1e-3, seed: 0, max_iterations: 1000, confidence: 0.9999 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssentialEstimate {
    /// Rank 2, equal nonzero singular values, unit Frobenius norm.
    pub matrix: Matrix3<f64>,
    pub inliers: Vec<bool>,
}

impl EssentialEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

pub fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// `[t]ₓ R` for a relative pose.
pub fn essential_from_pose(pose: &CameraPose) -> Matrix3<f64> {
    skew(pose.translation()) * pose.rotation()
}

/// `x₂ᵀ E x₁`.
pub fn epipolar_residual(e: &Matrix3<f64>, x1: NormalizedPoint, x2: NormalizedPoint) -> f64 {
    x2.to_homogeneous().dot(&(e * x1.to_homogeneous()))
}

/// First-order geometric distance of a correspondence to the epipolar
/// constraint (square root of the Sampson error), normalized units.
pub fn sampson_distance(e: &Matrix3<f64>, x1: NormalizedPoint, x2: NormalizedPoint) -> f64 {
    let (a, b) = (x1.to_homogeneous(), x2.to_homogeneous());
    let ea = e * a;
    let etb = e.transpose() * b;
    let num = b.dot(&ea);
    let den = ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y;
    if den <= 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    num.abs() / den.sqrt()
}

/// Similarity that moves the centroid to 0 and the mean distance to √2.
fn normalizing_transform(pts: &[NormalizedPoint], idx: &[usize]) -> Matrix3<f64> {
    let n = idx.len() as f64;
    let (mx, my) = idx.iter().fold((0.0, 0.0), |(sx, sy), &i| (sx + pts[i].x, sy + pts[i].y));
    let (mx, my) = (mx / n, my / n);
    let spread = idx.iter().map(|&i| (pts[i].x - mx).hypot(pts[i].y - my)).sum::<f64>() / n;
    let s = if spread > 0.0 { std::f64::consts::SQRT_2 / spread } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Normalized eight-point solve over `idx`, projected onto essential matrices.
fn eight_point(x1: &[NormalizedPoint], x2: &[NormalizedPoint], idx: &[usize]) -> Option<Matrix3<f64>> {
    let t1 = normalizing_transform(x1, idx);
    let t2 = normalizing_transform(x2, idx);
    let rows = idx.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (r, &i) in idx.iter().enumerate() {
        let p = t1 * x1[i].to_homogeneous();
        let q = t2 * x2[i].to_homogeneous();
        for (c, v) in [q.x * p.x, q.x * p.y, q.x, q.y * p.x, q.y * p.y, q.y, p.x, p.y, 1.0].into_iter().enumerate() {
            a[(r, c)] = v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min, _) = svd.singular_values.argmin();
    let f = v_t.row(min);
    let e_hat = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let e = t2.transpose() * e_hat * t1;
    project_essential(&e)
}

/// Nearest essential matrix: singular values `(s, s, 0)`, scaled to unit norm.
pub fn project_essential(e: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = e.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    if s[order[0]] <= 0.0 || !s.iter().all(|x| x.is_finite()) {
        return None;
    }
    let avg = 0.5 * (s[order[0]] + s[order[1]]);
    s[order[0]] = avg;
    s[order[1]] = avg;
    s[order[2]] = 0.0;
    let out = u * Matrix3::from_diagonal(&s) * v_t;
    Some(out / out.norm())
}

fn score(e: &Matrix3<f64>, x1: &[NormalizedPoint], x2: &[NormalizedPoint], threshold: f64) -> (Vec<bool>, usize, f64) {
    let mut mask = vec![false; x1.len()];
    let mut count = 0;
    let mut err = 0.0;
    for (i, (&a, &b)) in x1.iter().zip(x2).enumerate() {
        let d = sampson_distance(e, a, b);
        if d < threshold {
            mask[i] = true;
            count += 1;
            err += d;
        }
    }
    (mask, count, err)
}

/// Robust essential matrix from putative correspondences.
pub fn essential_ransac(x1: &[NormalizedPoint], x2: &[NormalizedPoint], cfg: &RansacConfig) -> Result<EssentialEstimate, SfmError> {
    if x1.len() != x2.len() {
        return Err(SfmError::InvalidInput(format!("{} vs {} correspondences", x1.len(), x2.len())));
    }
    let n = x1.len();
    if n < 8 {
        return Err(SfmError::InsufficientMatches { found: n, needed: 8 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Matrix3<f64>, Vec<bool>, usize, f64)> = None;
    let mut needed = cfg.max_iterations;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iterations) {
        iter += 1;
        let idx = sample(&mut rng, n, 8).into_vec();
        let Some(e) = eight_point(x1, x2, &idx) else { continue };
        let (mask, count, err) = score(&e, x1, x2, cfg.threshold);
        let better = best.as_ref().is_none_or(|b| count > b.2 || (count == b.2 && err < b.3));
        if better {
            let w = count as f64 / n as f64;
            let p_good = w.powi(8);
            if p_good >= 1.0 {
                needed = 0;
            } else if p_good > 0.0 {
                let k = (1.0 - cfg.confidence).ln() / (-p_good).ln_1p();
                needed = needed.min(k.ceil() as usize);
            }
            best = Some((e, mask, count, err));
        }
    }
    let Some((mut e, mut mask, mut count, mut err)) = best else {
        return Err(SfmError::NoModelFound { inliers: 0 });
    };
    // re-estimate on the consensus set, linearly then by minimizing the
    // Sampson error, keeping each step only if the support does not shrink
    for _ in 0..5 {
        let idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if idx.len() < 8 {
            break;
        }
        let mut improved = false;
        let linear = eight_point(x1, x2, &idx);
        for e2 in linear.into_iter().chain(refine_essential(&e, x1, x2, &idx)) {
            let (m2, c2, err2) = score(&e2, x1, x2, cfg.threshold);
            if c2 > count || (c2 == count && err2 < err) {
                improved |= m2 != mask;
                (e, mask, count, err) = (e2, m2, c2, err2);
            }
        }
        if !improved {
            break;
        }
    }
    if count < 8 {
        return Err(SfmError::NoModelFound { inliers: count });
    }
    Ok(EssentialEstimate { matrix: e, inliers: mask })
}

/// Sampson-error minimization over `E = [t]ₓR` with `t` on the unit sphere.
fn refine_essential(e: &Matrix3<f64>, x1: &[NormalizedPoint], x2: &[NormalizedPoint], idx: &[usize]) -> Option<Matrix3<f64>> {
    let [start, ..] = decompose_essential(e)?;
    let (r0, t0) = (*start.rotation(), start.translation().normalize());
    let helper = if t0.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = t0.cross(&helper).normalize();
    let e2 = t0.cross(&e1);
    let model = move |p: &DVector<f64>| {
        let r = axis_angle_to_matrix(&Vector3::new(p[0], p[1], p[2])) * r0;
        let t = (t0 + e1 * p[3] + e2 * p[4]).normalize();
        skew(&t) * r
    };
    let problem = FnProblem::new(5, idx.len(), |p: &DVector<f64>| {
        let e = model(p);
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| signed_sampson(&e, x1[i], x2[i])))
    });
    let cfg = LmConfig { max_iterations: 30, ..LmConfig::default() };
    let report = levenberg_marquardt(&problem, &DVector::zeros(5), &cfg).ok()?;
    project_essential(&model(&report.params))
}

fn signed_sampson(e: &Matrix3<f64>, x1: NormalizedPoint, x2: NormalizedPoint) -> f64 {
    let (a, b) = (x1.to_homogeneous(), x2.to_homogeneous());
    let ea = e * a;
    let etb = e.transpose() * b;
    let den = (ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y).sqrt();
    if den > 0.0 {
        b.dot(&ea) / den
    } else {
        0.0
    }
}

/// The four `(R, t)` factorizations of an essential matrix, `‖t‖ = 1`.
pub fn decompose_essential(e: &Matrix3<f64>) -> Option<[CameraPose; 4]> {
    let svd = e.svd(true, true);
    let (mut u, mut v_t) = (svd.u?, svd.v_t?);
    // sort so the null direction is last
    let s = svd.singular_values;
    let (min, _) = s.argmin();
    if min != 2 {
        u.swap_columns(min, 2);
        v_t.swap_rows(min, 2);
    }
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t: Vector3<f64> = u.column(2).normalize();
    let mk = |r: Matrix3<f64>, t: Vector3<f64>| CameraPose::new(r, t).ok();
    Some([mk(r1, t)?, mk(r1, -t)?, mk(r2, t)?, mk(r2, -t)?])
}

/// Picks the factorization of `E` that puts the most points in front of both cameras.
pub fn recover_relative_pose(e: &Matrix3<f64>, x1: &[NormalizedPoint], x2: &[NormalizedPoint]) -> Result<CameraPose, SfmError> {
    if x1.is_empty() || x1.len() != x2.len() {
        return Err(SfmError::InvalidInput(format!("{} vs {} correspondences", x1.len(), x2.len())));
    }
    let candidates = decompose_essential(e).ok_or_else(|| SfmError::InvalidInput("essential matrix has no valid factorization".into()))?;
    let identity = CameraPose::identity();
    let mut counts = [0usize; 4];
    for (c, pose) in candidates.iter().enumerate() {
        counts[c] = x1.iter().zip(x2).filter(|(a, b)| triangulate_pair(&identity, pose, **a, **b).is_some()).count();
    }
    let (best, &count) = counts.iter().enumerate().max_by_key(|&(i, c)| (c, std::cmp::Reverse(i))).expect("four candidates");
    if 2 * count <= x1.len() {
        return Err(SfmError::CheiralityAmbiguous);
    }
    Ok(candidates[best])
}

/// Triangulation from any number of views: linear (DLT), then Gauss-Newton
/// on the normalized reprojection error. Returns `None` for points at
/// infinity or behind any of the cameras.
pub fn triangulate_views(poses: &[&CameraPose], obs: &[NormalizedPoint]) -> Option<WorldPoint> {
    let mut p = linear_triangulation(poses, obs)?.to_vector();
    polish_point(&mut p, poses, obs);
    if poses.iter().any(|pose| pose.transform(&p).z <= 0.0) {
        return None;
    }
    Some(WorldPoint::from_vector(&p))
}

/// DLT in a frame centered on the cameras and scaled by their spread.
fn linear_triangulation(poses: &[&CameraPose], obs: &[NormalizedPoint]) -> Option<WorldPoint> {
    if poses.len() < 2 || poses.len() != obs.len() {
        return None;
    }
    // translations dwarf the rotation entries otherwise, and the homogeneous
    // solve loses the depth
    let center = poses.iter().map(|p| p.center()).sum::<Vector3<f64>>() / poses.len() as f64;
    let spread = poses.iter().map(|p| (p.center() - center).norm()).sum::<f64>() / poses.len() as f64;
    let spread = if spread > 0.0 { spread } else { 1.0 };
    let mut a = DMatrix::<f64>::zeros((2 * poses.len()).max(4), 4);
    for (k, (pose, x)) in poses.iter().zip(obs).enumerate() {
        let [p1, p2, p3] = conditioned_rows(pose, &center, spread);
        let ra = p3 * x.x - p1;
        let rb = p3 * x.y - p2;
        a.row_mut(2 * k).copy_from(&(ra / ra.norm()).transpose());
        a.row_mut(2 * k + 1).copy_from(&(rb / rb.norm()).transpose());
    }
    let h = smallest_right_vector(a)?;
    let scale = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if h[3].abs() <= 1e-12 * scale {
        return None;
    }
    let p = center + Vector3::new(h[0], h[1], h[2]) * (spread / h[3]);
    if !p.iter().all(|v| v.is_finite()) || poses.iter().any(|pose| pose.transform(&p).z <= 0.0) {
        return None;
    }
    Some(WorldPoint::from_vector(&p))
}

fn conditioned_rows(pose: &CameraPose, center: &Vector3<f64>, spread: f64) -> [Vector4<f64>; 3] {
    let r = pose.rotation();
    let t = (r * center + pose.translation()) / spread;
    [0, 1, 2].map(|i| Vector4::new(r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]))
}

fn reprojection_cost(p: &Vector3<f64>, poses: &[&CameraPose], obs: &[NormalizedPoint]) -> f64 {
    poses
        .iter()
        .zip(obs)
        .map(|(pose, x)| {
            let c = pose.transform(p);
            (c.x / c.z - x.x).powi(2) + (c.y / c.z - x.y).powi(2)
        })
        .sum()
}

/// Gauss-Newton steps that are kept only while the cost drops.
fn polish_point(p: &mut Vector3<f64>, poses: &[&CameraPose], obs: &[NormalizedPoint]) {
    let mut cost = reprojection_cost(p, poses, obs);
    for _ in 0..10 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (pose, x) in poses.iter().zip(obs) {
            let c = pose.transform(p);
            if c.z <= 0.0 {
                return;
            }
            let (u, v) = (c.x / c.z, c.y / c.z);
            let d = nalgebra::Matrix2x3::new(1.0, 0.0, -u, 0.0, 1.0, -v) / c.z;
            let j = d * pose.rotation();
            let r = nalgebra::Vector2::new(u - x.x, v - x.y);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let Some(step) = jtj.cholesky().map(|c| c.solve(&jtr)) else { return };
        let next = *p - step;
        let next_cost = reprojection_cost(&next, poses, obs);
        if next_cost.partial_cmp(&cost) != Some(std::cmp::Ordering::Less) {
            return;
        }
        *p = next;
        let converged = cost - next_cost <= 1e-15 * cost.max(1e-300);
        cost = next_cost;
        if converged {
            return;
        }
    }
}

fn smallest_right_vector(a: DMatrix<f64>) -> Option<Vector4<f64>> {
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min, _) = svd.singular_values.argmin();
    Some(Vector4::new(v_t[(min, 0)], v_t[(min, 1)], v_t[(min, 2)], v_t[(min, 3)]))
}

fn triangulate_pair(a: &CameraPose, b: &CameraPose, xa: NormalizedPoint, xb: NormalizedPoint) -> Option<WorldPoint> {
    linear_triangulation(&[a, b], &[xa, xb])
}

/// Two-view DLT triangulation; `None` marks points with non-positive depth
/// in either view.
pub fn triangulate_points(
    pose_i: &CameraPose,
    pose_j: &CameraPose,
    xi: &[NormalizedPoint],
    xj: &[NormalizedPoint],
) -> Result<Vec<Option<WorldPoint>>, SfmError> {
    if xi.len() != xj.len() {
        return Err(SfmError::InvalidInput(format!("{} vs {} observations", xi.len(), xj.len())));
    }
    if (pose_i.center() - pose_j.center()).norm() <= MIN_BASELINE {
        return Err(SfmError::ZeroBaseline);
    }
    Ok(xi.iter().zip(xj).map(|(a, b)| triangulate_pair(pose_i, pose_j, *a, *b)).collect())
}

/// Angle (radians) between the viewing rays of `p` from two camera centers.
pub fn triangulation_angle(p: &Vector3<f64>, ca: &Vector3<f64>, cb: &Vector3<f64>) -> f64 {
    let (a, b) = (p - ca, p - cb);
    let c = a.dot(&b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle_to_matrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn observe(pose: &CameraPose, p: &Vector3<f64>) -> NormalizedPoint {
        let c = pose.transform(p);
        NormalizedPoint::new(c.x / c.z, c.y / c.z)
    }

    fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> (CameraPose, Vec<Vector3<f64>>) {
        let w = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        let pts = (0..n).map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(4.0..8.0))).collect();
        (CameraPose::from_axis_angle(&w, t), pts)
    }

    fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        crate::geometry::matrix_to_axis_angle(&(a.transpose() * b)).unwrap().norm()
    }

    #[test]
    fn pure_translation_essential() {
        let pose = CameraPose::from_axis_angle(&Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vector3<f64>> =
            (0..40).map(|_| Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(3.0..9.0))).collect();
        let x1: Vec<_> = pts.iter().map(|p| observe(&CameraPose::identity(), p)).collect();
        let x2: Vec<_> = pts.iter().map(|p| observe(&pose, p)).collect();
        let est = essential_ransac(&x1, &x2, &RansacConfig::default()).unwrap();
        assert_eq!(est.inlier_count(), 40);
        let expected = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0) / 2f64.sqrt();
        let sign = if est.matrix[(2, 1)] > 0.0 { 1.0 } else { -1.0 };
        assert!((est.matrix * sign - expected).amax() < 1e-9, "{}", est.matrix);
        let rel = recover_relative_pose(&est.matrix, &x1, &x2).unwrap();
        assert!(angle_between(rel.rotation(), &Matrix3::identity()) < 1e-9);
        assert!((rel.translation() - Vector3::x()).norm() < 1e-9);
    }

    #[test]
    fn noiseless_epipolar_residuals_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (pose, pts) = random_scene(&mut rng, 60);
            let x1: Vec<_> = pts.iter().map(|p| observe(&CameraPose::identity(), p)).collect();
            let x2: Vec<_> = pts.iter().map(|p| observe(&pose, p)).collect();
            let est = essential_ransac(&x1, &x2, &RansacConfig::default()).unwrap();
            for (a, b) in x1.iter().zip(&x2) {
                assert!(epipolar_residual(&est.matrix, *a, *b).abs() < 1e-10);
            }
            let sv = est.matrix.singular_values();
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(f64::total_cmp);
            assert!(s[0] < 1e-12 && (s[1] - s[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_pose_from_known_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (pose, pts) = random_scene(&mut rng, 30);
            let x1: Vec<_> = pts.iter().map(|p| observe(&CameraPose::identity(), p)).collect();
            let x2: Vec<_> = pts.iter().map(|p| observe(&pose, p)).collect();
            let e = essential_from_pose(&pose);
            let rel = recover_relative_pose(&e, &x1, &x2).unwrap();
            assert!(angle_between(rel.rotation(), pose.rotation()) < 1e-6);
            let dir = pose.translation().normalize();
            assert!(rel.translation().normalize().dot(&dir).clamp(-1.0, 1.0).acos() < 1e-6);
            assert!((rel.translation().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_rays_are_ambiguous() {
        let pose = CameraPose::from_axis_angle(&Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        let e = essential_from_pose(&pose);
        let x = NormalizedPoint::new(0.0, 0.0);
        assert_eq!(recover_relative_pose(&e, &[x], &[x]), Err(SfmError::CheiralityAmbiguous));
    }

    #[test]
    fn outlier_recall() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (pose, pts) = random_scene(&mut rng, 140);
            let mut x1: Vec<_> = pts.iter().map(|p| observe(&CameraPose::identity(), p)).collect();
            let mut x2: Vec<_> = pts.iter().map(|p| observe(&pose, p)).collect();
            for _ in 0..60 {
                x1.push(NormalizedPoint::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)));
                x2.push(NormalizedPoint::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6)));
            }
            let cfg = RansacConfig { seed, ..RansacConfig::default() };
            let est = essential_ransac(&x1, &x2, &cfg).unwrap();
            let recall = est.inliers[..140].iter().filter(|&&b| b).count() as f64 / 140.0;
            assert!(recall >= 0.99, "recall {recall}");
            assert_eq!(est, essential_ransac(&x1, &x2, &cfg).unwrap());
        }
    }

    #[test]
    fn too_few_matches() {
        let x = vec![NormalizedPoint::new(0.0, 0.0); 7];
        assert_eq!(essential_ransac(&x, &x, &RansacConfig::default()), Err(SfmError::InsufficientMatches { found: 7, needed: 8 }));
    }

    #[test]
    fn two_ray_intersection() {
        let b = CameraPose::from_axis_angle(&Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        let out = triangulate_points(&CameraPose::identity(), &b, &[NormalizedPoint::new(0.0, 0.0)], &[NormalizedPoint::new(0.2, 0.0)]).unwrap();
        // x₂ = x₁ + t puts the second observation at +0.2
        let p = out[0].unwrap().to_vector();
        assert!((p - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-9, "{p}");
    }

    #[test]
    fn translated_camera_sees_the_point_shifted_left() {
        // camera displaced by +1 along x: the world point (0,0,5) lands at −0.2
        let b = CameraPose::from_axis_angle(&Vector3::zeros(), Vector3::new(-1.0, 0.0, 0.0));
        let out = triangulate_points(&CameraPose::identity(), &b, &[NormalizedPoint::new(0.0, 0.0)], &[NormalizedPoint::new(-0.2, 0.0)]).unwrap();
        assert!((out[0].unwrap().to_vector() - Vector3::new(0.0, 0.0, 5.0)).norm() < 1e-9);
    }

    #[test]
    fn cube_corners() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = CameraPose::look_at(&Vector3::new(rng.random_range(-3.0..3.0), -8.0, 2.0), &Vector3::zeros(), &Vector3::new(0.0, 0.0, -1.0));
            let b = CameraPose::look_at(&Vector3::new(rng.random_range(-3.0..3.0), -7.0, 4.0), &Vector3::zeros(), &Vector3::new(0.0, 0.0, -1.0));
            let corners: Vec<Vector3<f64>> =
                (0..8).map(|i| Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64) - Vector3::repeat(0.5)).collect();
            let xa: Vec<_> = corners.iter().map(|p| observe(&a, p)).collect();
            let xb: Vec<_> = corners.iter().map(|p| observe(&b, p)).collect();
            for (got, want) in triangulate_points(&a, &b, &xa, &xb).unwrap().iter().zip(&corners) {
                assert!((got.unwrap().to_vector() - want).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn identical_poses_have_no_baseline() {
        let p = CameraPose::from_axis_angle(&Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.0, 1.0));
        let x = [NormalizedPoint::new(0.0, 0.0)];
        assert_eq!(triangulate_points(&p, &p, &x, &x), Err(SfmError::ZeroBaseline));
    }

    #[test]
    fn point_behind_is_flagged() {
        let b = CameraPose::from_axis_angle(&Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0));
        // rays diverge: the intersection is behind both cameras
        let out = triangulate_points(&CameraPose::identity(), &b, &[NormalizedPoint::new(0.0, 0.0)], &[NormalizedPoint::new(-0.2, 0.0)]).unwrap();
        assert_eq!(out, vec![None]);
    }

    proptest! {
        #[test]
        fn triangulation_round_trip(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (pose, pts) = random_scene(&mut rng, 10);
            let r = axis_angle_to_matrix(&Vector3::new(0.05, -0.02, 0.01));
            let a = CameraPose::new(r, Vector3::new(0.1, 0.0, 0.2)).unwrap();
            let b = pose.compose(&a);
            let xa: Vec<_> = pts.iter().map(|p| observe(&a, p)).collect();
            let xb: Vec<_> = pts.iter().map(|p| observe(&b, p)).collect();
            for (got, (oa, ob)) in triangulate_points(&a, &b, &xa, &xb).unwrap().iter().zip(xa.iter().zip(&xb)) {
                let p = got.unwrap().to_vector();
                let (pa, pb) = (observe(&a, &p), observe(&b, &p));
                // normalized units; at ~840 px focal length 1e-11 is ≈1e-8 px
                prop_assert!((pa.x - oa.x).abs() < 1e-11 && (pa.y - oa.y).abs() < 1e-11);
                prop_assert!((pb.x - ob.x).abs() < 1e-11 && (pb.y - ob.y).abs() < 1e-11);
            }
        }
    }
}
