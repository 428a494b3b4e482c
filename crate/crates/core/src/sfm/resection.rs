//! Camera pose from 2D–3D correspondences with known intrinsics.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SfmError;
use crate::geometry::{
    nearest_rotation, project, undistort_pixel, CameraIntrinsics, CameraPose, DistortionCoeffs, NormalizedPoint, PixelPoint, WorldPoint,
};
use crate::optim::LmConfig;
use crate::pose::refine_pose;

const SAMPLE: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ResectionConfig {
    /// Reprojection error (pixels) below which a correspondence is an inlier.
    pub threshold: f64,
    pub iterations: usize,
    pub seed: u64,
    pub min_inliers: usize,
}

impl Default for ResectionConfig {
    fn default() -> Self {
        Self { threshold: 2.0, iterations: 300, seed: 0, min_inliers: 12 }
    }
}

/// Linear pose from six or more points in normalized coordinates.
fn dlt_pose(world: &[WorldPoint], obs: &[NormalizedPoint], idx: &[usize]) -> Option<CameraPose> {
    let rows = (2 * idx.len()).max(12);
    let mut a = DMatrix::<f64>::zeros(rows, 12);
    for (r, &i) in idx.iter().enumerate() {
        let (p, x) = (world[i].to_vector(), obs[i]);
        let h = [p.x, p.y, p.z, 1.0];
        for c in 0..4 {
            a[(2 * r, c)] = h[c];
            a[(2 * r, 8 + c)] = -x.x * h[c];
            a[(2 * r + 1, 4 + c)] = h[c];
            a[(2 * r + 1, 8 + c)] = -x.y * h[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min, _) = svd.singular_values.argmin();
    let f = v_t.row(min);
    let mut m = Matrix3::new(f[0], f[1], f[2], f[4], f[5], f[6], f[8], f[9], f[10]);
    let mut t = Vector3::new(f[3], f[7], f[11]);
    let det = m.determinant();
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let scale = det.signum() * det.abs().cbrt();
    m /= scale;
    t /= scale;
    CameraPose::new(nearest_rotation(&m), t).ok()
}

fn inliers(world: &[WorldPoint], pixels: &[PixelPoint], pose: &CameraPose, k: &CameraIntrinsics, d: &DistortionCoeffs, threshold: f64) -> Vec<bool> {
    world.iter().zip(pixels).map(|(w, px)| project(w, pose, k, d).is_ok_and(|q| q.distance(*px) < threshold)).collect()
}

/// RANSAC over linear six-point poses, seeded with `hint` when given, then
/// LM refinement on the consensus set. Returns the pose and the inlier mask.
pub fn resect(
    world: &[WorldPoint],
    pixels: &[PixelPoint],
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
    hint: Option<&CameraPose>,
    cfg: &ResectionConfig,
) -> Result<(CameraPose, Vec<bool>), SfmError> {
    let n = world.len();
    if n != pixels.len() {
        return Err(SfmError::InvalidInput(format!("{} points vs {} pixels", n, pixels.len())));
    }
    if n < cfg.min_inliers.max(SAMPLE) {
        return Err(SfmError::InsufficientMatches { found: n, needed: cfg.min_inliers.max(SAMPLE) });
    }
    let normalized: Vec<NormalizedPoint> =
        pixels.iter().map(|&px| undistort_pixel(px, k, d).unwrap_or(NormalizedPoint::new(f64::NAN, f64::NAN))).collect();
    let mut best: Option<(CameraPose, usize)> = None;
    let consider = |pose: CameraPose, best: &mut Option<(CameraPose, usize)>| {
        let count = inliers(world, pixels, &pose, k, d, cfg.threshold).iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|b| count > b.1) {
            *best = Some((pose, count));
        }
    };
    if let Some(h) = hint {
        consider(*h, &mut best);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.iterations {
        let idx = sample(&mut rng, n, SAMPLE).into_vec();
        if let Some(pose) = dlt_pose(world, &normalized, &idx) {
            consider(pose, &mut best);
        }
    }
    let (mut pose, _) = best.ok_or(SfmError::InsufficientMatches { found: 0, needed: cfg.min_inliers })?;
    let lm = LmConfig::default();
    let mut mask = inliers(world, pixels, &pose, k, d, cfg.threshold);
    for _ in 0..3 {
        let (w, p): (Vec<WorldPoint>, Vec<PixelPoint>) = (0..n).filter(|&i| mask[i]).map(|i| (world[i], pixels[i])).unzip();
        if w.len() < cfg.min_inliers {
            break;
        }
        let Ok((refined, _)) = refine_pose(&w, &p, k, d, &pose, &lm) else { break };
        pose = refined;
        let next = inliers(world, pixels, &pose, k, d, cfg.threshold);
        if next == mask {
            break;
        }
        mask = next;
    }
    let count = mask.iter().filter(|&&b| b).count();
    if count < cfg.min_inliers {
        return Err(SfmError::InsufficientMatches { found: count, needed: cfg.min_inliers });
    }
    Ok((pose, mask))
}
