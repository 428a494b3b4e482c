//! Incremental pipeline: features → pairwise geometry → tracks → initial
//! pair → resection / triangulation / bundle adjustment per added view.

use rayon::prelude::*;

use super::subpixel::refine_observations;
use super::{
    build_tracks, bundle_adjust, detect_features_with, essential_ransac, match_features, recover_relative_pose, resect, triangulate_views,
    triangulation_angle, Feature, FeatureConfig, MatchPair, RansacConfig, ResectionConfig, SfmError, SfmScene,
};
use crate::geometry::{project, undistort_pixel, CameraIntrinsics, CameraPose, DistortionCoeffs, NormalizedPoint, PixelPoint, WorldPoint};
use crate::image::{GrayImage, Plane};
use crate::optim::LmConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SfmConfig {
    pub features: FeatureConfig,
    pub ratio: f64,
    /// Sampson threshold (normalized units) and iteration budget; the seed
    /// is mixed with each pair's view ids.
    pub ransac: RansacConfig,
    /// Match every pair instead of neighbours and next-neighbours.
    pub exhaustive_pairs: bool,
    pub min_pair_inliers: usize,
    /// Median triangulation angle the initial pair must exceed, degrees.
    pub min_baseline_angle_deg: f64,
    /// New points need at least this ray angle, degrees.
    pub min_point_angle_deg: f64,
    /// Observations reprojecting further than this (pixels) are dropped.
    pub max_reprojection_error: f64,
    pub min_resection_points: usize,
    /// Align each track's observations photometrically to one reference view
    /// before the final bundle adjustment.
    pub photometric_refinement: bool,
    /// Largest descriptor distance for an observation added to an existing
    /// track by projecting its point; `0` disables track extension.
    pub extension_descriptor_distance: f64,
    pub lm: LmConfig,
    pub seed: u64,
}

impl Default for SfmConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            ratio: super::DEFAULT_RATIO,
            ransac: RansacConfig::default(),
            exhaustive_pairs: false,
            min_pair_inliers: 30,
            min_baseline_angle_deg: 2.0,
            min_point_angle_deg: 1.0,
            max_reprojection_error: 2.0,
            min_resection_points: 12,
            photometric_refinement: true,
            extension_descriptor_distance: 0.5,
            lm: LmConfig { max_iterations: 50, cost_tolerance: 1e-9, ..LmConfig::default() },
            seed: 0,
        }
    }
}

/// Blur applied before patch alignment, pixels.
const PATCH_SMOOTHING: f32 = 1.0;

struct PairGeometry {
    inliers: MatchPair,
}

fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    seed ^ ((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add((j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
}

/// Views matched against each other.
pub fn candidate_pairs(views: usize, exhaustive: bool) -> Vec<(usize, usize)> {
    (0..views).flat_map(|i| (i + 1..views).map(move |j| (i, j))).filter(|&(i, j)| exhaustive || j - i <= 2).collect()
}

pub fn reconstruct(images: &[GrayImage], k: &CameraIntrinsics, d: &DistortionCoeffs, cfg: &SfmConfig) -> Result<SfmScene, SfmError> {
    if images.len() < 2 {
        return Err(SfmError::InvalidInput(format!("{} images, at least 2 needed", images.len())));
    }
    let features = images.par_iter().map(|img| detect_features_with(img, &cfg.features)).collect::<Result<Vec<_>, _>>()?;
    let keypoints: Vec<Vec<PixelPoint>> = features.iter().map(|f| f.iter().map(|x| x.position).collect()).collect();
    let intensities: Vec<Vec<f64>> =
        keypoints.iter().zip(images).map(|(kp, img)| kp.iter().map(|p| img.sample_bilinear(p.u, p.v).unwrap_or(0.0)).collect()).collect();
    let normalized: Vec<Vec<Option<NormalizedPoint>>> =
        keypoints.iter().map(|kp| kp.iter().map(|&p| undistort_pixel(p, k, d).ok()).collect()).collect();

    let pairs = candidate_pairs(images.len(), cfg.exhaustive_pairs);
    let geometry: Vec<Option<PairGeometry>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let matches: Vec<(usize, usize)> = match_features(&features[i], &features[j], cfg.ratio)
                .into_iter()
                .filter(|&(a, b)| normalized[i][a].is_some() && normalized[j][b].is_some())
                .collect();
            let x1: Vec<NormalizedPoint> = matches.iter().map(|&(a, _)| normalized[i][a].expect("filtered")).collect();
            let x2: Vec<NormalizedPoint> = matches.iter().map(|&(_, b)| normalized[j][b].expect("filtered")).collect();
            let ransac = RansacConfig { seed: pair_seed(cfg.seed, i, j), ..cfg.ransac.clone() };
            let est = essential_ransac(&x1, &x2, &ransac).ok()?;
            let kept = matches.iter().zip(&est.inliers).filter(|(_, &ok)| ok).map(|(&m, _)| m).collect();
            Some(PairGeometry { inliers: MatchPair { view_i: i, view_j: j, matches: kept } })
        })
        .collect();
    let geometry: Vec<PairGeometry> = geometry.into_iter().flatten().collect();
    let tracks = build_tracks(&geometry.iter().map(|g| g.inliers.clone()).collect::<Vec<_>>());

    let mut scene = SfmScene { intrinsics: *k, distortion: *d, poses: vec![None; images.len()], keypoints, intensities, tracks, gauge: (0, 1) };

    initialize(&mut scene, &geometry, &normalized, cfg)?;
    triangulate_new(&mut scene, &normalized, cfg);
    refine(&mut scene, cfg)?;

    while let Some(view) = next_view(&scene) {
        register(&mut scene, view, cfg)?;
        triangulate_new(&mut scene, &normalized, cfg);
        extend_tracks(&mut scene, &features, cfg);
        refine(&mut scene, cfg)?;
    }
    if cfg.photometric_refinement {
        let planes: Vec<Plane> = images.par_iter().map(|img| Plane::from_gray(img, 1.0 / 255.0).gaussian_blur(PATCH_SMOOTHING)).collect();
        let scales: Vec<Vec<f64>> = features.iter().map(|f| f.iter().map(|x| x.scale).collect()).collect();
        let summary = refine_observations(&mut scene, &planes, &scales);
        if summary.moved + summary.dropped > 0 {
            refine(&mut scene, cfg)?;
        }
    }
    Ok(scene)
}

/// Picks the pair with the most inliers whose median ray angle is wide enough.
fn initialize(scene: &mut SfmScene, geometry: &[PairGeometry], normalized: &[Vec<Option<NormalizedPoint>>], cfg: &SfmConfig) -> Result<(), SfmError> {
    let mut order: Vec<&PairGeometry> = geometry.iter().filter(|g| g.inliers.matches.len() >= cfg.min_pair_inliers).collect();
    order.sort_by_key(|g| (std::cmp::Reverse(g.inliers.matches.len()), g.inliers.view_i, g.inliers.view_j));
    let mut best_angle = 0.0f64;
    for g in order {
        let (i, j) = (g.inliers.view_i, g.inliers.view_j);
        let x1: Vec<NormalizedPoint> = g.inliers.matches.iter().map(|&(a, _)| normalized[i][a].expect("matched")).collect();
        let x2: Vec<NormalizedPoint> = g.inliers.matches.iter().map(|&(_, b)| normalized[j][b].expect("matched")).collect();
        // refit on the inliers so the relative pose uses all of them
        let Ok(est) = essential_ransac(&x1, &x2, &RansacConfig { seed: pair_seed(cfg.seed, i, j), ..cfg.ransac.clone() }) else { continue };
        let Ok(rel) = recover_relative_pose(&est.matrix, &x1, &x2) else { continue };
        let a = CameraPose::identity();
        let mut angles: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .filter_map(|(p, q)| triangulate_views(&[&a, &rel], &[*p, *q]))
            .map(|p| triangulation_angle(&p.to_vector(), &a.center(), &rel.center()))
            .collect();
        if angles.is_empty() {
            continue;
        }
        angles.sort_by(f64::total_cmp);
        let median = angles[angles.len() / 2].to_degrees();
        best_angle = best_angle.max(median);
        if median > cfg.min_baseline_angle_deg {
            scene.poses[i] = Some(a);
            scene.poses[j] = Some(rel);
            scene.gauge = (i, j);
            return Ok(());
        }
    }
    Err(SfmError::InitializationFailed(format!(
        "no pair with ≥ {} inliers and median triangulation angle > {}° (best {best_angle:.3}°)",
        cfg.min_pair_inliers, cfg.min_baseline_angle_deg
    )))
}

/// Unregistered view seeing the most triangulated points.
fn next_view(scene: &SfmScene) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for v in (0..scene.poses.len()).filter(|&v| scene.poses[v].is_none()) {
        let count = scene.tracks.iter().filter(|t| t.point.is_some() && t.feature_in(v).is_some()).count();
        if best.is_none_or(|b| count > b.1) {
            best = Some((v, count));
        }
    }
    best.map(|b| b.0)
}

fn register(scene: &mut SfmScene, view: usize, cfg: &SfmConfig) -> Result<(), SfmError> {
    let mut tracks = Vec::new();
    let mut world = Vec::new();
    let mut pixels = Vec::new();
    for (i, t) in scene.tracks.iter().enumerate() {
        if let (Some(p), Some(f)) = (t.point, t.feature_in(view)) {
            tracks.push(i);
            world.push(p);
            pixels.push(scene.keypoints[view][f]);
        }
    }
    let hint = (0..scene.poses.len()).filter(|&v| scene.poses[v].is_some()).min_by_key(|&v| v.abs_diff(view)).and_then(|v| scene.poses[v]);
    let rcfg = ResectionConfig {
        threshold: cfg.max_reprojection_error,
        seed: cfg.seed.wrapping_add(view as u64),
        min_inliers: cfg.min_resection_points,
        ..ResectionConfig::default()
    };
    let (pose, mask) = resect(&world, &pixels, &scene.intrinsics, &scene.distortion, hint.as_ref(), &rcfg)
        .map_err(|e| SfmError::RegistrationFailed { view, reason: e.to_string() })?;
    scene.poses[view] = Some(pose);
    for (&t, ok) in tracks.iter().zip(mask) {
        if !ok {
            scene.tracks[t].observations.retain(|o| o.0 != view);
        }
    }
    Ok(())
}

fn reprojects(scene: &SfmScene, p: &WorldPoint, obs: &[(usize, CameraPose, PixelPoint)], limit: f64) -> bool {
    obs.iter().all(|(_, pose, px)| project(p, pose, &scene.intrinsics, &scene.distortion).is_ok_and(|q| q.distance(*px) < limit))
}

/// Triangulates tracks with two or more registered observations.
fn triangulate_new(scene: &mut SfmScene, normalized: &[Vec<Option<NormalizedPoint>>], cfg: &SfmConfig) {
    let min_angle = cfg.min_point_angle_deg.to_radians();
    for i in 0..scene.tracks.len() {
        if scene.tracks[i].point.is_some() {
            continue;
        }
        let obs = scene.registered_observations(&scene.tracks[i]);
        if obs.len() < 2 {
            continue;
        }
        let feats: Vec<(usize, usize)> = scene.tracks[i].observations.iter().copied().filter(|o| scene.poses[o.0].is_some()).collect();
        let Some(rays) = feats.iter().map(|&(v, f)| normalized[v][f]).collect::<Option<Vec<_>>>() else { continue };
        let poses: Vec<&CameraPose> = obs.iter().map(|o| &o.1).collect();
        let Some(p) = triangulate_views(&poses, &rays) else { continue };
        let centers: Vec<_> = obs.iter().map(|o| o.1.center()).collect();
        let widest = centers
            .iter()
            .enumerate()
            .flat_map(|(a, ca)| centers[a + 1..].iter().map(move |cb| (ca, cb)))
            .map(|(ca, cb)| triangulation_angle(&p.to_vector(), ca, cb))
            .fold(0.0, f64::max);
        if widest >= min_angle && reprojects(scene, &p, &obs, cfg.max_reprojection_error) {
            scene.tracks[i].point = Some(p);
        }
    }
}

/// Adds observations in registered views the pairwise matching missed: the
/// closest unused feature near a point's projection joins its track when its
/// scale and descriptor agree with the features already there.
fn extend_tracks(scene: &mut SfmScene, features: &[Vec<Feature>], cfg: &SfmConfig) {
    if cfg.extension_descriptor_distance <= 0.0 {
        return;
    }
    let mut used: Vec<Vec<bool>> = features.iter().map(|f| vec![false; f.len()]).collect();
    for t in &scene.tracks {
        for &(v, f) in &t.observations {
            used[v][f] = true;
        }
    }
    let registered = scene.registered_views();
    for i in 0..scene.tracks.len() {
        let Some(p) = scene.tracks[i].point else { continue };
        for &v in &registered {
            if scene.tracks[i].feature_in(v).is_some() {
                continue;
            }
            let pose = scene.poses[v].expect("registered");
            let Ok(q) = project(&p, &pose, &scene.intrinsics, &scene.distortion) else { continue };
            let members: Vec<&Feature> = scene.tracks[i].observations.iter().map(|&(w, f)| &features[w][f]).collect();
            let candidate = features[v]
                .iter()
                .enumerate()
                .filter(|&(f, c)| !used[v][f] && c.position.distance(q) < cfg.max_reprojection_error)
                .min_by(|a, b| a.1.position.distance(q).total_cmp(&b.1.position.distance(q)));
            let Some((f, c)) = candidate else { continue };
            let agrees = members.iter().all(|m| {
                let ratio = c.scale / m.scale;
                let dist: f64 = c.descriptor.iter().zip(&m.descriptor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (2.0 / 3.0..1.5).contains(&ratio) && dist < cfg.extension_descriptor_distance
            });
            if agrees {
                used[v][f] = true;
                scene.tracks[i].observations.push((v, f));
            }
        }
    }
}

/// Bundle adjustment, then removal of observations that reproject badly;
/// repeats while anything was removed.
fn refine(scene: &mut SfmScene, cfg: &SfmConfig) -> Result<(), SfmError> {
    for _ in 0..4 {
        let (adjusted, _) = bundle_adjust(scene, &cfg.lm)?;
        *scene = adjusted;
        let mut removed = false;
        for i in 0..scene.tracks.len() {
            let Some(p) = scene.tracks[i].point else { continue };
            let bad: Vec<usize> = scene
                .registered_observations(&scene.tracks[i])
                .iter()
                .filter(|(_, pose, px)| {
                    !project(&p, pose, &scene.intrinsics, &scene.distortion).is_ok_and(|q| q.distance(*px) < cfg.max_reprojection_error)
                })
                .map(|o| o.0)
                .collect();
            if bad.is_empty() {
                continue;
            }
            removed = true;
            let t = &mut scene.tracks[i];
            t.observations.retain(|o| !bad.contains(&o.0));
            let remaining = t.observations.iter().filter(|o| scene.poses[o.0].is_some()).count();
            if remaining < 2 {
                t.point = None;
            }
        }
        if !removed {
            break;
        }
    }
    Ok(())
}
