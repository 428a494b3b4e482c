//! Photometric refinement of track observations: each observation is moved
//! to where an affine warp of the reference view's patch fits best.

use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

use super::SfmScene;
use crate::geometry::PixelPoint;
use crate::image::Plane;

const MIN_HALF: usize = 6;
const MAX_HALF: usize = 16;
const ITERATIONS: usize = 40;
/// Refinements that move a keypoint further than this are not trusted.
const MAX_SHIFT: f64 = 4.0;
const MIN_NCC: f64 = 0.9;

/// Outcome of aligning one patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Alignment {
    pub position: PixelPoint,
    /// Weighted normalized cross-correlation after the warp.
    pub ncc: f64,
}

type Params = SVector<f64, 8>;

/// Affine Lucas-Kanade with gain and bias. The patch of `reference` around
/// `anchor` (half size `half`) is searched for in `target` starting at `guess`.
pub(crate) fn align_patch(reference: &Plane, anchor: PixelPoint, target: &Plane, guess: PixelPoint, half: usize) -> Option<Alignment> {
    let h = half as f64;
    let inside = |img: &Plane, p: PixelPoint, margin: f64| {
        p.u - margin >= 1.0 && p.v - margin >= 1.0 && p.u + margin <= img.width as f64 - 2.0 && p.v + margin <= img.height as f64 - 2.0
    };
    if !inside(reference, anchor, h) || !inside(target, guess, 1.5 * h) {
        return None;
    }
    let sigma_w = 0.5 * h;
    let mut samples = Vec::with_capacity((2 * half + 1).pow(2));
    for dy in -(half as isize)..=half as isize {
        for dx in -(half as isize)..=half as isize {
            let (x, y) = (dx as f64, dy as f64);
            let t = f64::from(reference.sample_bilinear((anchor.u + x) as f32, (anchor.v + y) as f32));
            let w = (-(x * x + y * y) / (2.0 * sigma_w * sigma_w)).exp();
            samples.push((x, y, t, w));
        }
    }
    // p = [a11 - 1, a12, a21, a22 - 1, tx, ty, gain - 1, bias]
    let mut p = Params::zeros();
    p[4] = guess.u - anchor.u;
    p[5] = guess.v - anchor.v;
    let warp = |p: &Params, x: f64, y: f64| (anchor.u + (1.0 + p[0]) * x + p[1] * y + p[4], anchor.v + p[2] * x + (1.0 + p[3]) * y + p[5]);
    let sample = |u: f64, v: f64| f64::from(target.sample_bilinear(u as f32, v as f32));
    for _ in 0..ITERATIONS {
        let mut jtj = SMatrix::<f64, 8, 8>::zeros();
        let mut jtr = Params::zeros();
        for &(x, y, t, w) in &samples {
            let (u, v) = warp(&p, x, y);
            let i = sample(u, v);
            let gx = 0.5 * (sample(u + 1.0, v) - sample(u - 1.0, v));
            let gy = 0.5 * (sample(u, v + 1.0) - sample(u, v - 1.0));
            let gain = 1.0 + p[6];
            let r = gain * i + p[7] - t;
            let (gx, gy) = (gain * gx, gain * gy);
            let j = Params::from_column_slice(&[gx * x, gx * y, gy * x, gy * y, gx, gy, i, 1.0]);
            jtj += j * j.transpose() * w;
            jtr += j * (r * w);
        }
        for k in 0..8 {
            jtj[(k, k)] *= 1.0 + 1e-6;
        }
        let step = jtj.cholesky()?.solve(&jtr);
        p -= step;
        let (cu, cv) = (p[4] + anchor.u, p[5] + anchor.v);
        if !inside(target, PixelPoint::new(cu, cv), 1.5 * h) || p.fixed_rows::<4>(0).amax() > 0.5 {
            return None;
        }
        if step[4].hypot(step[5]) < 1e-4 {
            break;
        }
    }
    let (mut st, mut si, mut stt, mut sii, mut sti, mut sw) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, t, w) in &samples {
        let (u, v) = warp(&p, x, y);
        let i = sample(u, v);
        st += w * t;
        si += w * i;
        stt += w * t * t;
        sii += w * i * i;
        sti += w * t * i;
        sw += w;
    }
    let cov = sti - st * si / sw;
    let var = (stt - st * st / sw) * (sii - si * si / sw);
    if var <= 0.0 {
        return None;
    }
    Some(Alignment { position: PixelPoint::new(anchor.u + p[4], anchor.v + p[5]), ncc: cov / var.sqrt() })
}

/// Result of [`refine_observations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct RefineSummary {
    pub moved: usize,
    pub dropped: usize,
}

/// `(view, feature, refined position)`; `None` drops the observation.
type Update = (usize, usize, Option<PixelPoint>);

/// Moves the observations of every valid track onto its reference view's
/// patch and drops those whose patch does not fit. The reference is the
/// registered observation in the median view; `scales` gives the feature
/// scale per keypoint and sets the patch size.
pub(crate) fn refine_observations(scene: &mut SfmScene, planes: &[Plane], scales: &[Vec<f64>]) -> RefineSummary {
    let updates: Vec<(usize, Vec<Update>)> = scene
        .tracks
        .par_iter()
        .enumerate()
        .filter(|(_, t)| scene.is_valid(t))
        .map(|(i, t)| {
            let mut obs: Vec<(usize, usize)> = t.observations.iter().copied().filter(|o| scene.poses[o.0].is_some()).collect();
            obs.sort_unstable();
            let (rv, rf) = obs[obs.len() / 2];
            let anchor = scene.keypoints[rv][rf];
            let half = ((2.5 * scales[rv][rf]).round() as usize).clamp(MIN_HALF, MAX_HALF);
            let moves = obs
                .iter()
                .filter(|&&(v, _)| v != rv)
                .map(|&(v, f)| {
                    let guess = scene.keypoints[v][f];
                    let fit = align_patch(&planes[rv], anchor, &planes[v], guess, half)
                        .filter(|a| a.ncc >= MIN_NCC && a.position.distance(guess) <= MAX_SHIFT);
                    (v, f, fit.map(|a| a.position))
                })
                .collect();
            (i, moves)
        })
        .collect();
    let mut summary = RefineSummary::default();
    for (i, moves) in updates {
        for (v, f, p) in moves {
            match p {
                Some(p) => {
                    scene.keypoints[v][f] = p;
                    summary.moved += 1;
                }
                None => {
                    scene.tracks[i].observations.retain(|o| o.0 != v);
                    summary.dropped += 1;
                }
            }
        }
        if scene.registered_observations(&scene.tracks[i]).len() < 2 {
            scene.tracks[i].point = None;
        }
    }
    summary
}
