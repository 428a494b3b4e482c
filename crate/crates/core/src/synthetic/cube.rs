//! Blob-textured cube for structure-from-motion ground truth.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{undistort_pixel, CameraIntrinsics, CameraPose, DistortionCoeffs, PixelPoint};
use crate::image::GrayImage;
use crate::sfm::{align_similarity, SfmScene, Similarity};
use crate::target::subsample_offset;

pub const CUBE_BACKGROUND: u8 = 30;
const TEXELS: usize = 800;
const SUBSAMPLES: usize = 4;

/// Axis-aligned cube centered at the origin, each face covered by random
/// Gaussian blobs.
#[derive(Debug, Clone)]
pub struct TexturedCube {
    edge: f64,
    seed: u64,
    blobs_per_face: usize,
    /// Face `2a + (sign > 0)` for axis `a`, `TEXELS²` row-major.
    textures: Vec<Vec<f32>>,
    blobs: Vec<Blob>,
}

/// One texture blob in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: Vector3<f64>,
    pub face: usize,
    /// Standard deviation on the face, world units.
    pub sigma: f64,
}

impl TexturedCube {
    pub fn new(edge: f64, seed: u64, blobs_per_face: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut textures = Vec::with_capacity(6);
        let mut blobs = Vec::new();
        let texel = edge / (TEXELS - 1) as f64;
        for face in 0..6 {
            let (tex, placed) = face_texture(&mut rng, face, blobs_per_face);
            textures.push(tex);
            let a = face / 2;
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            for (bx, by, sigma) in placed {
                let mut center = Vector3::zeros();
                center[a] = if face % 2 == 1 { 0.5 * edge } else { -0.5 * edge };
                center[b] = bx * texel - 0.5 * edge;
                center[c] = by * texel - 0.5 * edge;
                blobs.push(Blob { center, face, sigma: sigma * texel });
            }
        }
        Self { edge, seed, blobs_per_face, textures, blobs }
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn blobs_per_face(&self) -> usize {
        self.blobs_per_face
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }

    /// First surface hit of the ray `origin + λ dir`, `λ > 0`, with its face.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(Vector3<f64>, usize)> {
        let h = 0.5 * self.edge;
        let (mut near, mut far) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut face = 0;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a].abs() > h {
                    return None;
                }
                continue;
            }
            let (t1, t2) = ((-h - origin[a]) / dir[a], (h - origin[a]) / dir[a]);
            let (lo, hi, lo_face) = if t1 < t2 { (t1, t2, 2 * a) } else { (t2, t1, 2 * a + 1) };
            if lo > near {
                near = lo;
                face = lo_face;
            }
            far = far.min(hi);
        }
        (near <= far && near > 0.0).then(|| (origin + dir * near, face))
    }

    /// Texture value at a surface point of `face`.
    fn shade(&self, p: &Vector3<f64>, face: usize) -> f64 {
        let a = face / 2;
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let s = (p[b] / self.edge + 0.5) * (TEXELS - 1) as f64;
        let t = (p[c] / self.edge + 0.5) * (TEXELS - 1) as f64;
        let tex = &self.textures[face];
        let (x0, y0) = (s.floor().clamp(0.0, (TEXELS - 2) as f64), t.floor().clamp(0.0, (TEXELS - 2) as f64));
        let (fx, fy) = ((s - x0).clamp(0.0, 1.0), (t - y0).clamp(0.0, 1.0));
        let (x0, y0) = (x0 as usize, y0 as usize);
        let at = |x: usize, y: usize| f64::from(tex[y * TEXELS + x]);
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Euclidean distance from `p` to the cube surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        let h = 0.5 * self.edge;
        let q = p.map(|v| v.abs() - h);
        let outside = q.map(|v| v.max(0.0)).norm();
        let inside = q.max().min(0.0);
        outside + inside.abs()
    }
}

/// Texture for `face` and the `(s, t, σ)` of each blob in texels.
fn face_texture(rng: &mut ChaCha8Rng, face: usize, blobs: usize) -> (Vec<f32>, Vec<(f64, f64, f64)>) {
    let base = 110.0 + 8.0 * face as f32;
    let mut tex = vec![base; TEXELS * TEXELS];
    let scale = (TEXELS - 1) as f64;
    let mut placed = Vec::with_capacity(blobs);
    for _ in 0..blobs {
        let (bx, by) = (rng.random_range(0.04..0.96) * scale, rng.random_range(0.04..0.96) * scale);
        let sigma = rng.random_range(0.01..0.03) * scale;
        let amp = rng.random_range(55.0..95.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        placed.push((bx, by, sigma));
        let r = (4.0 * sigma).ceil() as isize;
        let (cx, cy) = (bx.round() as isize, by.round() as isize);
        for y in (cy - r).max(0)..=(cy + r).min(TEXELS as isize - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(TEXELS as isize - 1) {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                tex[y as usize * TEXELS + x as usize] += (amp * (-d2 / (2.0 * sigma * sigma)).exp()) as f32;
            }
        }
    }
    tex.iter_mut().for_each(|v| *v = v.clamp(0.0, 255.0));
    (tex, placed)
}

/// Cameras on a circle of radius `distance` around the origin at elevation
/// `elevation` (radians), looking at the cube center. Azimuths are centered
/// on `center_azimuth` and spaced by `step`.
pub fn cube_orbit_poses(count: usize, distance: f64, elevation: f64, center_azimuth: f64, step: f64) -> Vec<CameraPose> {
    let first = center_azimuth - 0.5 * step * count.saturating_sub(1) as f64;
    (0..count)
        .map(|i| {
            let az = first + step * i as f64;
            let c = Vector3::new(elevation.cos() * az.cos(), elevation.cos() * az.sin(), elevation.sin()) * distance;
            CameraPose::look_at(&c, &Vector3::zeros(), &Vector3::new(0.0, 0.0, -1.0))
        })
        .collect()
}

/// Ray-traced view of the cube, 4×4 samples per pixel, uniform background.
pub fn render_cube(cube: &TexturedCube, pose: &CameraPose, k: &CameraIntrinsics, d: &DistortionCoeffs, width: usize, height: usize) -> GrayImage {
    let rt = pose.rotation().transpose();
    let origin = pose.center();
    let sample = |u: f64, v: f64| -> f64 {
        let Ok(n) = undistort_pixel(PixelPoint::new(u, v), k, d) else {
            return f64::from(CUBE_BACKGROUND);
        };
        match cube.raycast(&origin, &(rt * n.to_homogeneous())) {
            Some((p, face)) => cube.shade(&p, face),
            None => f64::from(CUBE_BACKGROUND),
        }
    };
    let mut data = vec![0u8; width * height];
    data.par_chunks_mut(width.max(1)).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for sy in 0..SUBSAMPLES {
                for sx in 0..SUBSAMPLES {
                    let (ox, oy) = subsample_offset(sx, sy, SUBSAMPLES);
                    acc += sample(x as f64 + ox, y as f64 + oy);
                }
            }
            *out = (acc / (SUBSAMPLES * SUBSAMPLES) as f64).round().clamp(0.0, 255.0) as u8;
        }
    });
    GrayImage::new(width, height, data).expect("buffer sized from dimensions")
}

/// A cube, a calibrated camera and the poses it is seen from.
#[derive(Debug, Clone)]
pub struct CubeScene {
    pub cube: TexturedCube,
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub width: usize,
    pub height: usize,
    pub poses: Vec<CameraPose>,
}

impl CubeScene {
    /// 200 mm cube seen by the reference webcam from five viewpoints 8° apart
    /// on a 750 mm orbit, 30° above the horizon.
    pub fn standard(seed: u64) -> Self {
        Self {
            cube: TexturedCube::new(200.0, seed, 120),
            intrinsics: super::webcam_intrinsics(),
            distortion: super::webcam_distortion(),
            width: super::WEBCAM_WIDTH,
            height: super::WEBCAM_HEIGHT,
            poses: cube_orbit_poses(5, 750.0, 30f64.to_radians(), 45f64.to_radians(), 8f64.to_radians()),
        }
    }

    pub fn render(&self) -> Vec<GrayImage> {
        self.poses.iter().map(|p| render_cube(&self.cube, p, &self.intrinsics, &self.distortion, self.width, self.height)).collect()
    }

    /// Surface point seen at pixel `px` of view `view`.
    pub fn surface_point(&self, view: usize, px: PixelPoint) -> Option<Vector3<f64>> {
        let pose = self.poses.get(view)?;
        let n = undistort_pixel(px, &self.intrinsics, &self.distortion).ok()?;
        self.cube.raycast(&pose.center(), &(pose.rotation().transpose() * n.to_homogeneous())).map(|(p, _)| p)
    }
}

/// Accuracy of a reconstruction of a [`CubeScene`].
#[derive(Debug, Clone, PartialEq)]
pub struct CubeEvaluation {
    /// Valid tracks with a ground-truth surface point.
    pub points: usize,
    /// Reconstruction → world fit.
    pub similarity: Similarity,
    /// Point error after the fit, world units.
    pub rms: f64,
    /// Share of fitted points within `face_tolerance` of the cube surface.
    pub face_fraction: f64,
    pub face_tolerance: f64,
}

impl CubeScene {
    /// Fits the reconstruction to ground truth by a similarity. Each point's
    /// truth is the mean surface hit of its observations' rays.
    pub fn evaluate(&self, scene: &SfmScene, face_tolerance: f64) -> Option<CubeEvaluation> {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for t in scene.tracks.iter().filter(|t| scene.is_valid(t)) {
            let hits: Vec<Vector3<f64>> = t
                .observations
                .iter()
                .filter(|o| scene.poses[o.0].is_some())
                .filter_map(|&(v, f)| self.surface_point(v, scene.keypoints[v][f]))
                .collect();
            if hits.is_empty() {
                continue;
            }
            src.push(t.point?.to_vector());
            dst.push(hits.iter().sum::<Vector3<f64>>() / hits.len() as f64);
        }
        let similarity = align_similarity(&src, &dst)?;
        let fitted: Vec<Vector3<f64>> = src.iter().map(|p| similarity.apply(p)).collect();
        let sq: f64 = fitted.iter().zip(&dst).map(|(p, q)| (p - q).norm_squared()).sum();
        let near = fitted.iter().filter(|p| self.cube.surface_distance(p) <= face_tolerance).count();
        Some(CubeEvaluation {
            points: src.len(),
            similarity,
            rms: (sq / src.len() as f64).sqrt(),
            face_fraction: near as f64 / src.len() as f64,
            face_tolerance,
        })
    }
}
