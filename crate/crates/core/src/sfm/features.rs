//! Difference-of-Gaussians blobs with a 64-d gradient-histogram descriptor.

use std::f64::consts::PI;

use super::SfmError;
use crate::geometry::PixelPoint;
use crate::image::{GrayImage, Plane};

pub const DESCRIPTOR_LEN: usize = 64;
pub const MIN_IMAGE_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub position: PixelPoint,
    /// Blob scale σ in pixels of the input image.
    pub scale: f64,
    /// Dominant gradient direction, radians in (−π, π].
    pub orientation: f64,
    /// |DoG| at the refined extremum.
    pub response: f64,
    /// Unit L2 norm.
    pub descriptor: [f64; DESCRIPTOR_LEN],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub max_features: usize,
    pub octaves: usize,
    pub intervals: usize,
    pub base_sigma: f64,
    /// Blur already present in the input.
    pub input_sigma: f64,
    /// Minimum |DoG| on a [0, 1] intensity scale, before division by `intervals`.
    pub contrast_threshold: f64,
    /// Principal-curvature ratio above which a blob is rejected as an edge.
    pub edge_ratio: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { max_features: 500, octaves: 3, intervals: 3, base_sigma: 1.6, input_sigma: 0.5, contrast_threshold: 0.03, edge_ratio: 10.0 }
    }
}

const BORDER: usize = 5;
const REFINE_STEPS: usize = 5;
const ORIENTATION_BINS: usize = 36;
const GRID: usize = 4;
const ANGLE_BINS: usize = 4;
/// Descriptor cell width in units of the blob scale.
const CELL_SCALE: f64 = 3.0;
const SAMPLES_PER_CELL: usize = 5;

pub fn detect_features(img: &GrayImage, max_features: usize) -> Result<Vec<Feature>, SfmError> {
    detect_features_with(img, &FeatureConfig { max_features, ..FeatureConfig::default() })
}

pub fn detect_features_with(img: &GrayImage, cfg: &FeatureConfig) -> Result<Vec<Feature>, SfmError> {
    if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
        return Err(SfmError::ImageTooSmall { width: img.width(), height: img.height() });
    }
    let s = cfg.intervals.max(1);
    let k = 2f64.powf(1.0 / s as f64);
    let mut base = Plane::from_gray(img, 1.0 / 255.0);
    let pre = (cfg.base_sigma.powi(2) - cfg.input_sigma.powi(2)).max(0.0).sqrt();
    base = base.gaussian_blur(pre as f32);

    let mut out = Vec::new();
    for octave in 0..cfg.octaves {
        // octaves share the full-resolution grid, so every scale is localized
        // to the same subpixel precision
        let size = (1usize << octave) as f64;
        let mut gauss = vec![base.clone()];
        for i in 1..s + 3 {
            let prev = size * cfg.base_sigma * k.powi(i as i32 - 1);
            let inc = prev * (k * k - 1.0).sqrt();
            gauss.push(gauss[i - 1].gaussian_blur(inc as f32));
        }
        let dog: Vec<Plane> = gauss.windows(2).map(|w| difference(&w[1], &w[0])).collect();
        detect_octave(&gauss, &dog, octave, cfg, &mut out);
        base = gauss.swap_remove(s);
    }
    out.sort_by(|a, b| b.response.total_cmp(&a.response).then(a.position.v.total_cmp(&b.position.v)).then(a.position.u.total_cmp(&b.position.u)));
    out.truncate(cfg.max_features);
    Ok(out)
}

fn difference(a: &Plane, b: &Plane) -> Plane {
    Plane { width: a.width, height: a.height, data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect() }
}

fn is_extremum(dog: &[Plane], l: usize, x: usize, y: usize) -> bool {
    let v = dog[l].at(x, y);
    let (mut is_max, mut is_min) = (true, true);
    for plane in &dog[l - 1..=l + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dog[l]) && xx == x && yy == y {
                    continue;
                }
                let n = plane.at(xx, yy);
                is_max &= v > n;
                is_min &= v < n;
            }
        }
        if !is_max && !is_min {
            return false;
        }
    }
    is_max || is_min
}

fn detect_octave(gauss: &[Plane], dog: &[Plane], octave: usize, cfg: &FeatureConfig, out: &mut Vec<Feature>) {
    let s = cfg.intervals.max(1);
    let (w, h) = (dog[0].width, dog[0].height);
    let threshold = cfg.contrast_threshold / s as f64;
    let size = (1usize << octave) as f64;
    for l in 1..=s {
        for y in BORDER..h - BORDER {
            for x in BORDER..w - BORDER {
                if (dog[l].at(x, y).abs() as f64) < 0.5 * threshold || !is_extremum(dog, l, x, y) {
                    continue;
                }
                let Some(ext) = refine(dog, l, x, y, cfg) else { continue };
                if ext.value.abs() < threshold {
                    continue;
                }
                let sigma = size * cfg.base_sigma * 2f64.powf(ext.level / s as f64);
                let g = &gauss[(ext.level.round() as usize).clamp(0, gauss.len() - 1)];
                let Some(orientation) = dominant_orientation(g, ext.x, ext.y, sigma) else { continue };
                let descriptor = describe(g, ext.x, ext.y, sigma, orientation);
                out.push(Feature { position: PixelPoint::new(ext.x, ext.y), scale: sigma, orientation, response: ext.value.abs(), descriptor });
            }
        }
    }
}

struct Extremum {
    x: f64,
    y: f64,
    level: f64,
    value: f64,
}

/// Quadratic fit in (x, y, σ); steps to a neighbour while the offset exceeds
/// half a sample.
fn refine(dog: &[Plane], mut l: usize, mut x: usize, mut y: usize, cfg: &FeatureConfig) -> Option<Extremum> {
    let (w, h) = (dog[0].width, dog[0].height);
    let s = dog.len() - 2;
    for _ in 0..REFINE_STEPS {
        let v = |dl: isize, dx: isize, dy: isize| -> f64 {
            dog[(l as isize + dl) as usize].at((x as isize + dx) as usize, (y as isize + dy) as usize) as f64
        };
        let c = v(0, 0, 0);
        let g = nalgebra::Vector3::new(0.5 * (v(0, 1, 0) - v(0, -1, 0)), 0.5 * (v(0, 0, 1) - v(0, 0, -1)), 0.5 * (v(1, 0, 0) - v(-1, 0, 0)));
        let dxx = v(0, 1, 0) + v(0, -1, 0) - 2.0 * c;
        let dyy = v(0, 0, 1) + v(0, 0, -1) - 2.0 * c;
        let dss = v(1, 0, 0) + v(-1, 0, 0) - 2.0 * c;
        let dxy = 0.25 * (v(0, 1, 1) - v(0, 1, -1) - v(0, -1, 1) + v(0, -1, -1));
        let dxs = 0.25 * (v(1, 1, 0) - v(1, -1, 0) - v(-1, 1, 0) + v(-1, -1, 0));
        let dys = 0.25 * (v(1, 0, 1) - v(1, 0, -1) - v(-1, 0, 1) + v(-1, 0, -1));
        let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let off = -(hess.try_inverse()? * g);
        if off.iter().all(|o| o.abs() <= 0.5) {
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = cfg.edge_ratio;
            if det <= 0.0 || tr * tr * r >= (r + 1.0).powi(2) * det {
                return None;
            }
            return Some(Extremum { x: x as f64 + off.x, y: y as f64 + off.y, level: l as f64 + off.z, value: c + 0.5 * g.dot(&off) });
        }
        let nx = x as isize + off.x.round() as isize;
        let ny = y as isize + off.y.round() as isize;
        let nl = l as isize + off.z.round() as isize;
        if nl < 1 || nl > s as isize || nx < BORDER as isize || ny < BORDER as isize || nx >= (w - BORDER) as isize || ny >= (h - BORDER) as isize {
            return None;
        }
        (x, y, l) = (nx as usize, ny as usize, nl as usize);
    }
    None
}

fn gradient(g: &Plane, x: f64, y: f64) -> (f64, f64) {
    let (x, y) = (x as f32, y as f32);
    let gx = 0.5 * (g.sample_bilinear(x + 1.0, y) - g.sample_bilinear(x - 1.0, y));
    let gy = 0.5 * (g.sample_bilinear(x, y + 1.0) - g.sample_bilinear(x, y - 1.0));
    (gx as f64, gy as f64)
}

/// Peak of the smoothed, magnitude-weighted orientation histogram.
fn dominant_orientation(g: &Plane, cx: f64, cy: f64, sigma: f64) -> Option<f64> {
    let weight_sigma = 1.5 * sigma;
    let radius = (3.0 * weight_sigma).round() as isize;
    let mut hist = [0.0f64; ORIENTATION_BINS];
    let (ix, iy) = (cx.round() as isize, cy.round() as isize);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = (ix + dx, iy + dy);
            if x < 1 || y < 1 || x >= g.width as isize - 1 || y >= g.height as isize - 1 {
                continue;
            }
            let (fx, fy) = (x as f64 - cx, y as f64 - cy);
            let r2 = fx * fx + fy * fy;
            if r2 > (radius * radius) as f64 {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            let gx = 0.5 * (g.at(x + 1, y) - g.at(x - 1, y)) as f64;
            let gy = 0.5 * (g.at(x, y + 1) - g.at(x, y - 1)) as f64;
            let mag = gx.hypot(gy);
            let w = (-r2 / (2.0 * weight_sigma * weight_sigma)).exp();
            let bin = ((gy.atan2(gx) + PI) / (2.0 * PI) * ORIENTATION_BINS as f64).floor() as usize % ORIENTATION_BINS;
            hist[bin] += w * mag;
        }
    }
    for _ in 0..2 {
        let prev = hist;
        for i in 0..ORIENTATION_BINS {
            hist[i] = 0.25 * prev[(i + ORIENTATION_BINS - 1) % ORIENTATION_BINS] + 0.5 * prev[i] + 0.25 * prev[(i + 1) % ORIENTATION_BINS];
        }
    }
    let (peak, &max) = hist.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if max <= 0.0 {
        return None;
    }
    let l = hist[(peak + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
    let r = hist[(peak + 1) % ORIENTATION_BINS];
    let den = l - 2.0 * max + r;
    let off = if den < 0.0 { 0.5 * (l - r) / den } else { 0.0 };
    let angle = (peak as f64 + 0.5 + off) / ORIENTATION_BINS as f64 * 2.0 * PI - PI;
    Some(wrap(angle))
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// 4×4 cells × 4 orientation bins in the frame rotated by `theta`.
fn describe(g: &Plane, cx: f64, cy: f64, sigma: f64, theta: f64) -> [f64; DESCRIPTOR_LEN] {
    let cell = CELL_SCALE * sigma;
    let half = 0.5 * GRID as f64 * cell;
    let n = GRID * SAMPLES_PER_CELL;
    let (c, s) = (theta.cos(), theta.sin());
    let mut d = [0.0; DESCRIPTOR_LEN];
    for j in 0..n {
        for i in 0..n {
            let u = ((i as f64 + 0.5) / n as f64) * 2.0 * half - half;
            let v = ((j as f64 + 0.5) / n as f64) * 2.0 * half - half;
            let x = cx + c * u - s * v;
            let y = cy + s * u + c * v;
            let (gx, gy) = gradient(g, x, y);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let w = (-(u * u + v * v) / (2.0 * half * half)).exp();
            let rel = wrap(gy.atan2(gx) - theta) + PI;
            let pos = rel / (2.0 * PI) * ANGLE_BINS as f64 - 0.5;
            let b0 = pos.floor();
            let frac = pos - b0;
            let b0 = (b0 as isize).rem_euclid(ANGLE_BINS as isize) as usize;
            let b1 = (b0 + 1) % ANGLE_BINS;
            let base = ((j / SAMPLES_PER_CELL) * GRID + i / SAMPLES_PER_CELL) * ANGLE_BINS;
            d[base + b0] += w * mag * (1.0 - frac);
            d[base + b1] += w * mag * frac;
        }
    }
    normalize(&mut d);
    // damp single dominant gradients, then renormalize
    d.iter_mut().for_each(|v| *v = v.min(0.2));
    normalize(&mut d);
    d
}

fn normalize(d: &mut [f64]) {
    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        d.iter_mut().for_each(|v| *v /= n);
    } else {
        // textureless patch: any fixed unit vector keeps the invariant
        d.iter_mut().for_each(|v| *v = 1.0 / (DESCRIPTOR_LEN as f64).sqrt());
    }
}
