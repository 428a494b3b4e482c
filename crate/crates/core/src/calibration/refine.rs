//! Parameter packing and the joint reprojection problem.

use nalgebra::{DMatrix, DVector, Vector3};

use super::StandardErrors;
use crate::geometry::{project_with_jacobian, CameraIntrinsics, CameraPose, DistortionCoeffs, WorldPoint};
use crate::optim::NlsProblem;
use crate::target::CornerGrid;

/// Which parameters are free, and where they sit in the vector:
/// `[fx fy cx cy (skew) | k1 k2 (k3) (p1 p2) | (ω t) per view]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub skew: bool,
    pub k3: bool,
    pub tangential: bool,
    pub views: usize,
}

impl Layout {
    fn intrinsic_count(&self) -> usize {
        4 + usize::from(self.skew)
    }

    fn distortion_count(&self) -> usize {
        2 + usize::from(self.k3) + 2 * usize::from(self.tangential)
    }

    fn camera_count(&self) -> usize {
        self.intrinsic_count() + self.distortion_count()
    }

    pub fn len(&self) -> usize {
        self.camera_count() + 6 * self.views
    }

    /// Columns of the projection Jacobian's intrinsic (fx fy cx cy skew) and
    /// distortion (k1 k2 k3 p1 p2) blocks that are free.
    fn intrinsic_columns(&self) -> Vec<usize> {
        if self.skew {
            vec![0, 1, 2, 3, 4]
        } else {
            vec![0, 1, 2, 3]
        }
    }

    fn distortion_columns(&self) -> Vec<usize> {
        let mut cols = vec![0, 1];
        if self.k3 {
            cols.push(2);
        }
        if self.tangential {
            cols.extend([3, 4]);
        }
        cols
    }

    pub fn pack(&self, k: &CameraIntrinsics, d: &DistortionCoeffs, poses: &[CameraPose]) -> DVector<f64> {
        let mut x = Vec::with_capacity(self.len());
        let intr = [k.fx, k.fy, k.cx, k.cy, k.skew];
        x.extend(self.intrinsic_columns().iter().map(|&c| intr[c]));
        let dist = [d.k1, d.k2, d.k3(), d.p1(), d.p2()];
        x.extend(self.distortion_columns().iter().map(|&c| dist[c]));
        for pose in poses {
            x.extend(pose.axis_angle().iter());
            x.extend(pose.translation().iter());
        }
        DVector::from_vec(x)
    }

    pub fn camera(&self, x: &DVector<f64>) -> Option<(CameraIntrinsics, DistortionCoeffs)> {
        let skew = if self.skew { x[4] } else { 0.0 };
        let k = CameraIntrinsics::with_skew(x[0], x[1], x[2], x[3], skew).ok()?;
        let o = self.intrinsic_count();
        let mut d = DistortionCoeffs::radial(x[o], x[o + 1]);
        let mut i = o + 2;
        if self.k3 {
            d.k3 = Some(x[i]);
            i += 1;
        }
        if self.tangential {
            d.p1 = Some(x[i]);
            d.p2 = Some(x[i + 1]);
        }
        Some((k, d))
    }

    fn view(&self, x: &DVector<f64>, v: usize) -> (Vector3<f64>, Vector3<f64>) {
        let o = self.camera_count() + 6 * v;
        (Vector3::new(x[o], x[o + 1], x[o + 2]), Vector3::new(x[o + 3], x[o + 4], x[o + 5]))
    }

    pub fn unpack(&self, x: &DVector<f64>) -> Option<(CameraIntrinsics, DistortionCoeffs, Vec<CameraPose>)> {
        let (k, d) = self.camera(x)?;
        let poses = (0..self.views)
            .map(|v| {
                let (w, t) = self.view(x, v);
                CameraPose::from_axis_angle(&w, t)
            })
            .collect();
        Some((k, d, poses))
    }

    pub fn errors(&self, se: &[f64]) -> StandardErrors {
        let mut out = StandardErrors::default();
        let mut intr = [0.0; 5];
        for (i, &c) in self.intrinsic_columns().iter().enumerate() {
            intr[c] = se[i];
        }
        [out.fx, out.fy, out.cx, out.cy, out.skew] = intr;
        let o = self.intrinsic_count();
        let mut dist = [0.0; 5];
        for (i, &c) in self.distortion_columns().iter().enumerate() {
            dist[c] = se[o + i];
        }
        [out.k1, out.k2, out.k3, out.p1, out.p2] = dist;
        for v in 0..self.views {
            let b = self.camera_count() + 6 * v;
            out.rotations.push([se[b], se[b + 1], se[b + 2]]);
            out.translations.push([se[b + 3], se[b + 4], se[b + 5]]);
        }
        out
    }
}

pub(crate) struct CalibrationProblem<'a> {
    pub layout: Layout,
    pub world: &'a [WorldPoint],
    pub views: &'a [CornerGrid],
}

impl NlsProblem for CalibrationProblem<'_> {
    fn num_params(&self) -> usize {
        self.layout.len()
    }

    fn num_residuals(&self) -> usize {
        2 * self.world.len() * self.views.len()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.num_residuals();
        let Some((k, d)) = self.layout.camera(x) else {
            return DVector::from_element(m, f64::NAN);
        };
        let mut r = DVector::zeros(m);
        let mut row = 0;
        for (v, grid) in self.views.iter().enumerate() {
            let (w, t) = self.layout.view(x, v);
            let rot = crate::geometry::axis_angle_to_matrix(&w);
            for (p, obs) in self.world.iter().zip(&grid.corners) {
                let pc = rot * p.to_vector() + t;
                let px = crate::geometry::camera_to_normalized(&pc).map(|(n, _)| k.normalized_to_pixel(crate::geometry::distort_normalized(n, &d)));
                let (ru, rv) = match px {
                    Ok(px) => (px.u - obs.u, px.v - obs.v),
                    Err(_) => (f64::NAN, f64::NAN),
                };
                r[row] = ru;
                r[row + 1] = rv;
                row += 2;
            }
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (m, n) = (self.num_residuals(), self.num_params());
        let (k, d) = self.layout.camera(x)?;
        let icols = self.layout.intrinsic_columns();
        let dcols = self.layout.distortion_columns();
        let doff = self.layout.intrinsic_count();
        let mut jac = DMatrix::zeros(m, n);
        let mut row = 0;
        for v in 0..self.views.len() {
            let (w, t) = self.layout.view(x, v);
            let base = self.layout.camera_count() + 6 * v;
            for p in self.world {
                let Ok(pj) = project_with_jacobian(&p.to_vector(), &w, &t, &k, &d) else {
                    jac.rows_mut(row, 2).fill(f64::NAN);
                    row += 2;
                    continue;
                };
                for r in 0..2 {
                    for (i, &c) in icols.iter().enumerate() {
                        jac[(row + r, i)] = pj.d_intrinsics[(r, c)];
                    }
                    for (i, &c) in dcols.iter().enumerate() {
                        jac[(row + r, doff + i)] = pj.d_distortion[(r, c)];
                    }
                    for c in 0..3 {
                        jac[(row + r, base + c)] = pj.d_rotation[(r, c)];
                        jac[(row + r, base + 3 + c)] = pj.d_translation[(r, c)];
                    }
                }
                row += 2;
            }
        }
        Some(jac)
    }
}
