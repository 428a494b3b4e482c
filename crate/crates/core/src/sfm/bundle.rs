//! Joint refinement of poses and points with fixed intrinsics.

use nalgebra::{DMatrix, DVector, Matrix2xX, Matrix3, SMatrix, Vector2, Vector3};

use super::{SfmError, SfmScene};
use crate::geometry::{camera_to_normalized, distort_normalized, project_with_jacobian, CameraPose, PixelPoint, WorldPoint};
use crate::optim::{levenberg_marquardt, LmConfig, LmReport, NlsProblem};

#[derive(Debug, Clone, Copy)]
enum PoseParams {
    Fixed,
    /// Rotation and translation, 6 parameters.
    Free(usize),
    /// Rotation plus 2 parameters moving the translation on a sphere.
    Sphere(usize),
}

struct Sphere {
    norm: f64,
    base: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
}

impl Sphere {
    fn new(t: &Vector3<f64>) -> Option<Self> {
        let norm = t.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return None;
        }
        let base = t / norm;
        let helper = if base.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = base.cross(&helper).normalize();
        let e2 = base.cross(&e1);
        Some(Self { norm, base, e1, e2 })
    }

    fn translation(&self, a: f64, b: f64) -> Vector3<f64> {
        (self.base + self.e1 * a + self.e2 * b).normalize() * self.norm
    }

    /// `∂t/∂(a, b)`.
    fn jacobian(&self, a: f64, b: f64) -> SMatrix<f64, 3, 2> {
        let v = self.base + self.e1 * a + self.e2 * b;
        let n = v.norm();
        let u = v / n;
        let p = (Matrix3::identity() - u * u.transpose()) * (self.norm / n);
        SMatrix::<f64, 3, 2>::from_columns(&[p * self.e1, p * self.e2])
    }
}

struct Obs {
    track: usize,
    view: usize,
    pixel: PixelPoint,
}

pub(crate) struct BundleProblem<'a> {
    scene: &'a SfmScene,
    pose_params: Vec<PoseParams>,
    point_offset: Vec<Option<usize>>,
    sphere: Option<Sphere>,
    obs: Vec<Obs>,
    n: usize,
}

/// Per-observation residual and its nonzero Jacobian columns.
struct Block {
    residual: Vector2<f64>,
    cols: Vec<usize>,
    jac: Matrix2xX<f64>,
}

impl<'a> BundleProblem<'a> {
    pub fn new(scene: &'a SfmScene) -> Result<Self, SfmError> {
        let (reference, scale) = scene.gauge;
        let registered = scene.registered_views();
        if registered.len() < 2 || reference == scale || !registered.contains(&reference) || !registered.contains(&scale) {
            return Err(SfmError::InvalidInput("bundle adjustment needs two registered gauge views".into()));
        }
        let mut n = 0;
        let mut pose_params = vec![PoseParams::Fixed; scene.poses.len()];
        for &v in &registered {
            if v == reference {
                continue;
            }
            pose_params[v] = if v == scale {
                n += 5;
                PoseParams::Sphere(n - 5)
            } else {
                n += 6;
                PoseParams::Free(n - 6)
            };
        }
        let sphere = scene.poses[scale].as_ref().and_then(|p| Sphere::new(p.translation()));
        if sphere.is_none() {
            return Err(SfmError::ZeroBaseline);
        }
        let mut point_offset = vec![None; scene.tracks.len()];
        let mut obs = Vec::new();
        for (i, t) in scene.tracks.iter().enumerate() {
            if !scene.is_valid(t) {
                continue;
            }
            point_offset[i] = Some(n);
            n += 3;
            for (view, _, pixel) in scene.registered_observations(t) {
                obs.push(Obs { track: i, view, pixel });
            }
        }
        if obs.is_empty() {
            return Err(SfmError::EmptyScene);
        }
        Ok(Self { scene, pose_params, point_offset, sphere, obs, n })
    }

    pub fn pack(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        for (v, p) in self.pose_params.iter().enumerate() {
            let Some(pose) = self.scene.poses[v] else { continue };
            match *p {
                PoseParams::Fixed => {}
                PoseParams::Free(o) => {
                    x.fixed_rows_mut::<3>(o).copy_from(&pose.axis_angle());
                    x.fixed_rows_mut::<3>(o + 3).copy_from(pose.translation());
                }
                // the sphere chart is centered on the current translation
                PoseParams::Sphere(o) => x.fixed_rows_mut::<3>(o).copy_from(&pose.axis_angle()),
            }
        }
        for (t, o) in self.point_offset.iter().enumerate() {
            if let Some(o) = o {
                let p = self.scene.tracks[t].point.expect("offset implies a point").to_vector();
                x.fixed_rows_mut::<3>(*o).copy_from(&p);
            }
        }
        x
    }

    fn pose(&self, x: &DVector<f64>, view: usize) -> (Vector3<f64>, Vector3<f64>) {
        match self.pose_params[view] {
            PoseParams::Fixed => {
                let p = self.scene.poses[view].expect("registered");
                (p.axis_angle(), *p.translation())
            }
            PoseParams::Free(o) => (x.fixed_rows::<3>(o).into_owned(), x.fixed_rows::<3>(o + 3).into_owned()),
            PoseParams::Sphere(o) => {
                let s = self.sphere.as_ref().expect("gauge sphere");
                (x.fixed_rows::<3>(o).into_owned(), s.translation(x[o + 3], x[o + 4]))
            }
        }
    }

    pub fn unpack(&self, x: &DVector<f64>) -> SfmScene {
        let mut scene = self.scene.clone();
        for v in 0..scene.poses.len() {
            if scene.poses[v].is_some() {
                let (w, t) = self.pose(x, v);
                scene.poses[v] = Some(CameraPose::from_axis_angle(&w, t));
            }
        }
        for (t, o) in self.point_offset.iter().enumerate() {
            if let Some(o) = o {
                scene.tracks[t].point = Some(WorldPoint::new(x[*o], x[o + 1], x[o + 2]));
            }
        }
        scene
    }

    fn blocks(&self, x: &DVector<f64>) -> Option<Vec<Block>> {
        let (k, d) = (&self.scene.intrinsics, &self.scene.distortion);
        let views: Vec<Option<(Vector3<f64>, Vector3<f64>)>> =
            (0..self.pose_params.len()).map(|v| self.scene.poses[v].map(|_| self.pose(x, v))).collect();
        self.obs
            .iter()
            .map(|o| {
                let po = self.point_offset[o.track]?;
                let p = Vector3::new(x[po], x[po + 1], x[po + 2]);
                let (w, t) = views[o.view]?;
                let pj = project_with_jacobian(&p, &w, &t, k, d).ok()?;
                let residual = Vector2::new(pj.pixel.u - o.pixel.u, pj.pixel.v - o.pixel.v);
                let d_point = pj.d_point;
                let mut cols = Vec::with_capacity(9);
                let mut parts: Vec<Vector2<f64>> = Vec::with_capacity(9);
                match self.pose_params[o.view] {
                    PoseParams::Fixed => {}
                    PoseParams::Free(off) => {
                        for c in 0..3 {
                            cols.push(off + c);
                            parts.push(pj.d_rotation.column(c).into_owned());
                        }
                        for c in 0..3 {
                            cols.push(off + 3 + c);
                            parts.push(pj.d_translation.column(c).into_owned());
                        }
                    }
                    PoseParams::Sphere(off) => {
                        for c in 0..3 {
                            cols.push(off + c);
                            parts.push(pj.d_rotation.column(c).into_owned());
                        }
                        let s = self.sphere.as_ref()?.jacobian(x[off + 3], x[off + 4]);
                        let dt = pj.d_translation * s;
                        for c in 0..2 {
                            cols.push(off + 3 + c);
                            parts.push(dt.column(c).into_owned());
                        }
                    }
                }
                for c in 0..3 {
                    cols.push(po + c);
                    parts.push(d_point.column(c).into_owned());
                }
                let jac = Matrix2xX::from_columns(&parts);
                Some(Block { residual, cols, jac })
            })
            .collect()
    }
}

impl NlsProblem for BundleProblem<'_> {
    fn num_params(&self) -> usize {
        self.n
    }

    fn num_residuals(&self) -> usize {
        2 * self.obs.len()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let (k, d) = (&self.scene.intrinsics, &self.scene.distortion);
        let views: Vec<Option<CameraPose>> = (0..self.pose_params.len())
            .map(|v| {
                self.scene.poses[v].map(|_| {
                    let (w, t) = self.pose(x, v);
                    CameraPose::from_axis_angle(&w, t)
                })
            })
            .collect();
        let mut r = DVector::from_element(self.num_residuals(), f64::NAN);
        for (i, o) in self.obs.iter().enumerate() {
            let (Some(po), Some(pose)) = (self.point_offset[o.track], views[o.view]) else { continue };
            let pc = pose.transform(&Vector3::new(x[po], x[po + 1], x[po + 2]));
            if let Ok((n, _)) = camera_to_normalized(&pc) {
                let px = k.normalized_to_pixel(distort_normalized(n, d));
                r[2 * i] = px.u - o.pixel.u;
                r[2 * i + 1] = px.v - o.pixel.v;
            }
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let blocks = self.blocks(x)?;
        let mut jac = DMatrix::zeros(self.num_residuals(), self.n);
        for (i, b) in blocks.iter().enumerate() {
            for (c, &col) in b.cols.iter().enumerate() {
                jac[(2 * i, col)] = b.jac[(0, c)];
                jac[(2 * i + 1, col)] = b.jac[(1, c)];
            }
        }
        Some(jac)
    }

    fn normal_equations(&self, x: &DVector<f64>, _r: &DVector<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let blocks = self.blocks(x)?;
        let mut jtj = DMatrix::zeros(self.n, self.n);
        let mut jtr = DVector::zeros(self.n);
        for b in &blocks {
            let local = b.jac.tr_mul(&b.jac);
            let g = b.jac.tr_mul(&b.residual);
            for (i, &ci) in b.cols.iter().enumerate() {
                jtr[ci] += g[i];
                for (j, &cj) in b.cols.iter().enumerate() {
                    jtj[(ci, cj)] += local[(i, j)];
                }
            }
        }
        Some((jtj, jtr))
    }
}

/// The problem `bundle_adjust` solves on `scene` and its current parameters.
/// The gauge views are parameterized as in `bundle_adjust`.
pub fn bundle_problem(scene: &SfmScene) -> Result<(impl NlsProblem + '_, DVector<f64>), SfmError> {
    let problem = BundleProblem::new(scene)?;
    let x = problem.pack();
    Ok((problem, x))
}

/// LM over all registered poses (minus the gauge) and all valid points.
pub fn bundle_adjust(scene: &SfmScene, cfg: &LmConfig) -> Result<(SfmScene, LmReport), SfmError> {
    let problem = BundleProblem::new(scene)?;
    let x0 = problem.pack();
    let report = levenberg_marquardt(&problem, &x0, cfg)?;
    Ok((problem.unpack(&report.params), report))
}
