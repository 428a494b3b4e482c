//! Planar-target calibration: homographies, closed-form initialization,
//! joint refinement and reprojection statistics.

mod homography;
mod refine;
mod undistort;
mod zhang;

pub use homography::{estimate_homography, Homography, MAX_CONDITION};
pub use undistort::undistort_image;
pub use zhang::{extrinsics_from_homography, init_intrinsics, init_intrinsics_with};

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::geometry::{project, CameraIntrinsics, CameraPose, DistortionCoeffs, GeometryError, PixelPoint, WorldPoint};
use crate::optim::{levenberg_marquardt, LmConfig, NlsProblem, OptimError};
use crate::target::{board_world_points, CheckerboardSpec, CornerGrid};
use refine::{CalibrationProblem, Layout};

/// Minimum number of views `calibrate` accepts.
pub const MIN_VIEWS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("degenerate board motion: {0}")]
    DegenerateMotion(String),
    #[error("intrinsics are not invertible")]
    SingularIntrinsics,
    #[error("{views} views supplied, at least {needed} required")]
    InsufficientViews { views: usize, needed: usize },
    #[error("view {view} has {found} corners, expected {expected}")]
    IncompleteView { view: usize, found: usize, expected: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("view {view}: board is behind the camera")]
    BehindCamera { view: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("refinement failed: {0}")]
    Optim(#[from] OptimError),
}

/// Detected corner grids of one camera plus the image size they came from.
#[derive(Debug, Clone)]
pub struct CalibrationDataset {
    pub spec: CheckerboardSpec,
    pub views: Vec<CornerGrid>,
    pub image_width: usize,
    pub image_height: usize,
}

impl CalibrationDataset {
    pub fn new(spec: CheckerboardSpec, views: Vec<CornerGrid>, image_width: usize, image_height: usize) -> Result<Self, CalibrationError> {
        let ds = Self { spec, views, image_width, image_height };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.views.len() < MIN_VIEWS {
            return Err(CalibrationError::InsufficientViews { views: self.views.len(), needed: MIN_VIEWS });
        }
        for (idx, v) in self.views.iter().enumerate() {
            if !v.matches(&self.spec) {
                return Err(CalibrationError::IncompleteView { view: idx, found: v.corners.len(), expected: self.spec.corner_count() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationOptions {
    pub estimate_skew: bool,
    pub estimate_k3: bool,
    pub tangential: bool,
    pub lm: LmConfig,
}

/// One-sigma parameter uncertainties. Parameters held fixed report 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StandardErrors {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
    /// Per view, axis-angle components (radians).
    pub rotations: Vec<[f64; 3]>,
    /// Per view, translation components (board units).
    pub translations: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub poses: Vec<CameraPose>,
    pub per_view_errors: Vec<f64>,
    /// Corner-weighted mean Euclidean reprojection error in pixels.
    pub mean_error: f64,
    pub standard_errors: StandardErrors,
    pub image_width: usize,
    pub image_height: usize,
    /// ½Σr² at the closed-form initialization and after refinement.
    pub initial_cost: f64,
    pub final_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReprojectionStats {
    pub per_view: Vec<f64>,
    pub overall: f64,
    /// Observed minus predicted, per view and corner.
    pub residuals: Vec<Vec<Vector2<f64>>>,
}

pub fn calibrate(dataset: &CalibrationDataset) -> Result<CalibrationResult, CalibrationError> {
    calibrate_with(dataset, &CalibrationOptions::default())
}

pub fn calibrate_with(dataset: &CalibrationDataset, opts: &CalibrationOptions) -> Result<CalibrationResult, CalibrationError> {
    dataset.validate()?;
    let world = board_world_points(&dataset.spec);
    let plane: Vec<Vector2<f64>> = world.iter().map(|p| Vector2::new(p.x, p.y)).collect();

    let homographies = dataset.views.iter().map(|v| estimate_homography(&plane, &v.corners)).collect::<Result<Vec<_>, _>>()?;
    let k0 = init_intrinsics_with(&homographies, opts.estimate_skew)?;
    let poses0: Vec<CameraPose> = homographies.iter().map(|h| extrinsics_from_homography(&k0, h)).collect::<Result<_, _>>()?;
    let d0 = init_radial(&k0, &poses0, &world, &dataset.views, opts.estimate_k3);

    let layout = Layout { skew: opts.estimate_skew, k3: opts.estimate_k3, tangential: opts.tangential, views: dataset.views.len() };
    let problem = CalibrationProblem { layout, world: &world, views: &dataset.views };
    let x0 = layout.pack(&k0, &d0, &poses0);
    let report = levenberg_marquardt(&problem, &x0, &opts.lm)?;
    let (k, d, poses) = layout.unpack(&report.params).ok_or(CalibrationError::SingularIntrinsics)?;
    for (view, pose) in poses.iter().enumerate() {
        if world.iter().any(|p| pose.transform(&p.to_vector()).z <= 0.0) {
            return Err(CalibrationError::BehindCamera { view });
        }
    }

    let standard_errors = standard_errors(&problem, &report.params, report.final_cost);
    let mut result = CalibrationResult {
        intrinsics: k,
        distortion: d,
        poses,
        per_view_errors: Vec::new(),
        mean_error: 0.0,
        standard_errors,
        image_width: dataset.image_width,
        image_height: dataset.image_height,
        initial_cost: report.initial_cost,
        final_cost: report.final_cost,
    };
    let stats = reprojection_stats(&result, dataset)?;
    result.per_view_errors = stats.per_view;
    result.mean_error = stats.overall;
    Ok(result)
}

/// The joint reprojection problem `calibrate_with` refines, with the free
/// parameters chosen by `opts`, and the parameter vector of `(k, d, poses)`.
pub fn calibration_problem<'a>(
    world: &'a [WorldPoint],
    views: &'a [CornerGrid],
    opts: &CalibrationOptions,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
    poses: &[CameraPose],
) -> Result<(impl NlsProblem + 'a, DVector<f64>), CalibrationError> {
    if poses.len() != views.len() || views.iter().any(|v| v.corners.len() != world.len()) {
        return Err(CalibrationError::ShapeMismatch(format!("{} poses, {} views, {} board points", poses.len(), views.len(), world.len())));
    }
    let layout = Layout { skew: opts.estimate_skew, k3: opts.estimate_k3, tangential: opts.tangential, views: views.len() };
    Ok((CalibrationProblem { layout, world, views }, layout.pack(k, d, poses)))
}

/// Linear fit of the radial terms to the pinhole-model residuals.
fn init_radial(k: &CameraIntrinsics, poses: &[CameraPose], world: &[WorldPoint], views: &[CornerGrid], k3: bool) -> DistortionCoeffs {
    let terms = if k3 { 3 } else { 2 };
    let mut ata = DMatrix::<f64>::zeros(terms, terms);
    let mut atb = DVector::<f64>::zeros(terms);
    for (pose, view) in poses.iter().zip(views) {
        for (w, obs) in world.iter().zip(&view.corners) {
            let pc = pose.transform(&w.to_vector());
            if pc.z <= 0.0 {
                continue;
            }
            let (x, y) = (pc.x / pc.z, pc.y / pc.z);
            let ideal = k.normalized_to_pixel(crate::geometry::NormalizedPoint::new(x, y));
            let r2 = x * x + y * y;
            let (du, dv) = (ideal.u - k.cx, ideal.v - k.cy);
            for (offset, target) in [(du, obs.u - ideal.u), (dv, obs.v - ideal.v)] {
                let row: Vec<f64> = (1..=terms).map(|p| offset * r2.powi(p as i32)).collect();
                for a in 0..terms {
                    atb[a] += row[a] * target;
                    for b in 0..terms {
                        ata[(a, b)] += row[a] * row[b];
                    }
                }
            }
        }
    }
    let sol = ata.cholesky().map(|c| c.solve(&atb)).unwrap_or_else(|| DVector::zeros(terms));
    let mut d = DistortionCoeffs::radial(sol[0], sol[1]);
    if k3 {
        d.k3 = Some(sol[2]);
    }
    d
}

/// `sqrt(diag(σ² (JᵀJ)⁻¹))` with `σ² = 2·cost / (m − n)`.
fn standard_errors(problem: &CalibrationProblem<'_>, x: &DVector<f64>, final_cost: f64) -> StandardErrors {
    let layout = problem.layout;
    let (m, n) = (problem.num_residuals(), problem.num_params());
    let jac = problem.jacobian(x).expect("analytic Jacobian");
    let jtj = jac.tr_mul(&jac);
    let cov_diag: Vec<f64> = match jtj.clone().cholesky() {
        Some(c) => {
            let inv = c.inverse();
            (0..n).map(|i| inv[(i, i)]).collect()
        }
        None => vec![f64::NAN; n],
    };
    let sigma2 = if m > n { 2.0 * final_cost / (m - n) as f64 } else { f64::NAN };
    let se: Vec<f64> = cov_diag.iter().map(|c| (sigma2 * c).max(0.0).sqrt()).collect();
    layout.errors(&se)
}

/// Per-corner Euclidean reprojection errors aggregated per view and overall.
pub fn reprojection_stats(result: &CalibrationResult, dataset: &CalibrationDataset) -> Result<ReprojectionStats, CalibrationError> {
    if result.poses.len() != dataset.views.len() {
        return Err(CalibrationError::ShapeMismatch(format!("{} poses for {} views", result.poses.len(), dataset.views.len())));
    }
    let world = board_world_points(&dataset.spec);
    let mut per_view = Vec::with_capacity(dataset.views.len());
    let mut residuals = Vec::with_capacity(dataset.views.len());
    let (mut total, mut count) = (0.0, 0usize);
    for (view, (pose, grid)) in result.poses.iter().zip(&dataset.views).enumerate() {
        if grid.corners.len() != world.len() {
            return Err(CalibrationError::ShapeMismatch(format!("view {view} has {} corners, board has {}", grid.corners.len(), world.len())));
        }
        let mut res = Vec::with_capacity(world.len());
        let mut sum = 0.0;
        for (w, obs) in world.iter().zip(&grid.corners) {
            let pred = project(w, pose, &result.intrinsics, &result.distortion).map_err(|_| CalibrationError::BehindCamera { view })?;
            let r = Vector2::new(obs.u - pred.u, obs.v - pred.v);
            sum += r.norm();
            res.push(r);
        }
        total += sum;
        count += res.len();
        per_view.push(if res.is_empty() { 0.0 } else { sum / res.len() as f64 });
        residuals.push(res);
    }
    let overall = if count == 0 { 0.0 } else { total / count as f64 };
    Ok(ReprojectionStats { per_view, overall, residuals })
}

/// Mean of per-corner errors for a single set of observations.
pub fn mean_reprojection_error(
    world: &[WorldPoint],
    observed: &[PixelPoint],
    pose: &CameraPose,
    k: &CameraIntrinsics,
    d: &DistortionCoeffs,
) -> Result<f64, GeometryError> {
    let mut sum = 0.0;
    for (w, obs) in world.iter().zip(observed) {
        sum += project(w, pose, k, d)?.distance(*obs);
    }
    Ok(if observed.is_empty() { 0.0 } else { sum / observed.len() as f64 })
}
