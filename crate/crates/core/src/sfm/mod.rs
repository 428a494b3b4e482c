//! Incremental structure from motion with fixed, calibrated intrinsics.

use thiserror::Error;

mod align;
mod bundle;
mod epipolar;
mod features;
mod matching;
mod reconstruct;
mod resection;
mod scene;
mod subpixel;
mod tracks;

pub use align::{align_similarity, Similarity};
pub use bundle::{bundle_adjust, bundle_problem};

pub use epipolar::{
    decompose_essential, epipolar_residual, essential_from_pose, essential_ransac, project_essential, recover_relative_pose, sampson_distance, skew,
    triangulate_points, triangulate_views, triangulation_angle, EssentialEstimate, RansacConfig, MIN_BASELINE,
};
pub use features::{detect_features, detect_features_with, Feature, FeatureConfig, DESCRIPTOR_LEN, MIN_IMAGE_SIDE};
pub use matching::{match_features, DEFAULT_RATIO};
pub use reconstruct::{candidate_pairs, reconstruct, SfmConfig};
pub use resection::{resect, ResectionConfig};
pub use scene::{export_point_cloud, CloudPoint, ObservationResidual, PointCloud, SfmScene};
pub use tracks::{build_tracks, MatchPair, Observation, Track};

use crate::optim::OptimError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SfmError {
    #[error("image is {width}×{height}, features need at least 32×32")]
    ImageTooSmall { width: usize, height: usize },
    #[error("{found} correspondences, at least {needed} needed")]
    InsufficientMatches { found: usize, needed: usize },
    #[error("no essential matrix with at least 8 inliers (best had {inliers})")]
    NoModelFound { inliers: usize },
    #[error("no relative pose puts a majority of points in front of both cameras")]
    CheiralityAmbiguous,
    #[error("camera centers coincide")]
    ZeroBaseline,
    #[error("initialization failed: {0}")]
    InitializationFailed(String),
    #[error("view {view} could not be registered: {reason}")]
    RegistrationFailed { view: usize, reason: String },
    #[error("scene has no valid triangulated points")]
    EmptyScene,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("optimization failed: {0}")]
    Optim(#[from] OptimError),
}
