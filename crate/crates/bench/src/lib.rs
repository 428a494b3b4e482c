//! Shared fixtures for the benchmarks.

use camloc::calibration::CalibrationDataset;
use camloc::geometry::{CameraIntrinsics, CameraPose, DistortionCoeffs};
use camloc::synthetic::{
    random_board_poses, synthesize_corner_grids, webcam_distortion, webcam_intrinsics, BoardPoseRange, WEBCAM_HEIGHT, WEBCAM_WIDTH,
};
use camloc::target::CheckerboardSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct BoardFixture {
    pub spec: CheckerboardSpec,
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub poses: Vec<CameraPose>,
}

impl BoardFixture {
    /// Reference webcam viewing the standard board from `views` random poses.
    pub fn new(views: usize, seed: u64) -> Self {
        let spec = CheckerboardSpec::standard();
        let (k, d) = (webcam_intrinsics(), webcam_distortion());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses = random_board_poses(&mut rng, views, &spec, &k, &d, WEBCAM_WIDTH, WEBCAM_HEIGHT, &BoardPoseRange::default());
        Self { spec, intrinsics: k, distortion: d, poses }
    }

    /// Projected corner grids with Gaussian pixel noise `sigma`.
    pub fn dataset(&self, sigma: f64, seed: u64) -> CalibrationDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let views = synthesize_corner_grids(&mut rng, &self.spec, &self.intrinsics, &self.distortion, &self.poses, sigma);
        CalibrationDataset::new(self.spec, views, WEBCAM_WIDTH, WEBCAM_HEIGHT).expect("enough views")
    }
}
