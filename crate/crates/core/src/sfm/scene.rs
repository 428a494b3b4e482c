use nalgebra::Vector2;

use super::{SfmError, Track};
use crate::geometry::{project, CameraIntrinsics, CameraPose, DistortionCoeffs, PixelPoint, WorldPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct SfmScene {
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    /// `None` for views that are not registered.
    pub poses: Vec<Option<CameraPose>>,
    /// Feature positions per view.
    pub keypoints: Vec<Vec<PixelPoint>>,
    /// Image intensity at each keypoint.
    pub intensities: Vec<Vec<f64>>,
    pub tracks: Vec<Track>,
    /// `(reference, scale)`: the reference pose is held fixed and the
    /// translation norm of the scale view is preserved by bundle adjustment.
    pub gauge: (usize, usize),
}

/// Reprojection residual `projected − observed` of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationResidual {
    pub track: usize,
    pub view: usize,
    pub residual: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: WorldPoint,
    pub intensity: u8,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl SfmScene {
    pub fn registered_views(&self) -> Vec<usize> {
        (0..self.poses.len()).filter(|&v| self.poses[v].is_some()).collect()
    }

    /// Observations of `track` in registered views: `(view, pose, pixel)`.
    pub fn registered_observations(&self, track: &Track) -> Vec<(usize, CameraPose, PixelPoint)> {
        track.observations.iter().filter_map(|&(v, f)| self.poses.get(v).copied().flatten().map(|p| (v, p, self.keypoints[v][f]))).collect()
    }

    /// Triangulated and in front of every registered camera that observes it.
    pub fn is_valid(&self, track: &Track) -> bool {
        let Some(p) = track.point else { return false };
        let obs = self.registered_observations(track);
        obs.len() >= 2 && obs.iter().all(|(_, pose, _)| pose.transform(&p.to_vector()).z > 0.0)
    }

    pub fn valid_track_count(&self) -> usize {
        self.tracks.iter().filter(|t| self.is_valid(t)).count()
    }

    pub fn residuals(&self) -> Vec<ObservationResidual> {
        let mut out = Vec::new();
        for (i, t) in self.tracks.iter().enumerate() {
            if !self.is_valid(t) {
                continue;
            }
            let p = t.point.expect("valid tracks are triangulated");
            for (view, pose, px) in self.registered_observations(t) {
                if let Ok(q) = project(&p, &pose, &self.intrinsics, &self.distortion) {
                    out.push(ObservationResidual { track: i, view, residual: Vector2::new(q.u - px.u, q.v - px.v) });
                }
            }
        }
        out
    }

    /// Mean Euclidean reprojection error over all observations of valid tracks.
    pub fn mean_reprojection_error(&self) -> f64 {
        let r = self.residuals();
        if r.is_empty() {
            return 0.0;
        }
        r.iter().map(|o| o.residual.norm()).sum::<f64>() / r.len() as f64
    }
}

/// One point per valid track, shaded by the mean intensity of its observations.
pub fn export_point_cloud(scene: &SfmScene) -> Result<PointCloud, SfmError> {
    let points: Vec<CloudPoint> = scene
        .tracks
        .iter()
        .filter(|t| scene.is_valid(t))
        .map(|t| {
            let obs: Vec<f64> = t.observations.iter().filter(|o| scene.poses[o.0].is_some()).map(|&(v, f)| scene.intensities[v][f]).collect();
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            CloudPoint { position: t.point.expect("valid"), intensity: mean.round().clamp(0.0, 255.0) as u8 }
        })
        .collect();
    if points.is_empty() {
        return Err(SfmError::EmptyScene);
    }
    Ok(PointCloud { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn two_view_scene(points: &[[f64; 3]], shades: &[(f64, f64)]) -> SfmScene {
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let poses = [CameraPose::identity(), CameraPose::new(nalgebra::Matrix3::identity(), Vector3::new(-1.0, 0.0, 0.0)).unwrap()];
        let mut keypoints = vec![Vec::new(), Vec::new()];
        let mut intensities = vec![Vec::new(), Vec::new()];
        let mut tracks = Vec::new();
        for (p, &(a, b)) in points.iter().zip(shades) {
            let w = WorldPoint::new(p[0], p[1], p[2]);
            let mut observations = Vec::new();
            for (v, shade) in [(0, a), (1, b)] {
                observations.push((v, keypoints[v].len()));
                keypoints[v].push(project(&w, &poses[v], &k, &DistortionCoeffs::none()).unwrap());
                intensities[v].push(shade);
            }
            tracks.push(Track { observations, point: Some(w) });
        }
        SfmScene {
            intrinsics: k,
            distortion: DistortionCoeffs::none(),
            poses: poses.map(Some).to_vec(),
            keypoints,
            intensities,
            tracks,
            gauge: (0, 1),
        }
    }

    #[test]
    fn cloud_averages_observation_intensities() {
        let scene = two_view_scene(&[[1.0, 2.0, 3.0]], &[(100.0, 200.0)]);
        let cloud = export_point_cloud(&scene).unwrap();
        assert_eq!(cloud.points, vec![CloudPoint { position: WorldPoint::new(1.0, 2.0, 3.0), intensity: 150 }]);
        assert_eq!(scene.mean_reprojection_error(), 0.0);
    }

    #[test]
    fn cloud_has_one_point_per_valid_track() {
        let mut scene = two_view_scene(&[[0.0, 0.0, 4.0], [0.5, 0.1, 6.0], [-0.3, 0.2, 5.0]], &[(10.0, 10.0); 3]);
        scene.tracks[1].point = None;
        assert_eq!(scene.valid_track_count(), 2);
        assert_eq!(export_point_cloud(&scene).unwrap().points.len(), 2);
        assert_eq!(scene.residuals().len(), 4);
    }

    #[test]
    fn points_behind_a_camera_are_invalid() {
        let mut scene = two_view_scene(&[[0.0, 0.0, 4.0]], &[(0.0, 0.0)]);
        scene.tracks[0].point = Some(WorldPoint::new(0.0, 0.0, -4.0));
        assert!(!scene.is_valid(&scene.tracks[0]));
        assert_eq!(export_point_cloud(&scene), Err(SfmError::EmptyScene));
    }

    #[test]
    fn unregistered_views_do_not_count() {
        let mut scene = two_view_scene(&[[0.0, 0.0, 4.0]], &[(0.0, 0.0)]);
        scene.poses[1] = None;
        assert_eq!(scene.registered_views(), vec![0]);
        assert_eq!(scene.valid_track_count(), 0);
    }
}
