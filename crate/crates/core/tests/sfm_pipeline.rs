use camloc::sfm::{export_point_cloud, reconstruct, SfmConfig, SfmError};
use camloc::synthetic::CubeScene;

#[test]
fn textured_cube_is_reconstructed_to_scale() {
    let truth = CubeScene::standard(0);
    let images = truth.render();
    let scene = reconstruct(&images, &truth.intrinsics, &truth.distortion, &SfmConfig::default()).unwrap();
    assert_eq!(scene.registered_views(), vec![0, 1, 2, 3, 4]);
    let mean = scene.mean_reprojection_error();
    assert!(mean < 0.5, "mean reprojection {mean}");
    let edge = truth.cube.edge();
    let eval = truth.evaluate(&scene, 0.02 * edge).unwrap();
    assert!(eval.points >= 100, "{} points", eval.points);
    assert!(eval.rms < 0.01 * edge, "rms {} mm", eval.rms);
    assert!(eval.face_fraction >= 0.9, "face fraction {}", eval.face_fraction);

    let cloud = export_point_cloud(&scene).unwrap();
    assert_eq!(cloud.points.len(), scene.valid_track_count());

    let again = reconstruct(&images, &truth.intrinsics, &truth.distortion, &SfmConfig::default()).unwrap();
    assert_eq!(again, scene);
}

#[test]
fn repeated_image_cannot_initialize() {
    let truth = CubeScene::standard(1);
    let image = truth.render().swap_remove(0);
    let err = reconstruct(&[image.clone(), image], &truth.intrinsics, &truth.distortion, &SfmConfig::default()).unwrap_err();
    assert!(matches!(err, SfmError::InitializationFailed(_)), "{err}");
}

#[test]
fn one_image_is_rejected() {
    let truth = CubeScene::standard(1);
    let image = truth.render().swap_remove(0);
    assert!(matches!(reconstruct(&[image], &truth.intrinsics, &truth.distortion, &SfmConfig::default()), Err(SfmError::InvalidInput(_))));
}
