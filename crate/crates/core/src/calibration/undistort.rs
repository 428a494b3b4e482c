use crate::geometry::{distort_normalized, CameraIntrinsics, DistortionCoeffs, PixelPoint};
use crate::image::GrayImage;

/// Resamples `img` onto the ideal pinhole image of the same camera.
/// Output pixels whose source falls outside `img` are 0.
pub fn undistort_image(img: &GrayImage, k: &CameraIntrinsics, d: &DistortionCoeffs) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = GrayImage::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            let n = k.pixel_to_normalized(PixelPoint::new(x as f64, y as f64));
            let src = k.normalized_to_pixel(distort_normalized(n, d));
            if let Some(val) = img.sample_bilinear(src.u, src.v) {
                out.set(x, y, val.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn webcam_k() -> CameraIntrinsics {
        CameraIntrinsics::new(839.3458, 839.5573, 332.3661, 259.5099).unwrap()
    }

    fn gradient_image() -> GrayImage {
        let data = (0..48 * 64).map(|i| ((i % 64) * 3 + (i / 64) * 2) as u8).collect();
        GrayImage::new(64, 48, data).unwrap()
    }

    #[test]
    fn zero_distortion_is_identity() {
        let img = gradient_image();
        let k = CameraIntrinsics::new(80.0, 80.0, 31.5, 23.5).unwrap();
        let out = undistort_image(&img, &k, &DistortionCoeffs::none());
        assert!(img.data().iter().zip(out.data()).all(|(a, b)| a.abs_diff(*b) <= 1));
        let twice = undistort_image(&out, &k, &DistortionCoeffs::none());
        assert!(twice.data().iter().zip(out.data()).all(|(a, b)| a.abs_diff(*b) <= 1));
    }

    #[test]
    fn barrel_distortion_leaves_corners_empty() {
        let img = GrayImage::filled(640, 480, 200);
        let out = undistort_image(&img, &webcam_k(), &DistortionCoeffs::radial(0.0, -0.9));
        assert_eq!(out.get(320, 260), 200);
        assert_eq!(out.get(0, 0), 200);
        let out = undistort_image(&img, &webcam_k(), &DistortionCoeffs::radial(0.9, 0.0));
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(332, 259), 200);
    }
}
