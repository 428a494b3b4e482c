use std::fmt::{Debug, Display, Write as _};
use std::fs;
use std::path::Path;

use camloc::calibration::{calibrate_with, undistort_image, CalibrationDataset, CalibrationOptions, CalibrationResult};
use camloc::image::GrayImage;
use camloc::io::{
    image_files, read_image, read_json, to_json_string, write_image, write_json, write_ply, BoardRenderSpec, CalibrationFile, CubeRenderSpec,
    IoError, PoseFile, SceneFile,
};
use camloc::pose::{estimate_board_pose, export_extrinsics_scene};
use camloc::sfm::{export_point_cloud, reconstruct, SfmConfig, SfmError};
use camloc::target::{detect_corners, CheckerboardSpec};

use crate::{CalibrateArgs, Command, ExtrinsicsArgs, Failure, PoseArgs, RenderArgs, SfmArgs, UndistortArgs};

/// `Variant: message` for a library error.
fn describe<E: Debug + Display>(e: &E) -> String {
    let debug = format!("{e:?}");
    let variant: String = debug.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    format!("{variant}: {e}")
}

fn io_failure(stage: &str, path: &Path, e: IoError) -> Failure {
    Failure::new(stage, Some(&path.display().to_string()), describe(&e))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub(crate) fn execute(cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::Calibrate(a) => calibrate(a),
        Command::Pose(a) => pose(a),
        Command::Undistort(a) => undistort(a),
        Command::Sfm(a) => sfm(a),
        Command::RenderBoard(a) => render_board(a),
        Command::RenderScene(a) => render_scene(a),
        Command::Extrinsics(a) => extrinsics(a),
    }
}

fn load_calibration(path: &Path) -> Result<(CalibrationFile, CalibrationResult), Failure> {
    let file = CalibrationFile::load(path).map_err(|e| io_failure("read calibration", path, e))?;
    let result = file.to_result().map_err(|e| io_failure("read calibration", path, e))?;
    Ok((file, result))
}

fn board_for(stage: &str, flag: Option<CheckerboardSpec>, file: &CalibrationFile, path: &Path) -> Result<CheckerboardSpec, Failure> {
    match (flag, file.board) {
        (Some(b), _) => Ok(b),
        (None, Some(b)) => b.spec().map_err(|e| io_failure(stage, path, e)),
        (None, None) => Err(Failure::new(stage, Some(&path.display().to_string()), "calibration file names no board; pass --board")),
    }
}

fn check_size(stage: &str, name: &str, img: &GrayImage, r: &CalibrationResult) -> Result<(), Failure> {
    if (img.width(), img.height()) != (r.image_width, r.image_height) {
        let msg = format!("image is {}×{}, calibration is for {}×{}", img.width(), img.height(), r.image_width, r.image_height);
        return Err(Failure::new(stage, Some(name), msg));
    }
    Ok(())
}

fn write_text(stage: &str, out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::new(stage, Some(&p.display().to_string()), e.to_string())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn calibrate(a: &CalibrateArgs) -> Result<(), Failure> {
    let files = image_files(&a.images).map_err(|e| io_failure("list images", &a.images, e))?;
    let mut views = Vec::new();
    let mut names = Vec::new();
    let mut size: Option<(usize, usize)> = None;
    for path in &files {
        let name = file_name(path);
        let img = read_image(path).map_err(|e| io_failure("read image", path, e))?;
        let dims = (img.width(), img.height());
        if let Some(first) = size.filter(|&s| s != dims) {
            return Err(Failure::new(
                "read image",
                Some(&name),
                format!("image is {}×{}, earlier images are {}×{}", dims.0, dims.1, first.0, first.1),
            ));
        }
        size = Some(dims);
        match detect_corners(&img, &a.board) {
            Ok(mut grid) => {
                grid.view_id = views.len();
                views.push(grid);
                names.push(name);
            }
            Err(e) => eprintln!("warning: detect corners [{name}]: {}; view skipped", describe(&e)),
        }
    }
    let (w, h) = size.unwrap_or((0, 0));
    let dataset = CalibrationDataset::new(a.board, views, w, h).map_err(|e| Failure::new("calibrate", None, describe(&e)))?;
    let opts =
        CalibrationOptions { estimate_skew: a.estimate_skew, estimate_k3: a.estimate_k3, tangential: a.tangential, ..CalibrationOptions::default() };
    let result = calibrate_with(&dataset, &opts).map_err(|e| Failure::new("calibrate", None, describe(&e)))?;
    CalibrationFile::from_result(&result).with_board(&a.board).save(&a.out).map_err(|e| io_failure("write calibration", &a.out, e))?;
    let mut csv = String::from("view,image,corners,mean_error_px\n");
    for (i, (name, err)) in names.iter().zip(&result.per_view_errors).enumerate() {
        writeln!(csv, "{i},{name},{},{err:.9}", a.board.corner_count()).expect("write to string");
    }
    let csv_path = a.out.with_extension("csv");
    write_text("write per-view errors", Some(&csv_path), &csv)?;
    let k = &result.intrinsics;
    println!(
        "calibrated {} of {} images: fx {:.4} fy {:.4} cx {:.4} cy {:.4} k1 {:.6} k2 {:.6}, mean error {:.6} px",
        names.len(),
        files.len(),
        k.fx,
        k.fy,
        k.cx,
        k.cy,
        result.distortion.k1,
        result.distortion.k2,
        result.mean_error
    );
    Ok(())
}

fn pose(a: &PoseArgs) -> Result<(), Failure> {
    let (file, result) = load_calibration(&a.calibration)?;
    let board = board_for("pose", a.board, &file, &a.calibration)?;
    let name = file_name(&a.image);
    let img = read_image(&a.image).map_err(|e| io_failure("read image", &a.image, e))?;
    check_size("pose", &name, &img, &result)?;
    let grid = detect_corners(&img, &board).map_err(|e| Failure::new("detect corners", Some(&name), describe(&e)))?;
    let bp = estimate_board_pose(&result.intrinsics, &result.distortion, &grid, &board)
        .map_err(|e| Failure::new("estimate pose", Some(&name), describe(&e)))?;
    let pose = PoseFile::new(&name, &bp.pose, bp.mean_error);
    match &a.out {
        Some(out) => write_json(&pose, out).map_err(|e| io_failure("write pose", out, e)),
        None => write_text("write pose", None, &to_json_string(&pose)),
    }
}

fn undistort(a: &UndistortArgs) -> Result<(), Failure> {
    let (_, result) = load_calibration(&a.calibration)?;
    let name = file_name(&a.image);
    let img = read_image(&a.image).map_err(|e| io_failure("read image", &a.image, e))?;
    check_size("undistort", &name, &img, &result)?;
    let out = undistort_image(&img, &result.intrinsics, &result.distortion);
    write_image(&out, &a.out).map_err(|e| io_failure("write image", &a.out, e))
}

fn sfm(a: &SfmArgs) -> Result<(), Failure> {
    let (_, calib) = load_calibration(&a.calibration)?;
    let files = image_files(&a.images).map_err(|e| io_failure("list images", &a.images, e))?;
    let names: Vec<String> = files.iter().map(|p| file_name(p)).collect();
    let mut images = Vec::with_capacity(files.len());
    for (path, name) in files.iter().zip(&names) {
        let img = read_image(path).map_err(|e| io_failure("read image", path, e))?;
        check_size("sfm", name, &img, &calib)?;
        images.push(img);
    }
    let cfg = SfmConfig { seed: a.seed, exhaustive_pairs: a.exhaustive_pairs, ..SfmConfig::default() };
    let scene = reconstruct(&images, &calib.intrinsics, &calib.distortion, &cfg).map_err(|e| {
        let subject = match &e {
            SfmError::RegistrationFailed { view, .. } => names.get(*view).map(String::as_str),
            _ => None,
        };
        Failure::new("reconstruct", subject, describe(&e))
    })?;
    let cloud = export_point_cloud(&scene).map_err(|e| Failure::new("export cloud", None, describe(&e)))?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::new("write reconstruction", Some(&a.out.display().to_string()), e.to_string()))?;
    let ply = a.out.join("cloud.ply");
    write_ply(&cloud, &ply).map_err(|e| io_failure("write cloud", &ply, e))?;
    let summary = SceneFile::new(&scene, &names, "cloud.ply");
    let json = a.out.join("scene.json");
    write_json(&summary, &json).map_err(|e| io_failure("write scene", &json, e))?;
    println!(
        "registered {} of {} views, {} points, mean reprojection error {:.4} px",
        scene.registered_views().len(),
        images.len(),
        cloud.points.len(),
        summary.mean_reprojection_error
    );
    Ok(())
}

fn render_board(a: &RenderArgs) -> Result<(), Failure> {
    let mut spec: BoardRenderSpec = match &a.spec {
        Some(p) => read_json(p).map_err(|e| io_failure("read render spec", p, e))?,
        None => BoardRenderSpec::default(),
    };
    spec.seed = a.seed.unwrap_or(spec.seed);
    let data = spec.render().map_err(|e| Failure::new("render", None, describe(&e)))?;
    data.write(&a.out).map_err(|e| io_failure("write dataset", &a.out, e))?;
    println!("rendered {} board views into {}", data.images.len(), a.out.display());
    Ok(())
}

fn render_scene(a: &RenderArgs) -> Result<(), Failure> {
    let mut spec: CubeRenderSpec = match &a.spec {
        Some(p) => read_json(p).map_err(|e| io_failure("read render spec", p, e))?,
        None => CubeRenderSpec::default(),
    };
    spec.seed = a.seed.unwrap_or(spec.seed);
    let data = spec.render().map_err(|e| Failure::new("render", None, describe(&e)))?;
    data.write(&a.out).map_err(|e| io_failure("write dataset", &a.out, e))?;
    println!("rendered {} cube views into {}", data.images.len(), a.out.display());
    Ok(())
}

fn extrinsics(a: &ExtrinsicsArgs) -> Result<(), Failure> {
    let (file, result) = load_calibration(&a.calibration)?;
    let board = board_for("extrinsics", a.board, &file, &a.calibration)?;
    let scene = export_extrinsics_scene(&result, &board, a.mode);
    match &a.out {
        Some(out) => write_json(&scene, out).map_err(|e| io_failure("write extrinsics", out, e)),
        None => write_text("write extrinsics", None, &to_json_string(&scene)),
    }
}
