//! `camloc` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 when processing fails.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use camloc::pose::SceneMode;
use camloc::target::CheckerboardSpec;
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "camloc", version, about = "Camera calibration, board pose and sparse reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate from a directory of checkerboard images.
    Calibrate(CalibrateArgs),
    /// Estimate the board pose in one image.
    Pose(PoseArgs),
    /// Remove lens distortion from an image.
    Undistort(UndistortArgs),
    /// Reconstruct a sparse point cloud from a directory of images.
    Sfm(SfmArgs),
    /// Render a synthetic checkerboard dataset.
    RenderBoard(RenderArgs),
    /// Render a synthetic textured-cube dataset.
    RenderScene(RenderArgs),
    /// Export camera and board placements for visualization.
    Extrinsics(ExtrinsicsArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Directory of .pgm/.ppm images.
    pub images: PathBuf,
    /// Squares across and down, and the square side, e.g. 10x7:23mm.
    #[arg(long, value_name = "WxH:SIZEmm", value_parser = parse_board)]
    pub board: CheckerboardSpec,
    /// Calibration JSON; the per-view CSV is written next to it.
    #[arg(long, default_value = "calibration.json")]
    pub out: PathBuf,
    /// Fit the skew term instead of holding it at 0.
    #[arg(long)]
    pub estimate_skew: bool,
    /// Fit the sixth-order radial term k3.
    #[arg(long)]
    pub estimate_k3: bool,
    /// Fit the tangential terms p1, p2.
    #[arg(long)]
    pub tangential: bool,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    pub image: PathBuf,
    pub calibration: PathBuf,
    /// Defaults to the board stored in the calibration file.
    #[arg(long, value_name = "WxH:SIZEmm", value_parser = parse_board)]
    pub board: Option<CheckerboardSpec>,
    /// Pose JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UndistortArgs {
    pub image: PathBuf,
    pub calibration: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SfmArgs {
    pub images: PathBuf,
    pub calibration: PathBuf,
    /// Output directory for cloud.ply and scene.json.
    #[arg(long, default_value = "reconstruction")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Match every image pair, not only neighbours in file order.
    #[arg(long)]
    pub exhaustive_pairs: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Dataset description JSON; omitted fields take defaults.
    pub spec: Option<PathBuf>,
    /// Output directory for the images and ground_truth.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the description.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExtrinsicsArgs {
    pub calibration: PathBuf,
    /// `pattern` fixes the board and places the cameras; `camera` fixes the
    /// camera and places the boards.
    #[arg(long, value_name = "pattern|camera", default_value = "pattern")]
    pub mode: SceneMode,
    /// Defaults to the board stored in the calibration file.
    #[arg(long, value_name = "WxH:SIZEmm", value_parser = parse_board)]
    pub board: Option<CheckerboardSpec>,
    /// Scene JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `10x7:23mm` is ten by seven squares of 23 mm.
pub fn parse_board(s: &str) -> Result<CheckerboardSpec, String> {
    let bad = || format!("expected WxH:SIZEmm such as 10x7:23mm, got {s:?}");
    let (dims, size) = s.split_once(':').ok_or_else(bad)?;
    let (w, h) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
    let size = size.strip_suffix("mm").unwrap_or(size);
    let w: usize = w.parse().map_err(|_| bad())?;
    let h: usize = h.parse().map_err(|_| bad())?;
    let size: f64 = size.parse().map_err(|_| bad())?;
    CheckerboardSpec::new(w, h, size).map_err(|e| e.to_string())
}

/// A processing failure: the stage, the image or file involved, and the cause.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub stage: String,
    pub subject: Option<String>,
    pub message: String,
}

impl Failure {
    pub fn new(stage: &str, subject: Option<&str>, message: impl Into<String>) -> Self {
        Self { stage: stage.into(), subject: subject.map(Into::into), message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.stage)?;
        if let Some(s) = &self.subject {
            write!(f, " [{s}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::execute(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            2
        }
    }
}
