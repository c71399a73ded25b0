//! Command-line grammar.
//!
//! Every subcommand struct is also serializable: the resolved command is what
//! a run manifest stores and what `rerun` executes again.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pcl_core::lifting::Preprocessing;
use pcl_core::synthetic::Placement;
use pcl_core::{BackRotation, FocalOption};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "pcl", version, about = "Perspective crop layers: warps, synthetic data and lifting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Two comma-separated numbers, e.g. `0.5,0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pair(pub [f64; 2]);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(format!("expected two comma-separated numbers, got '{s}'"));
        }
        let mut v = [0.0; 2];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .parse::<f64>()
                .map_err(|_| format!("'{part}' is not a number"))?;
            if !slot.is_finite() {
                return Err(format!("'{part}' is not finite"));
            }
        }
        Ok(Pair(v))
    }
}

/// Output size as `HxW` or a single number for square outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Size {
    pub height: usize,
    pub width: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| -> Result<usize, String> {
            match t.trim().parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("'{t}' is not a positive integer")),
                Ok(n) => Ok(n),
            }
        };
        match s.split_once(['x', 'X']) {
            Some((h, w)) => Ok(Size {
                height: parse(h)?,
                width: parse(w)?,
            }),
            None => {
                let n = parse(s)?;
                Ok(Size { height: n, width: n })
            }
        }
    }
}

fn focal_option(s: &str) -> Result<FocalOption, String> {
    s.parse().map_err(|e: pcl_core::Error| e.to_string())
}

fn back_rotation(s: &str) -> Result<BackRotation, String> {
    s.parse().map_err(|e: pcl_core::Error| e.to_string())
}

fn placement(s: &str) -> Result<Placement, String> {
    s.parse().map_err(|e: pcl_core::Error| e.to_string())
}

fn preprocessing(s: &str) -> Result<Preprocessing, String> {
    s.parse().map_err(|e: pcl_core::Error| e.to_string())
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a positive number")),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a non-negative number")),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("'{s}' is not a positive integer")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Root,
    Centroid,
}

impl From<Anchor> for pcl_core::CropAnchor {
    fn from(a: Anchor) -> Self {
        match a {
            Anchor::Root => pcl_core::CropAnchor::Root,
            Anchor::Centroid => pcl_core::CropAnchor::Centroid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Figure,
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Figures,
    Cubes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Subcommand)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Re-render an image as seen by a virtual camera aimed at a target.
    WarpImage(WarpImageArgs),
    /// Warp 2D poses (pose JSONL) into per-pose virtual cameras.
    WarpKeypoints(WarpKeypointsArgs),
    /// Warp a pose sequence through the camera aimed at its middle frame.
    WarpSequence(WarpSequenceArgs),
    /// Generate a synthetic figure or cube dataset.
    Gen(GenArgs),
    /// Train a 2D-to-3D lifting network.
    Train(TrainArgs),
    /// Evaluate a model; writes per-sample errors as CSV.
    Eval(EvalArgs),
    /// Evaluate models with the test camera's focal length scaled.
    SweepFocal(SweepFocalArgs),
    /// Train PCL models at several widths against an RC model at the widest.
    SweepCapacity(SweepCapacityArgs),
    /// Score an RC model after partial or full back-rotation.
    AblateRotation(AblateRotationArgs),
    /// MPJPE binned by distance of the root from the image center.
    BinErrors(BinErrorsArgs),
    /// Check analytic Jacobians against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Measure patch-center pixel scales for focal options A, B and C.
    CompareFocalOptions(CompareFocalArgs),
    /// Run the multi-seed figure or cube study and write a JSON report.
    Study(StudyArgs),
    /// Re-execute a run from its manifest and verify the outputs byte for byte.
    #[serde(skip)]
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct WarpImageArgs {
    /// Camera intrinsics JSON.
    #[arg(long)]
    pub camera: PathBuf,
    /// Crop center in normalized image coordinates (pixels with --pixels).
    #[arg(long)]
    pub p: Pair,
    /// Crop size as a fraction of the image (pixels with --pixels).
    #[arg(long)]
    pub s: Pair,
    #[arg(long, default_value = "C", value_parser = focal_option)]
    pub option: FocalOption,
    /// Interpret --p and --s in pixels of the input image.
    #[arg(long)]
    pub pixels: bool,
    /// Use the smaller virtual focal length on both axes.
    #[arg(long)]
    pub preserve_aspect: bool,
    /// Output size (`HxW`); defaults to the input size.
    #[arg(long)]
    pub size: Option<Size>,
    /// Input P5/P6 image.
    pub input: PathBuf,
    /// Output P5/P6 image.
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct CropFlags {
    #[arg(long, default_value = "C", value_parser = focal_option)]
    pub option: FocalOption,
    #[arg(long, value_enum, default_value = "root")]
    pub anchor: Anchor,
    /// Relative padding of the keypoint bounding box.
    #[arg(long, default_value_t = pcl_core::pcl::DEFAULT_MARGIN, value_parser = non_negative_f64)]
    pub margin: f64,
    #[arg(long)]
    pub preserve_aspect: bool,
    /// Input keypoints are in pixels of the camera image.
    #[arg(long)]
    pub pixels: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct WarpKeypointsArgs {
    #[arg(long)]
    pub camera: PathBuf,
    /// Pose JSONL input.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// JSONL output, one crop record per pose.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub crop: CropFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct WarpSequenceArgs {
    #[arg(long)]
    pub camera: PathBuf,
    /// Pose JSONL input, one frame per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// JSON output with the shared camera and all warped frames.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub crop: CropFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long, value_parser = placement)]
    pub placement: Placement,
    #[arg(long, value_parser = positive_usize)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub camera: PathBuf,
    /// Directory for one rendered P6 image per cube sample.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Supersampling factor for rendered images.
    #[arg(long, default_value_t = 4, value_parser = positive_usize)]
    pub supersample: usize,
    /// Pose JSONL output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Training configuration JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training pose JSONL with 3D joints.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = preprocessing)]
    pub preprocessing: Option<Preprocessing>,
    /// Optional CSV of per-epoch train and validation loss.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Test pose JSONL with 3D joints.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    /// Scale the test camera's focal length before preprocessing.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub focal_multiplier: f64,
    /// Post-hoc rotation of RC predictions.
    #[arg(long, default_value = "none", value_parser = back_rotation)]
    pub rotation: BackRotation,
    /// Per-sample CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON summary (MPJPE, PCK).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SweepFocalArgs {
    /// Model JSON; repeat to compare models.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,1,1.5,2", value_parser = positive_f64)]
    pub multipliers: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SweepCapacityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "64,128,256", value_parser = positive_usize)]
    pub widths: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct AblateRotationArgs {
    /// RC-trained model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Optional PCL-trained model for the reference row.
    #[arg(long)]
    pub pcl_model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct BinErrorsArgs {
    /// Model JSON; repeat to compare models.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long, default_value_t = 6, value_parser = positive_usize)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random geometry configurations per Jacobian.
    #[arg(long, default_value_t = 20, value_parser = positive_usize)]
    pub configs: usize,
    /// Optional CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct CompareFocalArgs {
    /// Camera intrinsics JSON; defaults to a 1000x1000 camera with f = 0.6.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Targets per axis of the grid over the unit disc.
    #[arg(long, default_value_t = 5, value_parser = positive_usize)]
    pub grid: usize,
    /// Crop scale.
    #[arg(long, default_value = "0.25,0.25")]
    pub s: Pair,
    /// Optional CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct StudyArgs {
    #[arg(value_enum)]
    pub kind: StudyKind,
    /// Study configuration JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON report output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct RerunArgs {
    /// Manifest written next to an earlier output.
    pub manifest: PathBuf,
    /// Write the re-run outputs here instead of over the originals.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::WarpImage(_) => "warp-image",
            Command::WarpKeypoints(_) => "warp-keypoints",
            Command::WarpSequence(_) => "warp-sequence",
            Command::Gen(_) => "gen",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::SweepFocal(_) => "sweep-focal",
            Command::SweepCapacity(_) => "sweep-capacity",
            Command::AblateRotation(_) => "ablate-rotation",
            Command::BinErrors(_) => "bin-errors",
            Command::Gradcheck(_) => "gradcheck",
            Command::CompareFocalOptions(_) => "compare-focal-options",
            Command::Study(_) => "study",
            Command::Rerun(_) => "rerun",
        }
    }

    /// Seed given on the command line, if the command takes one.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Gen(a) => Some(a.seed),
            Command::Train(a) => a.seed,
            Command::SweepCapacity(a) => a.seed,
            Command::Gradcheck(a) => Some(a.seed),
            _ => None,
        }
    }

    /// Files read by the command.
    pub fn inputs(&self) -> Vec<PathBuf> {
        let mut v = Vec::new();
        match self {
            Command::WarpImage(a) => v.extend([a.camera.clone(), a.input.clone()]),
            Command::WarpKeypoints(a) => v.extend([a.camera.clone(), a.input.clone()]),
            Command::WarpSequence(a) => v.extend([a.camera.clone(), a.input.clone()]),
            Command::Gen(a) => v.push(a.camera.clone()),
            Command::Train(a) => {
                v.extend(a.config.clone());
                v.extend([a.data.clone(), a.camera.clone()]);
            }
            Command::Eval(a) => v.extend([a.model.clone(), a.data.clone(), a.camera.clone()]),
            Command::SweepFocal(a) => {
                v.extend(a.model.iter().cloned());
                v.extend([a.data.clone(), a.camera.clone()]);
            }
            Command::SweepCapacity(a) => {
                v.extend(a.config.clone());
                v.extend([a.train.clone(), a.test.clone(), a.camera.clone()]);
            }
            Command::AblateRotation(a) => {
                v.push(a.model.clone());
                v.extend(a.pcl_model.clone());
                v.extend([a.data.clone(), a.camera.clone()]);
            }
            Command::BinErrors(a) => {
                v.extend(a.model.iter().cloned());
                v.extend([a.data.clone(), a.camera.clone()]);
            }
            Command::Gradcheck(_) => {}
            Command::CompareFocalOptions(a) => v.extend(a.camera.clone()),
            Command::Study(a) => v.extend(a.config.clone()),
            Command::Rerun(a) => v.push(a.manifest.clone()),
        }
        v
    }

    /// Output locations named on the command line, primary output first.
    pub fn outputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::WarpImage(a) => vec![&mut a.output],
            Command::WarpKeypoints(a) => vec![&mut a.out],
            Command::WarpSequence(a) => vec![&mut a.out],
            Command::Gen(a) => {
                let mut v = vec![&mut a.out];
                v.extend(a.images.as_mut());
                v
            }
            Command::Train(a) => {
                let mut v = vec![&mut a.out];
                v.extend(a.curve.as_mut());
                v
            }
            Command::Eval(a) => {
                let mut v = vec![&mut a.out];
                v.extend(a.summary.as_mut());
                v
            }
            Command::SweepFocal(a) => vec![&mut a.out],
            Command::SweepCapacity(a) => vec![&mut a.out],
            Command::AblateRotation(a) => vec![&mut a.out],
            Command::BinErrors(a) => vec![&mut a.out],
            Command::Gradcheck(a) => a.out.as_mut().into_iter().collect(),
            Command::CompareFocalOptions(a) => a.out.as_mut().into_iter().collect(),
            Command::Study(a) => vec![&mut a.out],
            Command::Rerun(_) => Vec::new(),
        }
    }
}
