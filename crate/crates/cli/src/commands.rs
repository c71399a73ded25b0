//! Subcommand bodies. Each one loads and validates all of its inputs, runs,
//! and returns the files it wrote with the primary output first.

use std::path::{Path, PathBuf};

use nalgebra::{Point2, Vector2};
use pcl_core::diffcheck::{compare_focal_options, focal_target_grid, gradcheck_battery};
use pcl_core::image_warp::perspective_crop_image;
use pcl_core::io::{
    read_camera, read_json, read_model, read_pnm, read_pose_jsonl, read_samples, to_json_bytes, write_atomic,
    write_json, write_model, write_pnm, write_pose_jsonl, PoseRecord,
};
use pcl_core::lifting::{
    binned_error_analysis, capacity_sweep, center_distance, evaluate, focal_robustness_sweep, rotation_ablation,
    train, EvalOptions, LiftingSet, Preprocessing, TrainConfig, TrainedModel,
};
use pcl_core::pcl::{pcl_keypoint_sequence, pcl_keypoints, KeypointCrop};
use pcl_core::study::{run_cube_study, run_figure_study, CubeStudyConfig, FigureStudyConfig};
use pcl_core::synthetic::{gen_cube_dataset, gen_figure_dataset, rasterize_cube, DatasetSpec, RenderOptions};
use pcl_core::{BackRotation, CameraIntrinsics, CropTarget, PclOptions, Pose2D, VirtualCamera};
use serde::Serialize;

use crate::args::*;
use crate::table::{mm, Table};
use crate::{invalid, CliError, CliResult};

/// Files written by a command and the seed it actually used.
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub seed: Option<u64>,
}

pub fn dispatch(cmd: &Command) -> CliResult<Outcome> {
    let written = match cmd {
        Command::WarpImage(a) => warp_image(a),
        Command::WarpKeypoints(a) => warp_keypoints(a),
        Command::WarpSequence(a) => warp_sequence(a),
        Command::Gen(a) => gen(a),
        Command::Train(a) => return train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::SweepFocal(a) => sweep_focal(a),
        Command::SweepCapacity(a) => return sweep_capacity(a),
        Command::AblateRotation(a) => ablate_rotation(a),
        Command::BinErrors(a) => bin_errors(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::CompareFocalOptions(a) => compare_focal(a),
        Command::Study(a) => study(a),
        Command::Rerun(_) => Err(CliError::Invalid("rerun cannot be nested".into())),
    }?;
    Ok(Outcome {
        written,
        seed: cmd.seed(),
    })
}

fn camera(path: &Path) -> CliResult<CameraIntrinsics> {
    read_camera(path).map_err(invalid)
}

fn model(path: &Path) -> CliResult<TrainedModel> {
    read_model(path).map_err(invalid)
}

fn lifting_set(data: &Path, cam: &Path) -> CliResult<LiftingSet> {
    let camera = camera(cam)?;
    let samples = read_samples(data).map_err(invalid)?;
    if samples.is_empty() {
        return Err(CliError::Invalid(format!("{}: no samples", data.display())));
    }
    Ok(LiftingSet { camera, samples })
}

fn label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
    Ok(write_atomic(path, &bytes)?)
}

fn warp_image(a: &WarpImageArgs) -> CliResult<Vec<PathBuf>> {
    let intr = camera(&a.camera)?;
    let img = read_pnm(&a.input).map_err(invalid)?;
    let (mut p, mut s) = (a.p.0, a.s.0);
    if a.pixels {
        let dims = [img.width() as f64, img.height() as f64];
        for k in 0..2 {
            p[k] /= dims[k];
            s[k] /= dims[k];
        }
    }
    let tgt = CropTarget::from_image_point(Point2::new(p[0], p[1]), Vector2::new(s[0], s[1]), &intr)?;
    let opts = PclOptions {
        focal: a.option,
        preserve_aspect: a.preserve_aspect,
        ..Default::default()
    };
    let size = a.size.unwrap_or(Size {
        height: img.height(),
        width: img.width(),
    });
    let (out, vc) = perspective_crop_image(&img, &intr, &tgt, &opts, size.height, size.width)?;
    write_pnm(&a.output, &out)?;
    println!(
        "wrote {}x{} crop, virtual focal ({:.6}, {:.6})",
        size.height,
        size.width,
        vc.intrinsics.fx(),
        vc.intrinsics.fy()
    );
    Ok(vec![a.output.clone()])
}

/// Virtual camera parameters written next to warped keypoints.
#[derive(Serialize)]
struct CameraRecord {
    /// Camera-plane point the virtual optical axis passes through.
    target: [f64; 2],
    scale: [f64; 2],
    focal: [f64; 2],
    /// Virtual-to-real rotation, row major.
    rotation: [[f64; 3]; 3],
}

impl CameraRecord {
    fn new(vc: &VirtualCamera, tgt: &CropTarget) -> Self {
        let m = vc.rotation.matrix();
        CameraRecord {
            target: [tgt.p().x, tgt.p().y],
            scale: [tgt.s().x, tgt.s().y],
            focal: [vc.intrinsics.fx(), vc.intrinsics.fy()],
            rotation: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        }
    }
}

#[derive(Serialize)]
struct KeypointCropRecord {
    joints2d: Vec<[f64; 2]>,
    root: usize,
    camera: CameraRecord,
}

fn load_poses(path: &Path, intr: &CameraIntrinsics, pixels: bool) -> CliResult<Vec<Pose2D>> {
    let records = read_pose_jsonl(path).map_err(invalid)?;
    if records.is_empty() {
        return Err(CliError::Invalid(format!("{}: no poses", path.display())));
    }
    let (w, h) = (intr.width() as f64, intr.height() as f64);
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut pose = r
                .pose2d()
                .map_err(|e| CliError::Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
            if pixels {
                for j in &mut pose.joints {
                    *j = Point2::new(j.x / w, j.y / h);
                }
            }
            Ok(pose)
        })
        .collect()
}

fn crop_options(c: &CropFlags) -> PclOptions {
    PclOptions {
        focal: c.option,
        preserve_aspect: c.preserve_aspect,
        margin: c.margin,
    }
}

fn flat2(pose: &Pose2D) -> Vec<[f64; 2]> {
    pose.joints.iter().map(|j| [j.x, j.y]).collect()
}

fn warp_keypoints(a: &WarpKeypointsArgs) -> CliResult<Vec<PathBuf>> {
    let intr = camera(&a.camera)?;
    let poses = load_poses(&a.input, &intr, a.crop.pixels)?;
    let opts = crop_options(&a.crop);
    let mut bytes = Vec::new();
    for (i, pose) in poses.iter().enumerate() {
        let KeypointCrop {
            pose: warped,
            camera,
            target,
            ..
        } = pcl_keypoints(pose, &intr, a.crop.anchor.into(), &opts)
            .map_err(|e| CliError::from(e).with_context(&format!("{} line {}", a.input.display(), i + 1)))?;
        let rec = KeypointCropRecord {
            joints2d: flat2(&warped),
            root: warped.root,
            camera: CameraRecord::new(&camera, &target),
        };
        serde_json::to_writer(&mut bytes, &rec).map_err(|e| CliError::Failed(e.to_string()))?;
        bytes.push(b'\n');
    }
    write_atomic(&a.out, &bytes)?;
    println!("warped {} poses", poses.len());
    Ok(vec![a.out.clone()])
}

#[derive(Serialize)]
struct SequenceRecord {
    middle: usize,
    camera: CameraRecord,
    frames: Vec<PoseRecord>,
}

fn warp_sequence(a: &WarpSequenceArgs) -> CliResult<Vec<PathBuf>> {
    let intr = camera(&a.camera)?;
    let poses = load_poses(&a.input, &intr, a.crop.pixels)?;
    let seq = pcl_keypoint_sequence(&poses, &intr, a.crop.anchor.into(), &crop_options(&a.crop))?;
    let rec = SequenceRecord {
        middle: seq.middle,
        camera: CameraRecord::new(&seq.camera, &seq.target),
        frames: seq.poses.iter().map(PoseRecord::from_pose2d).collect(),
    };
    write_json(&a.out, &rec)?;
    println!("warped {} frames through the camera of frame {}", poses.len(), seq.middle);
    Ok(vec![a.out.clone()])
}

fn gen(a: &GenArgs) -> CliResult<Vec<PathBuf>> {
    let intr = camera(&a.camera)?;
    if a.kind == Kind::Figure && a.images.is_some() {
        return Err(CliError::Invalid("--images is only supported with --kind cube".into()));
    }
    let mut written = vec![a.out.clone()];
    let records: Vec<PoseRecord> = match a.kind {
        Kind::Figure => {
            let spec = DatasetSpec::figures(a.count, a.placement, intr, a.seed);
            gen_figure_dataset(&spec)?.iter().map(PoseRecord::from_sample).collect()
        }
        Kind::Cube => {
            let spec = DatasetSpec::cubes(a.count, a.placement, intr, a.seed);
            let cubes = gen_cube_dataset(&spec)?;
            if let Some(dir) = &a.images {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?;
                let opts = RenderOptions {
                    supersample: a.supersample,
                    ..Default::default()
                };
                let (h, w) = (intr.height() as usize, intr.width() as usize);
                for (i, (cube, _)) in cubes.iter().enumerate() {
                    let path = dir.join(format!("{i:06}.ppm"));
                    write_pnm(&path, &rasterize_cube(cube, &intr, h, w, &opts)?)?;
                    written.push(path);
                }
            }
            cubes.iter().map(|(_, s)| PoseRecord::from_sample(s)).collect()
        }
    };
    write_pose_jsonl(&a.out, &records)?;
    println!("generated {} samples", records.len());
    Ok(written)
}

fn train_config(path: Option<&PathBuf>) -> CliResult<TrainConfig> {
    match path {
        Some(p) => read_json(p).map_err(invalid),
        None => Ok(TrainConfig::default()),
    }
}

#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
}

fn train_cmd(a: &TrainArgs) -> CliResult<Outcome> {
    let mut cfg = train_config(a.config.as_ref())?;
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.hidden = a.hidden.unwrap_or(cfg.hidden);
    cfg.preprocessing = a.preprocessing.unwrap_or(cfg.preprocessing);
    cfg.validate().map_err(invalid)?;
    let set = lifting_set(&a.data, &a.camera)?;
    let m = train(&set, &cfg)?;
    write_model(&a.out, &m)?;
    let mut written = vec![a.out.clone()];
    if let Some(curve) = &a.curve {
        let rows: Vec<CurveRow> = m
            .curve
            .iter()
            .map(|e| CurveRow {
                epoch: e.epoch,
                train_loss: e.train_loss,
                val_loss: e.val_loss,
            })
            .collect();
        write_csv(curve, &rows)?;
        written.push(curve.clone());
    }
    println!(
        "trained {} model, hidden {}, {} parameters, best epoch {}",
        cfg.preprocessing,
        cfg.hidden,
        m.mlp.param_count(),
        m.best_epoch
    );
    Ok(Outcome {
        written,
        seed: Some(cfg.seed),
    })
}

#[derive(Serialize)]
struct SampleRow {
    index: usize,
    root_x: f64,
    root_y: f64,
    center_distance: f64,
    mpjpe: f64,
}

#[derive(Serialize)]
struct EvalSummary {
    model: String,
    preprocessing: Preprocessing,
    hidden: usize,
    focal_multiplier: f64,
    rotation: BackRotation,
    samples: usize,
    mpjpe: f64,
    pck50: f64,
    pck100: f64,
}

fn eval(a: &EvalArgs) -> CliResult<Vec<PathBuf>> {
    let m = model(&a.model)?;
    let set = lifting_set(&a.data, &a.camera)?;
    let opts = EvalOptions {
        focal_multiplier: a.focal_multiplier,
        rotation: a.rotation,
    };
    let report = evaluate(&m, &set, &opts)?;
    let rows: Vec<SampleRow> = report
        .per_sample
        .iter()
        .zip(&report.root_positions)
        .enumerate()
        .map(|(index, (&mpjpe, &r))| SampleRow {
            index,
            root_x: r[0],
            root_y: r[1],
            center_distance: center_distance(r),
            mpjpe,
        })
        .collect();
    write_csv(&a.out, &rows)?;
    let summary = EvalSummary {
        model: label(&a.model),
        preprocessing: m.config.preprocessing,
        hidden: m.mlp.hidden(),
        focal_multiplier: a.focal_multiplier,
        rotation: a.rotation,
        samples: rows.len(),
        mpjpe: report.mpjpe,
        pck50: report.pck50,
        pck100: report.pck100,
    };
    let mut t = Table::new(&["model", "arm", "samples", "MPJPE mm", "PCK@50", "PCK@100"]);
    t.row(vec![
        summary.model.clone(),
        summary.preprocessing.to_string(),
        summary.samples.to_string(),
        mm(summary.mpjpe),
        format!("{:.1}", summary.pck50),
        format!("{:.1}", summary.pck100),
    ]);
    t.print();
    let mut written = vec![a.out.clone()];
    if let Some(path) = &a.summary {
        write_json(path, &summary)?;
        written.push(path.clone());
    }
    Ok(written)
}

#[derive(Serialize)]
struct FocalRow {
    model: String,
    preprocessing: Preprocessing,
    multiplier: f64,
    mpjpe: f64,
    pck50: f64,
    pck100: f64,
}

fn sweep_focal(a: &SweepFocalArgs) -> CliResult<Vec<PathBuf>> {
    let models = a.model.iter().map(|p| model(p)).collect::<CliResult<Vec<_>>>()?;
    let set = lifting_set(&a.data, &a.camera)?;
    let mut rows = Vec::new();
    for (path, m) in a.model.iter().zip(&models) {
        for (multiplier, r) in focal_robustness_sweep(m, &set, &a.multipliers)? {
            rows.push(FocalRow {
                model: label(path),
                preprocessing: m.config.preprocessing,
                multiplier,
                mpjpe: r.mpjpe,
                pck50: r.pck50,
                pck100: r.pck100,
            });
        }
    }
    write_csv(&a.out, &rows)?;
    let mut t = Table::new(&["model", "arm", "focal x", "MPJPE mm", "PCK@50"]);
    for r in &rows {
        t.row(vec![
            r.model.clone(),
            r.preprocessing.to_string(),
            r.multiplier.to_string(),
            mm(r.mpjpe),
            format!("{:.1}", r.pck50),
        ]);
    }
    t.print();
    Ok(vec![a.out.clone()])
}

fn sweep_capacity(a: &SweepCapacityArgs) -> CliResult<Outcome> {
    let mut cfg = train_config(a.config.as_ref())?;
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.validate().map_err(invalid)?;
    let train_set = lifting_set(&a.train, &a.camera)?;
    let test_set = lifting_set(&a.test, &a.camera)?;
    let rows = capacity_sweep(&train_set, &test_set, &cfg, &a.widths)?;
    write_csv(&a.out, &rows)?;
    let mut t = Table::new(&["arm", "hidden", "params", "MPJPE mm"]);
    for r in &rows {
        t.row(vec![r.preprocessing.to_string(), r.hidden.to_string(), r.params.to_string(), mm(r.mpjpe)]);
    }
    t.print();
    Ok(Outcome {
        written: vec![a.out.clone()],
        seed: Some(cfg.seed),
    })
}

#[derive(Serialize)]
struct AblationRow {
    arm: Preprocessing,
    rotation: BackRotation,
    mpjpe: f64,
    pck50: f64,
}

fn ablate_rotation(a: &AblateRotationArgs) -> CliResult<Vec<PathBuf>> {
    let rc = model(&a.model)?;
    if rc.config.preprocessing != Preprocessing::Rc {
        return Err(CliError::Invalid(format!("{}: rotation ablation needs an rc-trained model", a.model.display())));
    }
    let pcl = a.pcl_model.as_ref().map(|p| model(p)).transpose()?;
    if let (Some(m), Some(p)) = (&pcl, &a.pcl_model) {
        if m.config.preprocessing != Preprocessing::Pcl {
            return Err(CliError::Invalid(format!("{}: expected a pcl-trained model", p.display())));
        }
    }
    let set = lifting_set(&a.data, &a.camera)?;
    let mut rows = Vec::new();
    for mode in [BackRotation::None, BackRotation::XOnly, BackRotation::XyFull] {
        let r = rotation_ablation(&rc, &set, mode)?;
        rows.push(AblationRow {
            arm: Preprocessing::Rc,
            rotation: mode,
            mpjpe: r.mpjpe,
            pck50: r.pck50,
        });
    }
    if let Some(m) = &pcl {
        let r = evaluate(m, &set, &EvalOptions::default())?;
        rows.push(AblationRow {
            arm: Preprocessing::Pcl,
            rotation: BackRotation::None,
            mpjpe: r.mpjpe,
            pck50: r.pck50,
        });
    }
    write_csv(&a.out, &rows)?;
    let mut t = Table::new(&["arm", "rotation", "MPJPE mm", "PCK@50"]);
    for r in &rows {
        t.row(vec![r.arm.to_string(), r.rotation.to_string(), mm(r.mpjpe), format!("{:.1}", r.pck50)]);
    }
    t.print();
    Ok(vec![a.out.clone()])
}

#[derive(Serialize)]
struct BinCsvRow {
    model: String,
    preprocessing: Preprocessing,
    lo: f64,
    hi: f64,
    count: usize,
    mean_mpjpe: f64,
}

fn bin_errors(a: &BinErrorsArgs) -> CliResult<Vec<PathBuf>> {
    let models = a.model.iter().map(|p| model(p)).collect::<CliResult<Vec<_>>>()?;
    let set = lifting_set(&a.data, &a.camera)?;
    let mut rows = Vec::new();
    let mut t = Table::new(&["model", "arm", "MPJPE mm", "slope mm/unit"]);
    for (path, m) in a.model.iter().zip(&models) {
        let report = evaluate(m, &set, &EvalOptions::default())?;
        let bins = binned_error_analysis(&report, a.bins)?;
        t.row(vec![
            label(path),
            m.config.preprocessing.to_string(),
            mm(report.mpjpe),
            bins.slope().map_or_else(|| "n/a".into(), mm),
        ]);
        rows.extend(bins.rows.iter().map(|b| BinCsvRow {
            model: label(path),
            preprocessing: m.config.preprocessing,
            lo: b.lo,
            hi: b.hi,
            count: b.count,
            mean_mpjpe: b.mean_mpjpe,
        }));
    }
    write_csv(&a.out, &rows)?;
    t.print();
    Ok(vec![a.out.clone()])
}

#[derive(Serialize)]
struct GradcheckCsvRow {
    jacobian: String,
    cases: usize,
    max_relative_error: f64,
    max_abs_diff: f64,
    tolerance: f64,
    passed: bool,
}

fn gradcheck(a: &GradcheckArgs) -> CliResult<Vec<PathBuf>> {
    let rows = gradcheck_battery(a.seed, a.configs)?;
    let mut t = Table::new(&["jacobian", "cases", "max rel err", "max abs diff", "tolerance", "ok"]);
    for r in &rows {
        t.row(vec![
            r.name.clone(),
            r.cases.to_string(),
            format!("{:.3e}", r.max_error),
            format!("{:.3e}", r.max_abs_diff),
            format!("{:.0e}", r.tolerance),
            if r.passed() { "yes" } else { "NO" }.into(),
        ]);
    }
    t.print();
    let mut written = Vec::new();
    if let Some(out) = &a.out {
        let csv_rows: Vec<GradcheckCsvRow> = rows
            .iter()
            .map(|r| GradcheckCsvRow {
                jacobian: r.name.clone(),
                cases: r.cases,
                max_relative_error: r.max_error,
                max_abs_diff: r.max_abs_diff,
                tolerance: r.tolerance,
                passed: r.passed(),
            })
            .collect();
        write_csv(out, &csv_rows)?;
        written.push(out.clone());
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(written)
    } else {
        Err(CliError::Failed(format!("gradient check failed for: {}", failed.join(", "))))
    }
}

/// Camera used when none is given: square 1000 px sensor, f = 0.6.
pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(0.6, 0.6, 0.5, 0.5, 1000, 1000).expect("valid default camera")
}

fn compare_focal(a: &CompareFocalArgs) -> CliResult<Vec<PathBuf>> {
    let intr = match &a.camera {
        Some(p) => camera(p)?,
        None => default_camera(),
    };
    let s = Vector2::new(a.s.0[0], a.s.0[1]);
    if !(s.x > 0.0 && s.y > 0.0) {
        return Err(CliError::Invalid("--s must be positive".into()));
    }
    let rows = compare_focal_options(&intr, &focal_target_grid(a.grid), s)?;
    let mut t = Table::new(&["p_x", "p_y", "option", "ratio x", "ratio y", "preserved"]);
    for r in &rows {
        t.row(vec![
            format!("{:.3}", r.p_x),
            format!("{:.3}", r.p_y),
            r.option.to_string(),
            format!("{:.6}", r.ratio_x),
            format!("{:.6}", r.ratio_y),
            r.preserved.to_string(),
        ]);
    }
    t.print();
    let n = rows.len() / 3;
    for opt in ["A", "B", "C"] {
        let kept = rows.iter().filter(|r| r.option.to_string() == opt && r.preserved).count();
        println!("option {opt}: scale preserved within 1% at {kept}/{n} targets");
    }
    let mut written = Vec::new();
    if let Some(out) = &a.out {
        write_csv(out, &rows)?;
        written.push(out.clone());
    }
    Ok(written)
}

fn study(a: &StudyArgs) -> CliResult<Vec<PathBuf>> {
    let progress = |msg: &str| eprintln!("{msg}");
    let bytes = match a.kind {
        StudyKind::Figures => {
            let cfg: FigureStudyConfig = match &a.config {
                Some(p) => read_json(p).map_err(invalid)?,
                None => FigureStudyConfig::default(),
            };
            cfg.validate().map_err(invalid)?;
            let r = run_figure_study(&cfg, progress)?;
            let mut t = Table::new(&["seed", "RC", "RC+x", "RC+xy", "PCL", "PCL half", "slope RC", "slope PCL"]);
            let slope = |s: Option<f64>| s.map_or_else(|| "n/a".into(), mm);
            for s in &r.seeds {
                t.row(vec![
                    s.seed.to_string(),
                    mm(s.rc),
                    mm(s.rc_x_only),
                    mm(s.rc_xy_full),
                    mm(s.pcl),
                    mm(s.pcl_reduced),
                    slope(s.rc_slope),
                    slope(s.pcl_slope),
                ]);
            }
            t.print();
            to_json_bytes(&r)?
        }
        StudyKind::Cubes => {
            let cfg: CubeStudyConfig = match &a.config {
                Some(p) => read_json(p).map_err(invalid)?,
                None => CubeStudyConfig::default(),
            };
            let r = run_cube_study(&cfg, progress)?;
            let mut t = Table::new(&["seed", "RC general", "PCL general", "RC centered", "PCL centered"]);
            for s in &r.seeds {
                t.row(vec![
                    s.seed.to_string(),
                    mm(s.rc_general),
                    mm(s.pcl_general),
                    mm(s.rc_centered),
                    mm(s.pcl_centered),
                ]);
            }
            t.print();
            to_json_bytes(&r)?
        }
    };
    write_atomic(&a.out, &bytes)?;
    Ok(vec![a.out.clone()])
}

impl CliError {
    fn with_context(self, ctx: &str) -> Self {
        match self {
            CliError::Invalid(m) => CliError::Invalid(format!("{ctx}: {m}")),
            CliError::Failed(m) => CliError::Failed(format!("{ctx}: {m}")),
        }
    }
}
