//! 2D-to-3D pose lifting with rectangular-crop or perspective-crop inputs.
//!
//! Both arms share the network, optimizer and normalization. They differ
//! only in how 2D keypoints are cropped and in which frame the 3D targets
//! are expressed: RC predicts root-centered camera-frame joints, PCL
//! predicts root-centered joints in the virtual camera frame and rotates
//! them back afterwards.

use nalgebra::Point2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::mlp::{Adam, Mlp};
use crate::pcl::{
    build_virtual_camera, crop_scale, pcl_inv, pcl_inv_partial, pcl_keypoints, rc_crop,
    BackRotation, CropAnchor, CropTarget, FocalOption, PclOptions, VirtualCamera,
};
use crate::pose::{Pose2D, Pose3D};
use crate::synthetic::Sample;

/// Standard deviations below this are replaced by 1.
pub const MIN_STD: f64 = 1e-8;

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 512;

/// Keypoint cropping used in front of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    Rc,
    #[default]
    Pcl,
}

impl std::str::FromStr for Preprocessing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rc" => Ok(Preprocessing::Rc),
            "pcl" => Ok(Preprocessing::Pcl),
            other => Err(Error::InvalidInput(format!(
                "unknown preprocessing '{other}' (expected rc or pcl)"
            ))),
        }
    }
}

impl std::fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preprocessing::Rc => "rc",
            Preprocessing::Pcl => "pcl",
        })
    }
}

/// A camera and the samples observed through it.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftingSet {
    pub camera: CameraIntrinsics,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub preprocessing: Preprocessing,
    pub focal: FocalOption,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: usize,
    /// Test-time focal length multiplier; training always uses the true camera.
    pub focal_multiplier: f64,
    /// Post-hoc rotation applied to RC predictions at evaluation.
    pub rotation: BackRotation,
    pub val_fraction: f64,
    pub margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preprocessing: Preprocessing::Pcl,
            focal: FocalOption::C,
            learning_rate: 1e-3,
            epochs: 40,
            batch_size: 64,
            seed: 0,
            hidden: 128,
            focal_multiplier: 1.0,
            rotation: BackRotation::None,
            val_fraction: 0.1,
            margin: crate::pcl::DEFAULT_MARGIN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return bad("epochs, batch_size and hidden must be positive");
        }
        if !(self.focal_multiplier > 0.0 && self.focal_multiplier.is_finite()) {
            return bad("focal_multiplier must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be non-negative");
        }
        if self.preprocessing == Preprocessing::Pcl && self.rotation != BackRotation::None {
            return bad("post-hoc rotation only applies to the rc arm");
        }
        Ok(())
    }

    pub fn pcl_options(&self) -> PclOptions {
        PclOptions {
            focal: self.focal,
            preserve_aspect: false,
            margin: self.margin,
        }
    }
}

/// What [`postprocess`] needs to map a network output back to the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub mode: Preprocessing,
    pub root: usize,
    /// Virtual camera aimed at the root; used by PCL and by the RC rotation ablation.
    pub camera: VirtualCamera,
}

/// Crops a 2D pose into network features (before standardization).
pub fn preprocess(
    kps: &Pose2D,
    mode: Preprocessing,
    intr: &CameraIntrinsics,
    opts: &PclOptions,
) -> Result<(Vec<f64>, Context)> {
    let (features, camera) = match mode {
        Preprocessing::Rc => {
            let s = crop_scale(kps, opts.margin)?;
            let tgt = CropTarget::from_image_point(kps.root_point(), s, intr)?;
            (rc_crop(kps, opts.margin)?.to_flat(), build_virtual_camera(&tgt, intr, opts)?)
        }
        Preprocessing::Pcl => {
            let crop = pcl_keypoints(kps, intr, CropAnchor::Root, opts)?;
            (crop.pose.to_flat(), crop.camera)
        }
    };
    Ok((
        features,
        Context {
            mode,
            root: kps.root,
            camera,
        },
    ))
}

/// Training target: root-centered joints in the frame the arm predicts in.
pub fn target(pose: &Pose3D, ctx: &Context) -> Vec<f64> {
    let centered = pose.root_centered();
    match ctx.mode {
        Preprocessing::Rc => centered.to_flat(),
        Preprocessing::Pcl => centered.map(|j| ctx.camera.to_virtual(j)).to_flat(),
    }
}

/// Un-standardizes a network output and returns it in the real camera frame.
pub fn postprocess(output: &[f64], stats: &NormStats, ctx: &Context, rotation: BackRotation) -> Result<Pose3D> {
    let raw = stats.unstandardize_output(output)?;
    let pose = Pose3D::from_flat(&raw, ctx.root)?;
    Ok(match ctx.mode {
        Preprocessing::Rc => pcl_inv_partial(&pose, &ctx.camera, rotation),
        Preprocessing::Pcl => pcl_inv(&pose, &ctx.camera),
    })
}

/// Per-coordinate standardization of inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
}

fn mean_std(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > MIN_STD {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl NormStats {
    pub fn fit(inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != outputs.len() {
            return Err(Error::InvalidInput("normalization needs matching, non-empty rows".into()));
        }
        let (input_mean, input_std) = mean_std(inputs);
        let (output_mean, output_std) = mean_std(outputs);
        Ok(NormStats {
            input_mean,
            input_std,
            output_mean,
            output_std,
        })
    }

    pub fn standardize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn standardize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.output_mean.iter().zip(&self.output_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn unstandardize_output(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_mean.len() {
            return Err(Error::InvalidInput(format!(
                "output has {} values, expected {}",
                y.len(),
                self.output_mean.len()
            )));
        }
        Ok(y.iter()
            .zip(self.output_mean.iter().zip(&self.output_std))
            .map(|(v, (m, s))| v * s + m)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean squared error per coordinate, mm².
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub mlp: Mlp,
    pub stats: NormStats,
    pub config: TrainConfig,
    pub curve: Vec<EpochLoss>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
}

struct Prepared {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

fn prepare(set: &LiftingSet, mode: Preprocessing, opts: &PclOptions) -> Result<Prepared> {
    let mut x = Vec::with_capacity(set.samples.len());
    let mut y = Vec::with_capacity(set.samples.len());
    for s in &set.samples {
        let (f, ctx) = preprocess(&s.pose2d, mode, &set.camera, opts)?;
        y.push(target(&s.pose3d, &ctx));
        x.push(f);
    }
    Ok(Prepared { x, y })
}

fn gather(rows: &[Vec<f64>], idx: &[usize], out: &mut Vec<f64>) {
    out.clear();
    for &i in idx {
        out.extend_from_slice(&rows[i]);
    }
}

/// Trains a lifting network; deterministic for a fixed set and config.
pub fn train(set: &LiftingSet, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if set.samples.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let data = prepare(set, cfg.preprocessing, &cfg.pcl_options())?;
    let n = data.x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64) * cfg.val_fraction).round() as usize;
    let (val_idx, train_idx) = if n_val == 0 || n_val == n {
        (order.clone(), order)
    } else {
        let (v, t) = order.split_at(n_val);
        (v.to_vec(), t.to_vec())
    };

    let fit_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| data.x[i].clone()).collect();
    let fit_y: Vec<Vec<f64>> = train_idx.iter().map(|&i| data.y[i].clone()).collect();
    let stats = NormStats::fit(&fit_x, &fit_y)?;
    let xs: Vec<Vec<f64>> = data.x.iter().map(|r| stats.standardize_input(r)).collect();
    let ys: Vec<Vec<f64>> = data.y.iter().map(|r| stats.standardize_output(r)).collect();

    let mut mlp = Mlp::new(xs[0].len(), cfg.hidden, ys[0].len(), cfg.seed)?;
    let mut adam = Adam::new(mlp.param_count(), cfg.learning_rate);
    let weights = stats.output_std.clone();

    let mut val_x = Vec::new();
    let mut val_y = Vec::new();
    gather(&xs, &val_idx, &mut val_x);
    gather(&ys, &val_idx, &mut val_y);

    let mut train_order = train_idx;
    let mut bx = Vec::new();
    let mut by = Vec::new();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for epoch in 0..cfg.epochs {
        train_order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, batch) in train_order.chunks(cfg.batch_size).enumerate() {
            gather(&xs, batch, &mut bx);
            gather(&ys, batch, &mut by);
            let (loss, grad) = mlp.loss_and_grad(&bx, &by, &weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            total += loss * batch.len() as f64;
            adam.step(mlp.params_mut(), &grad);
        }
        let val_loss = mlp.loss(&val_x, &val_y, &weights)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                step: usize::MAX,
                loss: val_loss,
            });
        }
        curve.push(EpochLoss {
            epoch,
            train_loss: total / train_order.len() as f64,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, mlp.params().to_vec()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    mlp.params_mut().copy_from_slice(&params);
    Ok(TrainedModel {
        mlp,
        stats,
        config: cfg.clone(),
        curve,
        best_epoch,
    })
}

/// Evaluation-time knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub focal_multiplier: f64,
    pub rotation: BackRotation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            focal_multiplier: 1.0,
            rotation: BackRotation::None,
        }
    }
}

impl From<&TrainConfig> for EvalOptions {
    fn from(cfg: &TrainConfig) -> Self {
        EvalOptions {
            focal_multiplier: cfg.focal_multiplier,
            rotation: cfg.rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mpjpe: f64,
    pub pck50: f64,
    pub pck100: f64,
    pub per_sample: Vec<f64>,
    /// Root keypoint position per sample, normalized image coordinates.
    pub root_positions: Vec<[f64; 2]>,
}

/// Mean per-joint position error after centering both poses at their roots.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D) -> f64 {
    joint_errors(pred, gt).iter().sum::<f64>() / gt.len() as f64
}

fn joint_errors(pred: &Pose3D, gt: &Pose3D) -> Vec<f64> {
    let (p, g) = (pred.root_centered(), gt.root_centered());
    p.joints.iter().zip(&g.joints).map(|(a, b)| (a - b).norm()).collect()
}

/// Percentage of joints within `threshold` mm, after root centering.
pub fn pck(preds: &[Pose3D], gts: &[Pose3D], threshold: f64) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (p, g) in preds.iter().zip(gts) {
        for e in joint_errors(p, g) {
            hit += (e <= threshold) as usize;
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        100.0 * hit as f64 / total as f64
    }
}

/// Predicts camera-frame poses for every sample in `set`.
pub fn predict(model: &TrainedModel, set: &LiftingSet, opts: &EvalOptions) -> Result<Vec<Pose3D>> {
    let cfg = &model.config;
    if cfg.preprocessing == Preprocessing::Pcl && opts.rotation != BackRotation::None {
        return Err(Error::InvalidInput("post-hoc rotation only applies to the rc arm".into()));
    }
    let camera = set.camera.with_focal_scaled(opts.focal_multiplier)?;
    let pcl_opts = cfg.pcl_options();
    let mut out = Vec::with_capacity(set.samples.len());
    for chunk in set.samples.chunks(EVAL_CHUNK) {
        let mut x = Vec::new();
        let mut ctxs = Vec::with_capacity(chunk.len());
        for s in chunk {
            let (f, ctx) = preprocess(&s.pose2d, cfg.preprocessing, &camera, &pcl_opts)?;
            x.extend(model.stats.standardize_input(&f));
            ctxs.push(ctx);
        }
        let y = model.mlp.forward(&x)?;
        for (row, ctx) in y.chunks_exact(model.mlp.n_out()).zip(&ctxs) {
            out.push(postprocess(row, &model.stats, ctx, opts.rotation)?);
        }
    }
    Ok(out)
}

pub fn evaluate(model: &TrainedModel, set: &LiftingSet, opts: &EvalOptions) -> Result<EvalReport> {
    let preds = predict(model, set, opts)?;
    Ok(score(&preds, &set.samples))
}

/// Scores predictions against the ground truth of `samples`.
pub fn score(preds: &[Pose3D], samples: &[Sample]) -> EvalReport {
    let gts: Vec<Pose3D> = samples.iter().map(|s| s.pose3d.clone()).collect();
    let per_sample: Vec<f64> = preds.iter().zip(&gts).map(|(p, g)| mpjpe(p, g)).collect();
    let mpjpe = if per_sample.is_empty() {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    EvalReport {
        mpjpe,
        pck50: pck(preds, &gts, 50.0),
        pck100: pck(preds, &gts, 100.0),
        per_sample,
        root_positions: samples
            .iter()
            .map(|s| {
                let r = s.pose2d.root_point();
                [r.x, r.y]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_mpjpe: f64,
}

impl BinRow {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Mean error per bin of root distance from the image center; empty bins are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedErrors {
    pub rows: Vec<BinRow>,
}

impl BinnedErrors {
    /// Least-squares slope of bin mean error against bin center, in mm per
    /// normalized image unit. `None` with fewer than two bins.
    pub fn slope(&self) -> Option<f64> {
        if self.rows.len() < 2 {
            return None;
        }
        let n = self.rows.len() as f64;
        let mx = self.rows.iter().map(BinRow::center).sum::<f64>() / n;
        let my = self.rows.iter().map(|r| r.mean_mpjpe).sum::<f64>() / n;
        let sxy: f64 = self.rows.iter().map(|r| (r.center() - mx) * (r.mean_mpjpe - my)).sum();
        let sxx: f64 = self.rows.iter().map(|r| (r.center() - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

/// Distance of a normalized image point from the image center.
pub fn center_distance(p: [f64; 2]) -> f64 {
    (Point2::new(p[0], p[1]) - Point2::new(0.5, 0.5)).norm()
}

/// Bins per-sample errors by root distance from the image center into
/// `bins` equal-width bins spanning `[0, max distance]`.
pub fn binned_error_analysis(report: &EvalReport, bins: usize) -> Result<BinnedErrors> {
    if bins == 0 {
        return Err(Error::InvalidInput("bin count must be positive".into()));
    }
    let d: Vec<f64> = report.root_positions.iter().map(|p| center_distance(*p)).collect();
    let d_max = d.iter().cloned().fold(0.0, f64::max);
    if d_max == 0.0 {
        let count = d.len();
        if count == 0 {
            return Ok(BinnedErrors { rows: vec![] });
        }
        return Ok(BinnedErrors {
            rows: vec![BinRow {
                lo: 0.0,
                hi: 0.0,
                count,
                mean_mpjpe: report.per_sample.iter().sum::<f64>() / count as f64,
            }],
        });
    }
    let width = d_max / bins as f64;
    let mut sums = vec![(0usize, 0.0); bins];
    for (dist, e) in d.iter().zip(&report.per_sample) {
        let b = ((dist / width) as usize).min(bins - 1);
        sums[b].0 += 1;
        sums[b].1 += e;
    }
    let rows = sums
        .iter()
        .enumerate()
        .filter(|(_, (c, _))| *c > 0)
        .map(|(b, (c, s))| BinRow {
            lo: b as f64 * width,
            hi: (b + 1) as f64 * width,
            count: *c,
            mean_mpjpe: s / *c as f64,
        })
        .collect();
    Ok(BinnedErrors { rows })
}

/// Evaluates `model` with the camera focal length scaled by each multiplier.
pub fn focal_robustness_sweep(
    model: &TrainedModel,
    set: &LiftingSet,
    multipliers: &[f64],
) -> Result<Vec<(f64, EvalReport)>> {
    multipliers
        .iter()
        .map(|&m| {
            let opts = EvalOptions {
                focal_multiplier: m,
                ..Default::default()
            };
            Ok((m, evaluate(model, set, &opts)?))
        })
        .collect()
}

/// Scores an RC model after rotating its predictions by part of the PCL rotation.
pub fn rotation_ablation(model: &TrainedModel, set: &LiftingSet, mode: BackRotation) -> Result<EvalReport> {
    if model.config.preprocessing != Preprocessing::Rc {
        return Err(Error::InvalidInput("rotation ablation needs an rc-trained model".into()));
    }
    evaluate(
        model,
        set,
        &EvalOptions {
            rotation: mode,
            ..Default::default()
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub preprocessing: Preprocessing,
    pub hidden: usize,
    pub params: usize,
    pub mpjpe: f64,
}

/// Trains RC at the largest width and PCL at every width.
pub fn capacity_sweep(
    train_set: &LiftingSet,
    test_set: &LiftingSet,
    base: &TrainConfig,
    widths: &[usize],
) -> Result<Vec<CapacityRow>> {
    let Some(&widest) = widths.iter().max() else {
        return Err(Error::InvalidInput("no widths given".into()));
    };
    if widths.contains(&0) {
        return Err(Error::InvalidInput("widths must be positive".into()));
    }
    let mut runs = vec![(Preprocessing::Rc, widest)];
    runs.extend(widths.iter().map(|&w| (Preprocessing::Pcl, w)));
    runs.into_iter()
        .map(|(preprocessing, hidden)| {
            let cfg = TrainConfig {
                preprocessing,
                hidden,
                rotation: BackRotation::None,
                ..base.clone()
            };
            let model = train(train_set, &cfg)?;
            let report = evaluate(&model, test_set, &EvalOptions::default())?;
            Ok(CapacityRow {
                preprocessing,
                hidden,
                params: model.mlp.param_count(),
                mpjpe: report.mpjpe,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gen_figure_dataset, DatasetSpec, Placement};
    use nalgebra::Vector3;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(0.6, 0.6, 0.5, 0.5, 1000, 1000).unwrap()
    }

    fn figures(n: usize, placement: Placement, seed: u64) -> LiftingSet {
        let spec = DatasetSpec::figures(n, placement, cam(), seed);
        LiftingSet {
            camera: cam(),
            samples: gen_figure_dataset(&spec).unwrap(),
        }
    }

    #[test]
    fn centered_pose_features_agree() {
        let set = figures(20, Placement::Centered, 1);
        let opts = PclOptions::default();
        for s in &set.samples {
            let (rc, _) = preprocess(&s.pose2d, Preprocessing::Rc, &cam(), &opts).unwrap();
            let (pcl, ctx) = preprocess(&s.pose2d, Preprocessing::Pcl, &cam(), &opts).unwrap();
            for (a, b) in rc.iter().zip(&pcl) {
                assert!((a + 0.5 - b).abs() < 1e-9);
            }
            assert_eq!(&rc[..2], &[0.0, 0.0]);
            assert!((pcl[0] - 0.5).abs() < 1e-12 && (pcl[1] - 0.5).abs() < 1e-12);
            assert!((ctx.camera.rotation.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn pcl_round_trip_restores_camera_frame() {
        let set = figures(50, Placement::General, 2);
        let opts = PclOptions::default();
        for s in &set.samples {
            let (_, ctx) = preprocess(&s.pose2d, Preprocessing::Pcl, &cam(), &opts).unwrap();
            let y = target(&s.pose3d, &ctx);
            let stats = NormStats {
                input_mean: vec![],
                input_std: vec![],
                output_mean: vec![0.0; y.len()],
                output_std: vec![1.0; y.len()],
            };
            let back = postprocess(&y, &stats, &ctx, BackRotation::None).unwrap();
            let gt = s.pose3d.root_centered();
            for (a, b) in back.joints.iter().zip(&gt.joints) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_output_unstandardizes_to_mean() {
        let stats = NormStats {
            input_mean: vec![],
            input_std: vec![],
            output_mean: vec![1.0, 2.0, 3.0],
            output_std: vec![5.0, 5.0, 5.0],
        };
        assert_eq!(stats.unstandardize_output(&[0.0; 3]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn std_floor() {
        let s = NormStats::fit(&[vec![1.0, 2.0], vec![1.0, 4.0]], &[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(s.input_std, vec![1.0, 1.0]);
        assert_eq!(s.output_std, vec![1.0]);
    }

    #[test]
    fn metric_examples() {
        let gt = Pose3D::new((0..17).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect(), 0).unwrap();
        assert_eq!(mpjpe(&gt, &gt), 0.0);
        let shifted = gt.map(|j| j + Vector3::new(10.0, -4.0, 7.0));
        assert!(mpjpe(&shifted, &gt).abs() < 1e-12);
        let mut one = gt.clone();
        one.joints[5].y += 5.0;
        assert!((mpjpe(&one, &gt) - 5.0 / 17.0).abs() < 1e-12);
        assert_eq!(mpjpe(&one, &gt), mpjpe(&gt, &one));
        assert_eq!(pck(&[gt.clone()], &[gt.clone()], 50.0), 100.0);
        assert!(pck(&[one.clone()], &[gt.clone()], 1.0) <= pck(&[one], &[gt], 10.0));
    }

    #[test]
    fn memorizes_identical_samples() {
        let one = figures(1, Placement::General, 3).samples[0].clone();
        let set = LiftingSet {
            camera: cam(),
            samples: vec![one; 32],
        };
        let cfg = TrainConfig {
            epochs: 200,
            hidden: 16,
            batch_size: 8,
            ..Default::default()
        };
        let model = train(&set, &cfg).unwrap();
        assert!(model.curve.last().unwrap().train_loss < 1e-2, "{:?}", model.curve.last());
    }

    #[test]
    fn training_is_deterministic() {
        let set = figures(200, Placement::General, 4);
        let cfg = TrainConfig {
            epochs: 3,
            hidden: 16,
            ..Default::default()
        };
        let a = train(&set, &cfg).unwrap();
        let b = train(&set, &cfg).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.mlp, b.mlp);
    }

    #[test]
    fn ablation_modes_agree_on_centered_set() {
        let train_set = figures(200, Placement::General, 5);
        let test_set = figures(50, Placement::Centered, 6);
        let cfg = TrainConfig {
            preprocessing: Preprocessing::Rc,
            epochs: 2,
            hidden: 16,
            ..Default::default()
        };
        let model = train(&train_set, &cfg).unwrap();
        let base = evaluate(&model, &test_set, &EvalOptions::default()).unwrap();
        for mode in [BackRotation::None, BackRotation::XOnly, BackRotation::XyFull] {
            let r = rotation_ablation(&model, &test_set, mode).unwrap();
            assert!((r.mpjpe - base.mpjpe).abs() < 1e-9);
        }
        let pcl = TrainConfig {
            preprocessing: Preprocessing::Pcl,
            ..cfg
        };
        let pcl_model = train(&train_set, &pcl).unwrap();
        assert!(rotation_ablation(&pcl_model, &test_set, BackRotation::XOnly).is_err());
        let sweep = focal_robustness_sweep(&pcl_model, &test_set, &[1.0]).unwrap();
        let plain = evaluate(&pcl_model, &test_set, &EvalOptions::default()).unwrap();
        assert_eq!(sweep[0].1, plain);
    }

    #[test]
    fn binning() {
        let report = EvalReport {
            mpjpe: 0.0,
            pck50: 0.0,
            pck100: 0.0,
            per_sample: vec![1.0, 2.0, 3.0, 5.0],
            root_positions: vec![[0.52, 0.5], [0.55, 0.5], [0.75, 0.5], [0.9, 0.5]],
        };
        let b = binned_error_analysis(&report, 4).unwrap();
        assert_eq!(b.rows.iter().map(|r| r.count).sum::<usize>(), 4);
        assert_eq!(b.rows.len(), 3);
        // Bin centers 0.05, 0.25, 0.35 with means 1.5, 3, 5.
        let slope = b.slope().unwrap();
        let (xs, ys) = ([0.05, 0.25, 0.35], [1.5, 3.0, 5.0]);
        let mx = xs.iter().sum::<f64>() / 3.0;
        let my = ys.iter().sum::<f64>() / 3.0;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        assert!((slope - num / den).abs() < 1e-12);

        let centered = EvalReport {
            root_positions: vec![[0.5, 0.5]; 4],
            ..report
        };
        let b = binned_error_analysis(&centered, 5).unwrap();
        assert_eq!(b.rows.len(), 1);
        assert_eq!(b.rows[0].count, 4);
        assert!(b.slope().is_none());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { rotation: BackRotation::XOnly, ..ok.clone() }.validate().is_err());
        let json = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), ok);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
