//! Multi-seed experiment drivers for stick figures and cubes.
//!
//! Reports contain only deterministic quantities, so two runs of the same
//! config serialize to identical bytes.

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::lifting::{
    binned_error_analysis, evaluate, focal_robustness_sweep, rotation_ablation, train, BinnedErrors,
    EvalOptions, EvalReport, LiftingSet, Preprocessing, TrainConfig,
};
use crate::pcl::BackRotation;
use crate::synthetic::{gen_cube_dataset, gen_figure_dataset, DatasetSpec, Placement};

/// Seed of the training or test data for experiment seed `seed`.
pub fn data_seed(seed: u64, test: bool) -> u64 {
    seed * 1000 + if test { 2 } else { 1 }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(0.6, 0.6, 0.5, 0.5, 1000, 1000).expect("valid default camera")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureStudyConfig {
    pub camera: CameraIntrinsics,
    pub train_count: usize,
    pub test_count: usize,
    pub seeds: Vec<u64>,
    /// Shared training settings; `hidden` is the full width.
    pub train: TrainConfig,
    /// Width of the reduced-capacity PCL model.
    pub reduced_hidden: usize,
    pub focal_multipliers: Vec<f64>,
    pub bins: usize,
}

impl Default for FigureStudyConfig {
    fn default() -> Self {
        FigureStudyConfig {
            camera: default_camera(),
            train_count: 8000,
            test_count: 2000,
            seeds: vec![0, 1, 2],
            train: TrainConfig {
                hidden: 256,
                epochs: 40,
                ..Default::default()
            },
            reduced_hidden: 128,
            focal_multipliers: vec![0.5, 0.7, 1.0, 1.5, 2.0],
            bins: 6,
        }
    }
}

impl FigureStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.train_count == 0 || self.test_count == 0 || self.seeds.is_empty() {
            return Err(Error::InvalidInput("study needs samples and at least one seed".into()));
        }
        if self.reduced_hidden == 0 || self.bins == 0 {
            return Err(Error::InvalidInput("reduced_hidden and bins must be positive".into()));
        }
        if self.focal_multipliers.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidInput("focal multipliers must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalPoint {
    pub multiplier: f64,
    pub pcl: f64,
    pub rc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSeedResult {
    pub seed: u64,
    pub rc: f64,
    pub rc_x_only: f64,
    pub rc_xy_full: f64,
    pub pcl: f64,
    pub pcl_reduced: f64,
    pub rc_pck50: f64,
    pub pcl_pck50: f64,
    pub params_full: usize,
    pub params_reduced: usize,
    pub rc_bins: BinnedErrors,
    pub pcl_bins: BinnedErrors,
    pub rc_slope: Option<f64>,
    pub pcl_slope: Option<f64>,
    pub focal: Vec<FocalPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureStudyReport {
    pub config: FigureStudyConfig,
    pub seeds: Vec<FigureSeedResult>,
}

impl FigureStudyReport {
    pub fn median_of(&self, f: impl Fn(&FigureSeedResult) -> f64) -> f64 {
        median(&self.seeds.iter().map(f).collect::<Vec<_>>())
    }

    /// Median over seeds of each focal point, in multiplier order.
    pub fn median_focal(&self) -> Vec<FocalPoint> {
        self.config
            .focal_multipliers
            .iter()
            .enumerate()
            .map(|(i, &m)| FocalPoint {
                multiplier: m,
                pcl: self.median_of(|s| s.focal[i].pcl),
                rc: self.median_of(|s| s.focal[i].rc),
            })
            .collect()
    }
}

fn figure_set(cfg: &FigureStudyConfig, count: usize, seed: u64) -> Result<LiftingSet> {
    let spec = DatasetSpec::figures(count, Placement::General, cfg.camera, seed);
    Ok(LiftingSet {
        camera: cfg.camera,
        samples: gen_figure_dataset(&spec)?,
    })
}

fn slope_of(report: &EvalReport, bins: usize) -> Result<(BinnedErrors, Option<f64>)> {
    let b = binned_error_analysis(report, bins)?;
    let s = b.slope();
    Ok((b, s))
}

/// RC vs PCL on general placement, with rotation ablation, a reduced-width
/// PCL model and a test-time focal sweep, for every seed.
pub fn run_figure_study(cfg: &FigureStudyConfig, mut progress: impl FnMut(&str)) -> Result<FigureStudyReport> {
    cfg.validate()?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let train_set = figure_set(cfg, cfg.train_count, data_seed(seed, false))?;
        let test_set = figure_set(cfg, cfg.test_count, data_seed(seed, true))?;
        let base = TrainConfig {
            seed,
            rotation: BackRotation::None,
            focal_multiplier: 1.0,
            ..cfg.train.clone()
        };
        let arm = |preprocessing, hidden| TrainConfig {
            preprocessing,
            hidden,
            ..base.clone()
        };
        progress(&format!("seed {seed}: training rc"));
        let rc = train(&train_set, &arm(Preprocessing::Rc, base.hidden))?;
        progress(&format!("seed {seed}: training pcl"));
        let pcl = train(&train_set, &arm(Preprocessing::Pcl, base.hidden))?;
        progress(&format!("seed {seed}: training reduced pcl"));
        let reduced = train(&train_set, &arm(Preprocessing::Pcl, cfg.reduced_hidden))?;

        let plain = EvalOptions::default();
        let rc_report = evaluate(&rc, &test_set, &plain)?;
        let pcl_report = evaluate(&pcl, &test_set, &plain)?;
        let (rc_bins, rc_slope) = slope_of(&rc_report, cfg.bins)?;
        let (pcl_bins, pcl_slope) = slope_of(&pcl_report, cfg.bins)?;
        let pcl_sweep = focal_robustness_sweep(&pcl, &test_set, &cfg.focal_multipliers)?;
        let rc_sweep = focal_robustness_sweep(&rc, &test_set, &cfg.focal_multipliers)?;
        let focal = pcl_sweep
            .iter()
            .zip(&rc_sweep)
            .map(|((m, p), (_, r))| FocalPoint {
                multiplier: *m,
                pcl: p.mpjpe,
                rc: r.mpjpe,
            })
            .collect();
        seeds.push(FigureSeedResult {
            seed,
            rc: rc_report.mpjpe,
            rc_x_only: rotation_ablation(&rc, &test_set, BackRotation::XOnly)?.mpjpe,
            rc_xy_full: rotation_ablation(&rc, &test_set, BackRotation::XyFull)?.mpjpe,
            pcl: pcl_report.mpjpe,
            pcl_reduced: evaluate(&reduced, &test_set, &plain)?.mpjpe,
            rc_pck50: rc_report.pck50,
            pcl_pck50: pcl_report.pck50,
            params_full: pcl.mlp.param_count(),
            params_reduced: reduced.mlp.param_count(),
            rc_bins,
            pcl_bins,
            rc_slope,
            pcl_slope,
            focal,
        });
    }
    Ok(FigureStudyReport {
        config: cfg.clone(),
        seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubeStudyConfig {
    pub camera: CameraIntrinsics,
    pub train_count: usize,
    pub test_count: usize,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl Default for CubeStudyConfig {
    fn default() -> Self {
        CubeStudyConfig {
            camera: default_camera(),
            train_count: 8000,
            test_count: 2000,
            seeds: vec![0, 1, 2],
            train: TrainConfig {
                hidden: 128,
                epochs: 30,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeSeedResult {
    pub seed: u64,
    pub rc_general: f64,
    pub pcl_general: f64,
    pub rc_centered: f64,
    pub pcl_centered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeStudyReport {
    pub config: CubeStudyConfig,
    pub seeds: Vec<CubeSeedResult>,
}

impl CubeStudyReport {
    pub fn median_of(&self, f: impl Fn(&CubeSeedResult) -> f64) -> f64 {
        median(&self.seeds.iter().map(f).collect::<Vec<_>>())
    }
}

fn cube_set(cfg: &CubeStudyConfig, count: usize, placement: Placement, seed: u64) -> Result<LiftingSet> {
    let spec = DatasetSpec::cubes(count, placement, cfg.camera, seed);
    Ok(LiftingSet {
        camera: cfg.camera,
        samples: gen_cube_dataset(&spec)?.into_iter().map(|(_, s)| s).collect(),
    })
}

/// Trains on centered cubes and tests on centered and general placement.
pub fn run_cube_study(cfg: &CubeStudyConfig, mut progress: impl FnMut(&str)) -> Result<CubeStudyReport> {
    cfg.train.validate()?;
    if cfg.train_count == 0 || cfg.test_count == 0 || cfg.seeds.is_empty() {
        return Err(Error::InvalidInput("study needs samples and at least one seed".into()));
    }
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let train_set = cube_set(cfg, cfg.train_count, Placement::Centered, data_seed(seed, false))?;
        let general = cube_set(cfg, cfg.test_count, Placement::General, data_seed(seed, true))?;
        let centered = cube_set(cfg, cfg.test_count, Placement::Centered, data_seed(seed, true) + 1)?;
        let mut mpjpe = Vec::new();
        for preprocessing in [Preprocessing::Rc, Preprocessing::Pcl] {
            progress(&format!("seed {seed}: training {preprocessing}"));
            let cfg = TrainConfig {
                preprocessing,
                seed,
                rotation: BackRotation::None,
                focal_multiplier: 1.0,
                ..cfg.train.clone()
            };
            let model = train(&train_set, &cfg)?;
            let opts = EvalOptions::default();
            mpjpe.push((evaluate(&model, &general, &opts)?.mpjpe, evaluate(&model, &centered, &opts)?.mpjpe));
        }
        seeds.push(CubeSeedResult {
            seed,
            rc_general: mpjpe[0].0,
            pcl_general: mpjpe[1].0,
            rc_centered: mpjpe[0].1,
            pcl_centered: mpjpe[1].1,
        });
    }
    Ok(CubeStudyReport {
        config: cfg.clone(),
        seeds,
    })
}
