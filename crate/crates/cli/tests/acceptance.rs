//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the criteria execute sequentially
//! (several are timed) and the report is always printed. The process fails
//! if any criterion fails, except those listed in `KNOWN_RED`; a listed
//! criterion that starts passing also fails the run so the list stays true.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Point2, Vector2, Vector3};
use pcl_core::diffcheck::{compare_focal_options, focal_target_grid, gradcheck_battery, patch_center_scales};
use pcl_core::image_warp::perspective_crop_image;
use pcl_core::pcl::{build_virtual_camera, crop_scale, pcl_inv, warp_matrix};
use pcl_core::study::{run_cube_study, run_figure_study, CubeStudyConfig, FigureStudyConfig, FigureStudyReport};
use pcl_core::synthetic::{gen_cube_dataset, rasterize_cube, DatasetSpec, Placement, RenderOptions};
use pcl_core::{CameraIntrinsics, CropTarget, FocalOption, PclOptions, Pose3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail at desk scale; see the rotation ablation notes in the README.
const KNOWN_RED: &[u32] = &[8];

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, pass: bool, detail: String) -> Verdict {
    Verdict { id, pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 5];
    let mut projected = 0usize;
    let configs = 10_000;
    for _ in 0..configs {
        let intr = CameraIntrinsics::new(
            rng.random_range(0.3..1.5),
            rng.random_range(0.3..1.5),
            rng.random_range(0.3..0.7),
            rng.random_range(0.3..0.7),
            640,
            480,
        )
        .unwrap();
        let center = Point2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let s = Vector2::new(rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let opts = PclOptions {
            focal: [FocalOption::A, FocalOption::B, FocalOption::C][rng.random_range(0..3)],
            preserve_aspect: rng.random_bool(0.5),
            ..Default::default()
        };
        let tgt = CropTarget::from_image_point(center, s, &intr).unwrap();
        let vc = build_virtual_camera(&tgt, &intr, &opts).unwrap();
        let r = *vc.rotation.matrix();

        let axis = Vector3::new(tgt.p().x, tgt.p().y, 1.0).normalize();
        let rot_err = (r.transpose() * r - Matrix3::identity())
            .abs()
            .max()
            .max((r.determinant() - 1.0).abs())
            .max((r.column(2) - axis).abs().max());
        worst[0] = worst[0].max(rot_err);

        let w = warp_matrix(&vc, &intr);
        let c = w.apply(center).unwrap();
        worst[1] = worst[1].max((c.x - 0.5).abs().max((c.y - 0.5).abs()));
        worst[2] = worst[2].max((w.matrix() * w.inverse_matrix() - Matrix3::identity()).abs().max());

        // A point in front of both cameras, through the two projections.
        let a = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0);
        let x = vc.rotation * a * rng.random_range(500.0..8000.0);
        if let (Ok(real), Ok(virt)) = (intr.project(&x), vc.intrinsics.project(&vc.to_virtual(&x))) {
            let warped = w.apply(real).unwrap();
            worst[3] = worst[3].max((warped - virt).abs().max());
            projected += 1;
        }

        let pose = Pose3D::new(
            (0..5)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1000.0..1000.0),
                        rng.random_range(-1000.0..1000.0),
                        rng.random_range(-1000.0..1000.0),
                    )
                })
                .collect(),
            0,
        )
        .unwrap();
        let back = pcl_inv(&pose, &vc);
        for i in 0..5 {
            worst[4] = worst[4].max((back.joints[i].norm() - pose.joints[i].norm()).abs());
            for j in i + 1..5 {
                let d0 = (pose.joints[i] - pose.joints[j]).norm();
                let d1 = (back.joints[i] - back.joints[j]).norm();
                worst[4] = worst[4].max((d0 - d1).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    let limits = [1e-9, 1e-9, 1e-10, 1e-9, 1e-9];
    let pass = worst.iter().zip(&limits).all(|(w, l)| w <= l) && projected == configs && elapsed.as_secs_f64() < 10.0;
    verdict(
        1,
        pass,
        format!(
            "{configs} configs: rotation {:.1e}, center {:.1e}, inverse {:.1e}, projection {:.1e} ({projected} pts), rigidity {:.1e}; {}",
            worst[0], worst[1], worst[2], worst[3], worst[4], secs(elapsed)
        ),
    )
}

fn criterion_2() -> Verdict {
    let intr = CameraIntrinsics::new(0.6, 0.6, 0.5, 0.5, 1000, 1000).unwrap();
    let s = Vector2::new(0.25, 0.25);
    let targets = focal_target_grid(5);
    let mut c_err: f64 = 0.0;
    for p in &targets {
        let tgt = CropTarget::new(*p, s).unwrap();
        let scale = patch_center_scales(&intr, &tgt, &PclOptions::with_focal(FocalOption::C)).unwrap();
        c_err = c_err.max((scale - s).abs().max());
    }
    let grid_ok = targets.len() == 25 && targets.iter().all(|p| p.norm() <= 1.0 + 1e-12);
    let rows = compare_focal_options(&intr, &targets, s).unwrap();
    let c_flagged = rows.iter().filter(|r| r.option == FocalOption::C).all(|r| r.preserved);

    let unit = compare_focal_options(&intr, &[Vector2::new(1.0, 0.0)], s).unwrap();
    let ratio = |o| unit.iter().find(|r| r.option == o).unwrap();
    let (a, b) = (ratio(FocalOption::A), ratio(FocalOption::B));
    let a_fails = (a.ratio_x - 1.0).abs() > 0.01;
    let b_fails = (b.ratio_x - 1.0).abs() > 0.01;
    let a_half = (a.ratio_x - 0.5).abs() <= 1e-6;
    verdict(
        2,
        grid_ok && c_err <= 1e-6 && c_flagged && a_fails && b_fails && a_half,
        format!(
            "option C max |scale - s| {c_err:.1e} on 25 targets; at p=(1,0) A x-ratio {:.7}, B x-ratio {:.7}",
            a.ratio_x, b.ratio_x
        ),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let rows = gradcheck_battery(3, 50).unwrap();
    let elapsed = start.elapsed();
    let summary: Vec<String> = rows.iter().map(|r| format!("{} {:.1e} (abs {:.1e})", r.name, r.max_error, r.max_abs_diff)).collect();
    let tolerances_pinned = rows
        .iter()
        .all(|r| r.tolerance == if r.name.starts_with("bilinear") || r.name.starts_with("crop") { 1e-4 } else { 1e-5 });
    verdict(
        3,
        rows.len() == 5 && tolerances_pinned && rows.iter().all(|r| r.passed()) && elapsed.as_secs_f64() < 30.0,
        format!("{}; {}", summary.join(", "), secs(elapsed)),
    )
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let cam = CameraIntrinsics::new(0.6, 0.6, 0.5, 0.5, 512, 512).unwrap();
    let spec = DatasetSpec::cubes(100, Placement::General, cam, 11);
    let opts = RenderOptions {
        supersample: 4,
        ..Default::default()
    };
    let mut diffs = Vec::new();
    let mut off_center = 0;
    for (cube, sample) in gen_cube_dataset(&spec).unwrap() {
        let root = sample.pose2d.joints[0];
        off_center += ((root.x - 0.5).abs() > 1e-3 || (root.y - 0.5).abs() > 1e-3) as usize;
        let real = rasterize_cube(&cube, &cam, 512, 512, &opts).unwrap();
        let sc = crop_scale(&sample.pose2d, 0.1).unwrap();
        let side = sc.x.max(sc.y);
        let tgt = CropTarget::from_image_point(root, Vector2::new(side, side), &cam).unwrap();
        let (warped, vc) = perspective_crop_image(&real, &cam, &tgt, &PclOptions::default(), 128, 128).unwrap();
        let direct = rasterize_cube(&cube.in_rotated_frame(&vc.rotation), &vc.intrinsics, 128, 128, &opts).unwrap();
        diffs.push(warped.mean_abs_diff(&direct).unwrap());
    }
    let elapsed = start.elapsed();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let worst = diffs.iter().cloned().fold(0.0, f64::max);
    verdict(
        4,
        off_center == 100 && worst < 2e-2 && elapsed.as_secs_f64() < 30.0,
        format!("100 cubes at 128x128: mean {mean:.4}, worst {worst:.4}; {}", secs(elapsed)),
    )
}

fn criterion_5(r: &FigureStudyReport, elapsed: Duration) -> Verdict {
    let rc = r.median_of(|s| s.rc);
    let pcl = r.median_of(|s| s.pcl);
    let rc_slope = r.median_of(|s| s.rc_slope.unwrap_or(f64::NAN));
    let pcl_slope = r.median_of(|s| s.pcl_slope.unwrap_or(f64::NAN));
    verdict(
        5,
        pcl <= 0.9 * rc && pcl_slope < rc_slope && elapsed.as_secs_f64() < 600.0,
        format!(
            "median MPJPE PCL {pcl:.1} vs RC {rc:.1} mm (ratio {:.3}); slope PCL {pcl_slope:.1} vs RC {rc_slope:.1}; study {}",
            pcl / rc,
            secs(elapsed)
        ),
    )
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let r = run_cube_study(&CubeStudyConfig::default(), |m| eprintln!("  cubes: {m}")).unwrap();
    let elapsed = start.elapsed();
    let rc_g = r.median_of(|s| s.rc_general);
    let pcl_g = r.median_of(|s| s.pcl_general);
    let rc_c = r.median_of(|s| s.rc_centered);
    let pcl_c = r.median_of(|s| s.pcl_centered);
    let parity = (pcl_c - rc_c).abs() / rc_c;
    verdict(
        6,
        pcl_g <= 0.8 * rc_g && parity <= 0.1,
        format!(
            "general PCL {pcl_g:.1} vs RC {rc_g:.1} mm (ratio {:.3}); centered PCL {pcl_c:.1} vs RC {rc_c:.1} mm (gap {:.1}%); {}",
            pcl_g / rc_g,
            100.0 * parity,
            secs(elapsed)
        ),
    )
}

fn criterion_7(r: &FigureStudyReport) -> Verdict {
    let curve = r.median_focal();
    let beats = curve
        .iter()
        .filter(|f| (0.7..=1.5).contains(&f.multiplier))
        .all(|f| f.pcl < f.rc);
    let best = curve
        .iter()
        .min_by(|a, b| a.pcl.total_cmp(&b.pcl))
        .map(|f| f.multiplier)
        .unwrap_or(f64::NAN);
    let points: Vec<String> = curve
        .iter()
        .map(|f| format!("{}x {:.1}/{:.1}", f.multiplier, f.pcl, f.rc))
        .collect();
    verdict(
        7,
        beats && best == 1.0,
        format!("PCL/RC mm: {}; PCL minimum at {best}x", points.join(", ")),
    )
}

/// Sample standard deviation of the per-seed gaps, the seed noise allowance.
fn gap_noise(gaps: &[f64]) -> f64 {
    if gaps.len() < 2 {
        return 0.0;
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (gaps.len() - 1) as f64).sqrt()
}

fn criterion_8(r: &FigureStudyReport) -> Verdict {
    let chain: [(&str, fn(&pcl_core::study::FigureSeedResult) -> f64); 4] = [
        ("RC", |s| s.rc),
        ("RC+x", |s| s.rc_x_only),
        ("RC+xy", |s| s.rc_xy_full),
        ("PCL", |s| s.pcl),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for w in chain.windows(2) {
        let gaps: Vec<f64> = r.seeds.iter().map(|s| w[0].1(s) - w[1].1(s)).collect();
        let gap = pcl_core::study::median(&gaps);
        let noise = gap_noise(&gaps);
        pass &= gap >= -noise;
        parts.push(format!("{}-{} {gap:+.1} (noise {noise:.1})", w[0].0, w[1].0));
    }
    let medians: Vec<String> = chain.iter().map(|(n, f)| format!("{n} {:.1}", r.median_of(f))).collect();
    verdict(8, pass, format!("medians {}; gaps {}", medians.join(", "), parts.join(", ")))
}

fn criterion_9(r: &FigureStudyReport) -> Verdict {
    let rc = r.median_of(|s| s.rc);
    let half = r.median_of(|s| s.pcl_reduced);
    let full = r.median_of(|s| s.pcl);
    let s = &r.seeds[0];
    verdict(
        9,
        half <= rc && r.config.reduced_hidden * 2 == r.config.train.hidden,
        format!(
            "PCL width {} ({} params) {half:.1} mm vs RC width {} ({} params) {rc:.1} mm; PCL full width {full:.1} mm",
            r.config.reduced_hidden, s.params_reduced, r.config.train.hidden, s.params_full
        ),
    )
}

fn pcl(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_pcl"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn criterion_10() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cam.json"), r#"{"fx":0.6,"fy":0.6,"cx":0.5,"cy":0.5,"width":64,"height":64}"#).unwrap();
    let runs: &[&[&str]] = &[
        &["gen", "--kind", "figure", "--placement", "general", "--count", "400", "--seed", "1", "--camera", "cam.json", "--out", "train.jsonl"],
        &["gen", "--kind", "figure", "--placement", "general", "--count", "100", "--seed", "2", "--camera", "cam.json", "--out", "test.jsonl"],
        &["gen", "--kind", "cube", "--placement", "general", "--count", "4", "--seed", "3", "--camera", "cam.json", "--images", "img", "--out", "cubes.jsonl"],
        &["warp-image", "--camera", "cam.json", "--p", "0.3,0.6", "--s", "0.4,0.4", "img/000000.ppm", "crop.ppm"],
        &["warp-keypoints", "--camera", "cam.json", "--in", "test.jsonl", "--out", "kps.jsonl"],
        &["warp-sequence", "--camera", "cam.json", "--in", "test.jsonl", "--out", "seq.json"],
        &["train", "--data", "train.jsonl", "--camera", "cam.json", "--preprocessing", "rc", "--epochs", "3", "--hidden", "32", "--seed", "4", "--out", "rc.json", "--curve", "rc.csv"],
        &["train", "--data", "train.jsonl", "--camera", "cam.json", "--preprocessing", "pcl", "--epochs", "3", "--hidden", "32", "--seed", "4", "--out", "pcl.json"],
        &["eval", "--model", "pcl.json", "--data", "test.jsonl", "--camera", "cam.json", "--out", "eval.csv", "--summary", "eval.json"],
        &["sweep-focal", "--model", "rc.json", "--model", "pcl.json", "--data", "test.jsonl", "--camera", "cam.json", "--out", "focal.csv"],
        &["sweep-capacity", "--train", "train.jsonl", "--test", "test.jsonl", "--camera", "cam.json", "--widths", "8,16", "--epochs", "2", "--out", "cap.csv"],
        &["ablate-rotation", "--model", "rc.json", "--pcl-model", "pcl.json", "--data", "test.jsonl", "--camera", "cam.json", "--out", "ablate.csv"],
        &["bin-errors", "--model", "rc.json", "--model", "pcl.json", "--data", "test.jsonl", "--camera", "cam.json", "--out", "bins.csv"],
        &["gradcheck", "--configs", "3", "--out", "grad.csv"],
        &["compare-focal-options", "--out", "focal_options.csv"],
    ];
    let mut failures = Vec::new();
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        if !pcl(d, args) {
            failures.push(format!("{} failed", args[0]));
            continue;
        }
        let primary = args
            .iter()
            .position(|a| *a == "--out")
            .map(|k| args[k + 1])
            .unwrap_or_else(|| args[args.len() - 1]);
        let manifest = format!("{primary}.manifest.json");
        let again = format!("rerun{i}");
        if !pcl(d, &["rerun", &manifest, "--out-dir", &again]) {
            failures.push(format!("{} rerun differs", args[0]));
            continue;
        }
        // Compare independently of the rerun's own check.
        let m: serde_json::Value = serde_json::from_slice(&fs::read(d.join(&manifest)).unwrap()).unwrap();
        for out in m["outputs"].as_array().unwrap() {
            let path = Path::new(out["path"].as_str().unwrap());
            let copy = d.join(&again).join(path.file_name().unwrap());
            let copy = if copy.exists() {
                copy
            } else {
                d.join(&again).join(path.parent().unwrap().file_name().unwrap()).join(path.file_name().unwrap())
            };
            if fs::read(d.join(path)).ok() != fs::read(&copy).ok() {
                failures.push(format!("{} differs", path.display()));
            }
            files += 1;
        }
    }
    verdict(
        10,
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} commands, {files} output files reproduced byte for byte; {}", runs.len(), secs(start.elapsed()))
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];
    for v in &verdicts {
        report(v);
    }
    let start = Instant::now();
    let study = run_figure_study(&FigureStudyConfig::default(), |m| eprintln!("  figures: {m}")).unwrap();
    let elapsed = start.elapsed();
    for v in [
        criterion_5(&study, elapsed),
        criterion_6(),
        criterion_7(&study),
        criterion_8(&study),
        criterion_9(&study),
        criterion_10(),
    ] {
        report(&v);
        verdicts.push(v);
    }
    verdicts.sort_by_key(|v| v.id);

    let unexpected_red: Vec<u32> = verdicts.iter().filter(|v| !v.pass && !KNOWN_RED.contains(&v.id)).map(|v| v.id).collect();
    let unexpected_green: Vec<u32> = verdicts.iter().filter(|v| v.pass && KNOWN_RED.contains(&v.id)).map(|v| v.id).collect();
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria pass; known red: {KNOWN_RED:?}", verdicts.len());
    if !unexpected_red.is_empty() || !unexpected_green.is_empty() {
        println!("unexpected failures: {unexpected_red:?}; known-red criteria now passing: {unexpected_green:?}");
        std::process::exit(1);
    }
}

fn report(v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let note = if !v.pass && KNOWN_RED.contains(&v.id) { " [known red]" } else { "" };
    println!("criterion {:>2}: {tag}{note}  {}", v.id, v.detail);
}
