//! Closed-form Jacobians of the crop geometry and finite-difference oracles.

use nalgebra::{DMatrix, Matrix3, Point2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::image_warp::{
    bilinear_sample, grad_bilinear, lattice_distance, make_grid, pixel_center, Image, Padding, SampleGrid,
};
use crate::mlp::Mlp;
use crate::pcl::{
    build_virtual_camera, rotation_from_target, virtual_focal, warp_matrix, CropTarget, FocalOption,
    PclOptions,
};

/// Default central-difference step for geometric quantities.
pub const GEOMETRY_STEP: f64 = 1e-6;
/// Default central-difference step for image sampling, in source pixels.
pub const PIXEL_STEP: f64 = 1e-4;
/// Floor of the relative-error denominator, and the absolute tolerance
/// below which two derivatives are considered equal.
pub const REL_ERR_FLOOR: f64 = 1e-7;

/// Dense Jacobian with semantic labels for its rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub entries: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl Jacobian {
    pub fn new(entries: DMatrix<f64>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        if entries.nrows() != row_labels.len() || entries.ncols() != col_labels.len() {
            return Err(Error::InvalidInput(format!(
                "jacobian is {}x{} but has {} row and {} column labels",
                entries.nrows(),
                entries.ncols(),
                row_labels.len(),
                col_labels.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("jacobian has non-finite entries".into()));
        }
        Ok(Jacobian {
            entries,
            row_labels,
            col_labels,
        })
    }

    fn unlabeled(entries: DMatrix<f64>) -> Result<Self> {
        let rows = (0..entries.nrows()).map(|i| format!("y{i}")).collect();
        let cols = (0..entries.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(entries, rows, cols)
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[(r, c)]
    }

    /// Largest entrywise [`check_error`] against `other`.
    pub fn max_relative_error(&self, other: &Jacobian) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| check_error(*a, *b))
            .fold(0.0, f64::max)
    }
}

/// `|a - b| / max(|a|, |b|, 1e-7)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// [`relative_error`], except that pairs within the absolute floor count as equal.
pub fn check_error(a: f64, b: f64) -> f64 {
    if (a - b).abs() <= REL_ERR_FLOOR {
        0.0
    } else {
        relative_error(a, b)
    }
}

/// Central-difference Jacobian of `f` at `x`.
pub fn finite_difference<F>(f: F, x: &[f64], h: f64) -> Result<Jacobian>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let plus = f(&xp)?;
        xp[i] = x[i] - h;
        let minus = f(&xp)?;
        xp[i] = x[i];
        if plus.len() != minus.len() {
            return Err(Error::InvalidInput("function output length changed".into()));
        }
        cols.push(
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let rows = cols.first().map_or(0, Vec::len);
    Jacobian::unlabeled(DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r]))
}

fn matrix_labels(prefix: &str) -> Vec<String> {
    (1..=3)
        .flat_map(|r| (1..=3).map(move |c| format!("{prefix}{r}{c}")))
        .collect()
}

fn param_labels() -> Vec<String> {
    ["p_x", "p_y", "s_x", "s_y"].iter().map(|s| s.to_string()).collect()
}

/// Partial derivatives of the rotation matrix w.r.t. `p_x` and `p_y`.
fn rotation_partials(p: &Vector2<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let (px, py) = (p.x, p.y);
    let a = 1.0 + px * px;
    let sa = a.sqrt();
    let a32 = a * sa;
    let n2 = a + py * py;
    let n = n2.sqrt();
    let n3 = n2 * n;
    let g = 1.0 / (n * sa);
    let dg_dx = -px * g * (1.0 / n2 + 1.0 / a);
    let dg_dy = -py * g / n2;

    let dx = Matrix3::new(
        -px / a32,
        -py * g - px * py * dg_dx,
        1.0 / n - px * px / n3,
        0.0,
        px / (sa * n) - sa * px / n3,
        -px * py / n3,
        -1.0 / a32,
        -py * dg_dx,
        -px / n3,
    );
    let dy = Matrix3::new(
        0.0,
        -px * g - px * py * dg_dy,
        -px * py / n3,
        0.0,
        -sa * py / n3,
        1.0 / n - py * py / n3,
        0.0,
        -g - py * dg_dy,
        -py / n3,
    );
    (dx, dy)
}

fn flatten(m: &Matrix3<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..3).flat_map(move |r| (0..3).map(move |c| m[(r, c)]))
}

/// Closed-form 9×2 Jacobian of the row-major rotation entries w.r.t. `p`.
pub fn d_rotation_d_p(p: &Vector2<f64>) -> Jacobian {
    let (dx, dy) = rotation_partials(p);
    let mut m = DMatrix::zeros(9, 2);
    for (i, v) in flatten(&dx).enumerate() {
        m[(i, 0)] = v;
    }
    for (i, v) in flatten(&dy).enumerate() {
        m[(i, 1)] = v;
    }
    Jacobian::new(m, matrix_labels("R"), vec!["p_x".into(), "p_y".into()])
        .expect("closed-form rotation partials are finite for finite p")
}

/// Derivative of the unscaled virtual focal length w.r.t. `(p_x, p_y)`.
fn d_virtual_focal_d_p(p: &Vector2<f64>, intr: &CameraIntrinsics, opt: FocalOption) -> [Vector2<f64>; 2] {
    let (px, py) = (p.x, p.y);
    let (fx, fy) = (intr.fx(), intr.fy());
    let a = 1.0 + px * px;
    let sa = a.sqrt();
    let n2 = a + py * py;
    let n = n2.sqrt();
    match opt {
        FocalOption::A => [Vector2::zeros(), Vector2::zeros()],
        FocalOption::B => [
            Vector2::new(fx * px / n, fy * px / n),
            Vector2::new(fx * py / n, fy * py / n),
        ],
        FocalOption::C => [
            Vector2::new(
                fx * (px / n * sa + n * px / sa),
                fy * (2.0 * px / sa - n2 * px / (a * sa)),
            ),
            Vector2::new(fx * py / n * sa, fy * 2.0 * py / sa),
        ],
    }
}

/// Derivatives of the scaled virtual focal lengths w.r.t. `(p_x, p_y, s_x, s_y)`.
fn d_focal_d_params(tgt: &CropTarget, intr: &CameraIntrinsics, opts: &PclOptions) -> [Vector2<f64>; 4] {
    let s = tgt.s();
    let h = virtual_focal(tgt, intr, opts.focal);
    let [dh_px, dh_py] = d_virtual_focal_d_p(&tgt.p(), intr, opts.focal);
    let mut d = [
        dh_px.component_div(&s),
        dh_py.component_div(&s),
        Vector2::new(-h.x / (s.x * s.x), 0.0),
        Vector2::new(0.0, -h.y / (s.y * s.y)),
    ];
    if opts.preserve_aspect {
        let f = h.component_div(&s);
        let k = if f.x <= f.y { 0 } else { 1 };
        for v in d.iter_mut() {
            let dk = v[k];
            *v = Vector2::new(dk, dk);
        }
    }
    d
}

/// Partial derivatives of the warp matrix w.r.t. `(p_x, p_y, s_x, s_y)`.
fn warp_partials(tgt: &CropTarget, intr: &CameraIntrinsics, opts: &PclOptions) -> Result<[Matrix3<f64>; 4]> {
    let vc = build_virtual_camera(tgt, intr, opts)?;
    let kv = vc.intrinsics.as_matrix();
    let rt = vc.rotation.matrix().transpose();
    let kinv = intr.inverse_matrix();
    let (drx, dry) = rotation_partials(&tgt.p());
    let df = d_focal_d_params(tgt, intr, opts);
    let dkv = |d: &Vector2<f64>| Matrix3::from_diagonal(&Vector3::new(d.x, d.y, 0.0));
    Ok([
        dkv(&df[0]) * rt * kinv + kv * drx.transpose() * kinv,
        dkv(&df[1]) * rt * kinv + kv * dry.transpose() * kinv,
        dkv(&df[2]) * rt * kinv,
        dkv(&df[3]) * rt * kinv,
    ])
}

/// Closed-form 9×4 Jacobian of the warp entries w.r.t. `(p_x, p_y, s_x, s_y)`.
pub fn d_warp_d_params(intr: &CameraIntrinsics, tgt: &CropTarget, opts: &PclOptions) -> Result<Jacobian> {
    let parts = warp_partials(tgt, intr, opts)?;
    let mut m = DMatrix::zeros(9, 4);
    for (c, d) in parts.iter().enumerate() {
        for (r, v) in flatten(d).enumerate() {
            m[(r, c)] = v;
        }
    }
    Jacobian::new(m, matrix_labels("G"), param_labels())
}

fn target_from_params(x: &[f64]) -> Result<CropTarget> {
    CropTarget::new(Vector2::new(x[0], x[1]), Vector2::new(x[2], x[3]))
}

/// Row-major warp entries as a function of `(p_x, p_y, s_x, s_y)`, for oracles.
pub fn warp_entries(intr: &CameraIntrinsics, x: &[f64], opts: &PclOptions) -> Result<Vec<f64>> {
    let tgt = target_from_params(x)?;
    let vc = build_virtual_camera(&tgt, intr, opts)?;
    Ok(flatten(warp_matrix(&vc, intr).matrix()).collect())
}

pub fn rotation_entries(x: &[f64]) -> Vec<f64> {
    flatten(rotation_from_target(&Vector2::new(x[0], x[1])).matrix()).collect()
}

/// Crop pixel values as a function of `(p_x, p_y, s_x, s_y)`, for oracles.
pub fn crop_values(
    img: &Image,
    intr: &CameraIntrinsics,
    x: &[f64],
    opts: &PclOptions,
    out_h: usize,
    out_w: usize,
) -> Result<Vec<f64>> {
    let tgt = target_from_params(x)?;
    let vc = build_virtual_camera(&tgt, intr, opts)?;
    let grid = make_grid(&warp_matrix(&vc, intr), out_h, out_w)?;
    Ok(bilinear_sample(img, &grid, Padding::Zeros).into_data())
}

/// Jacobian of every crop pixel value w.r.t. `(p_x, p_y, s_x, s_y)`.
///
/// Chains the bilinear grid gradient with the derivative of the inverse
/// warp, `d(Γ⁻¹) = -Γ⁻¹ · dΓ · Γ⁻¹`, through the dehomogenization.
pub fn d_crop_d_params(
    img: &Image,
    intr: &CameraIntrinsics,
    tgt: &CropTarget,
    opts: &PclOptions,
    out_h: usize,
    out_w: usize,
) -> Result<Jacobian> {
    let vc = build_virtual_camera(tgt, intr, opts)?;
    let warp = warp_matrix(&vc, intr);
    let grid = make_grid(&warp, out_h, out_w)?;
    let gg = grad_bilinear(img, &grid);
    let m = warp.inverse_matrix();
    let dm: Vec<Matrix3<f64>> = warp_partials(tgt, intr, opts)?
        .iter()
        .map(|d| -m * d * m)
        .collect();
    let ch = img.channels();
    let mut jac = DMatrix::zeros(out_h * out_w * ch, 4);
    for r in 0..out_h {
        for c in 0..out_w {
            let q = pixel_center(r, c, out_h, out_w).to_homogeneous();
            let h = m * q;
            let (u, v) = (h.x / h.z, h.y / h.z);
            let pix = r * out_w + c;
            for (k, dmk) in dm.iter().enumerate() {
                let dh = dmk * q;
                let du = (dh.x - u * dh.z) / h.z;
                let dv = (dh.y - v * dh.z) / h.z;
                for ci in 0..ch {
                    let i = pix * ch + ci;
                    jac[(i, k)] = gg.du[i] * du + gg.dv[i] * dv;
                }
            }
        }
    }
    let rows = (0..out_h * out_w * ch)
        .map(|i| format!("px{}c{}", i / ch, i % ch))
        .collect();
    Jacobian::new(jac, rows, param_labels())
}

/// Step, in virtual normalized image units, for measuring patch-center scales.
pub const SCALE_STEP: f64 = 1e-6;

/// Real-image displacement per unit virtual-image displacement along each
/// axis at the patch center, by central differences of the inverse warp.
pub fn patch_center_scales(intr: &CameraIntrinsics, tgt: &CropTarget, opts: &PclOptions) -> Result<Vector2<f64>> {
    let vc = build_virtual_camera(tgt, intr, opts)?;
    let warp = warp_matrix(&vc, intr);
    let c = Point2::new(0.5, 0.5);
    let h = SCALE_STEP;
    let du = warp.apply_inverse(c + Vector2::new(h, 0.0))? - warp.apply_inverse(c - Vector2::new(h, 0.0))?;
    let dv = warp.apply_inverse(c + Vector2::new(0.0, h))? - warp.apply_inverse(c - Vector2::new(0.0, h))?;
    Ok(Vector2::new(du.x / (2.0 * h), dv.y / (2.0 * h)))
}

/// Relative tolerance for calling a scale ratio preserved.
pub const SCALE_RATIO_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FocalScaleRow {
    pub p_x: f64,
    pub p_y: f64,
    pub option: FocalOption,
    /// Crop size over measured scale; 1 when the crop covers exactly `s`.
    pub ratio_x: f64,
    pub ratio_y: f64,
    pub preserved: bool,
}

/// `n × n` grid of camera-plane targets on `[-r, r]²` with `r = 1/√2`, so
/// every target satisfies `‖p‖ ≤ 1`.
pub fn focal_target_grid(n: usize) -> Vec<Vector2<f64>> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let at = |i: usize| if n == 1 { 0.0 } else { -r + 2.0 * r * i as f64 / (n - 1) as f64 };
    (0..n)
        .flat_map(|j| (0..n).map(move |i| Vector2::new(at(i), at(j))))
        .collect()
}

/// Measured patch-center scale ratios of every focal option at every target.
pub fn compare_focal_options(intr: &CameraIntrinsics, targets: &[Vector2<f64>], s: Vector2<f64>) -> Result<Vec<FocalScaleRow>> {
    let mut rows = Vec::with_capacity(targets.len() * 3);
    for p in targets {
        let tgt = CropTarget::new(*p, s)?;
        for option in [FocalOption::A, FocalOption::B, FocalOption::C] {
            let scale = patch_center_scales(intr, &tgt, &PclOptions::with_focal(option))?;
            let (ratio_x, ratio_y) = (s.x / scale.x, s.y / scale.y);
            rows.push(FocalScaleRow {
                p_x: p.x,
                p_y: p.y,
                option,
                ratio_x,
                ratio_y,
                preserved: (ratio_x - 1.0).abs() <= SCALE_RATIO_TOL && (ratio_y - 1.0).abs() <= SCALE_RATIO_TOL,
            });
        }
    }
    Ok(rows)
}

/// One line of the gradient-check battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    /// Largest raw |analytic - numeric|, including entries under the floor.
    pub max_abs_diff: f64,
    pub tolerance: f64,
}

#[derive(Default)]
struct Worst {
    rel: f64,
    abs: f64,
}

impl Worst {
    fn add(&mut self, a: f64, b: f64) {
        self.rel = self.rel.max(check_error(a, b));
        self.abs = self.abs.max((a - b).abs());
    }

    fn jacobian(&mut self, a: &Jacobian, n: &Jacobian) {
        for (x, y) in a.entries.iter().zip(n.entries.iter()) {
            self.add(*x, *y);
        }
    }
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

/// Compares every analytic Jacobian against central differences.
///
/// Geometry Jacobians use tolerance 1e-5, image-level ones 1e-4.
pub fn gradcheck_battery(seed: u64, configs: usize) -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intr = CameraIntrinsics::new(0.6, 0.75, 0.48, 0.53, 800, 600)?;
    let mut rows = Vec::new();

    let mut worst = Worst::default();
    for _ in 0..configs {
        let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let a = d_rotation_d_p(&Vector2::new(p[0], p[1]));
        let n = finite_difference(|x| Ok(rotation_entries(x)), &p, GEOMETRY_STEP)?;
        worst.jacobian(&a, &n);
    }
    rows.push(GradcheckRow {
        name: "rotation wrt p".into(),
        cases: configs,
        max_error: worst.rel,
        max_abs_diff: worst.abs,
        tolerance: 1e-5,
    });

    let mut worst = Worst::default();
    let mut cases = 0;
    for i in 0..configs {
        let opts = PclOptions {
            focal: [FocalOption::A, FocalOption::B, FocalOption::C][i % 3],
            preserve_aspect: i % 2 == 0,
            ..Default::default()
        };
        let x = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.1..1.0),
            rng.random_range(0.1..1.0),
        ];
        let tgt = target_from_params(&x)?;
        let h = virtual_focal(&tgt, &intr, opts.focal).component_div(&tgt.s());
        // The aspect rule takes a minimum; skip configurations at its kink.
        if opts.preserve_aspect && (h.x - h.y).abs() < 1e-3 * h.x {
            continue;
        }
        let a = d_warp_d_params(&intr, &tgt, &opts)?;
        let n = finite_difference(|x| warp_entries(&intr, x, &opts), &x, GEOMETRY_STEP)?;
        worst.jacobian(&a, &n);
        cases += 1;
    }
    rows.push(GradcheckRow {
        name: "warp wrt (p, s)".into(),
        cases,
        max_error: worst.rel,
        max_abs_diff: worst.abs,
        tolerance: 1e-5,
    });

    let img = Image::from_fn(64, 64, 2, |r, c, k| {
        let (x, y) = (c as f64 / 64.0, r as f64 / 64.0);
        0.5 + 0.3 * (5.0 * x + k as f64).sin() * (4.0 * y + 0.3).cos()
    })?;
    let pts: Vec<Point2<f64>> = (0..configs)
        .map(|_| Point2::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
        .filter(|pt| lattice_distance(&img, pt) > 1e-2)
        .collect();
    let grid = SampleGrid::new(pts.len(), 1, pts.clone())?;
    let gg = grad_bilinear(&img, &grid);
    let mut worst = Worst::default();
    for (i, pt) in pts.iter().enumerate() {
        let sample = |x: &[f64]| {
            let g = SampleGrid::new(1, 1, vec![Point2::new(x[0], x[1])])?;
            Ok(bilinear_sample(&img, &g, Padding::Zeros).into_data())
        };
        let step = PIXEL_STEP / 64.0;
        let n = finite_difference(sample, &[pt.x, pt.y], step)?;
        for k in 0..img.channels() {
            worst.add(gg.du[i * 2 + k], n.get(k, 0));
            worst.add(gg.dv[i * 2 + k], n.get(k, 1));
        }
    }
    rows.push(GradcheckRow {
        name: "bilinear wrt grid".into(),
        cases: pts.len(),
        max_error: worst.rel,
        max_abs_diff: worst.abs,
        tolerance: 1e-4,
    });

    let cam = CameraIntrinsics::new(0.7, 0.7, 0.5, 0.5, 96, 96)?;
    let smooth = Image::from_fn(96, 96, 1, |r, c, _| {
        let (x, y) = (c as f64 / 96.0, r as f64 / 96.0);
        0.5 + 0.3 * (5.0 * x).sin() * (4.0 * y + 0.3).cos()
    })?;
    let mut worst = Worst::default();
    let crops = 4;
    for _ in 0..crops {
        let x = [
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(0.3..0.6),
            rng.random_range(0.3..0.6),
        ];
        let opts = PclOptions::default();
        let tgt = target_from_params(&x)?;
        let (oh, ow) = (10, 10);
        let a = d_crop_d_params(&smooth, &cam, &tgt, &opts, oh, ow)?;
        let n = finite_difference(|x| crop_values(&smooth, &cam, x, &opts, oh, ow), &x, 1e-7)?;
        let vc = build_virtual_camera(&tgt, &cam, &opts)?;
        let grid = make_grid(&warp_matrix(&vc, &cam), oh, ow)?;
        for (i, pt) in grid.points.iter().enumerate() {
            if lattice_distance(&smooth, pt) < 1e-2 {
                continue;
            }
            for k in 0..4 {
                worst.add(a.get(i, k), n.get(i, k));
            }
        }
    }
    rows.push(GradcheckRow {
        name: "crop pixels wrt (p, s)".into(),
        cases: crops,
        max_error: worst.rel,
        max_abs_diff: worst.abs,
        tolerance: 1e-4,
    });

    rows.push(mlp_gradcheck(seed)?);
    Ok(rows)
}

/// Parameter gradient of a width-8 network against central differences.
pub fn mlp_gradcheck(seed: u64) -> Result<GradcheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mlp::new(6, 8, 5, seed)?;
    for p in m.params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    let x: Vec<f64> = (0..7 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..7 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = [1.0, 2.0, 0.5, 1.5, 3.0];
    let (_, grad) = m.loss_and_grad(&x, &y, &w)?;
    let n = finite_difference(
        |theta| {
            let mut probe = m.clone();
            probe.params_mut().copy_from_slice(theta);
            Ok(vec![probe.loss(&x, &y, &w)?])
        },
        &m.params().to_vec(),
        GEOMETRY_STEP,
    )?;
    let mut worst = Worst::default();
    for (i, g) in grad.iter().enumerate() {
        worst.add(*g, n.get(0, i));
    }
    Ok(GradcheckRow {
        name: "mlp parameters".into(),
        cases: grad.len(),
        max_error: worst.rel,
        max_abs_diff: worst.abs,
        tolerance: 1e-5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(0.6, 0.75, 0.48, 0.53, 800, 600).unwrap()
    }

    #[test]
    fn finite_difference_basics() {
        let sq = |x: &[f64]| Ok(vec![x[0] * x[0]]);
        let j = finite_difference(sq, &[3.0], 1e-5).unwrap();
        assert!((j.get(0, 0) - 6.0).abs() < 1e-9);

        let lin = |x: &[f64]| Ok(vec![2.0 * x[0] - 3.0 * x[1], x[1]]);
        for h in [1e-1, 1e-3, 1.0] {
            let j = finite_difference(lin, &[0.25, -0.5], h).unwrap();
            assert!((j.get(0, 0) - 2.0).abs() < 1e-12);
            assert!((j.get(0, 1) + 3.0).abs() < 1e-12);
            assert!((j.get(1, 1) - 1.0).abs() < 1e-12);
        }

        let h = 1e-3;
        let j = finite_difference(|x: &[f64]| Ok(vec![x[0].sin()]), &[0.0], h).unwrap();
        assert!((j.get(0, 0) - 1.0).abs() <= h * h / 6.0 + 1e-15);

        let failing = |_: &[f64]| -> Result<Vec<f64>> { Err(Error::InvalidInput("nope".into())) };
        assert!(finite_difference(failing, &[1.0], 1e-3).is_err());
    }

    #[test]
    fn rotation_partials_at_origin() {
        let j = d_rotation_d_p(&Vector2::zeros());
        // R13 and R23 are entries 2 and 5 in row-major order.
        assert!((j.get(2, 0) - 1.0).abs() < 1e-15);
        assert!((j.get(5, 1) - 1.0).abs() < 1e-15);
        assert_eq!(j.row_labels[2], "R13");
    }

    #[test]
    fn rotation_entry_22_flat_in_px_on_horizontal_line() {
        for a in [-2.0, -0.3, 0.0, 0.7, 1.5] {
            let j = d_rotation_d_p(&Vector2::new(a, 0.0));
            assert!(j.get(4, 0).abs() < 1e-15);
        }
    }

    #[test]
    fn rotation_partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let a = d_rotation_d_p(&Vector2::new(p[0], p[1]));
            let n = finite_difference(|x| Ok(rotation_entries(x)), &p, GEOMETRY_STEP).unwrap();
            let e = a.max_relative_error(&n);
            assert!(e < 1e-6, "p = {p:?}, err = {e}");
        }
    }

    #[test]
    fn focal_partials_at_center_option_a() {
        let intr = cam();
        let s = Vector2::new(0.4, 0.25);
        let tgt = CropTarget::new(Vector2::zeros(), s).unwrap();
        let opts = PclOptions::with_focal(FocalOption::A);
        let j = d_warp_d_params(&intr, &tgt, &opts).unwrap();
        // At the center R = I, so dΓ/ds_x = diag(-f_x/s_x², 0, 0) · K⁻¹.
        let kinv = intr.inverse_matrix();
        let dfx = -intr.fx() / (s.x * s.x);
        for c in 0..3 {
            assert!((j.get(c, 2) - dfx * kinv[(0, c)]).abs() < 1e-9);
            assert_eq!(j.get(3 + c, 2), 0.0);
        }
        let dfy = -intr.fy() / (s.y * s.y);
        for c in 0..3 {
            assert!((j.get(3 + c, 3) - dfy * kinv[(1, c)]).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_never_moves_last_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let tgt = CropTarget::new(
                Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                Vector2::new(rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)),
            )
            .unwrap();
            let j = d_warp_d_params(&cam(), &tgt, &PclOptions::default()).unwrap();
            for r in 6..9 {
                assert_eq!(j.get(r, 2), 0.0);
                assert_eq!(j.get(r, 3), 0.0);
            }
        }
    }

    #[test]
    fn warp_partials_match_finite_differences() {
        let intr = cam();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for i in 0..1000 {
            let opts = PclOptions {
                focal: [FocalOption::A, FocalOption::B, FocalOption::C][i % 3],
                preserve_aspect: i % 2 == 0,
                ..Default::default()
            };
            let x = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.1..1.0),
                rng.random_range(0.1..1.0),
            ];
            let tgt = target_from_params(&x).unwrap();
            let f = tgt.s();
            // Skip configurations within a step of the aspect-rule kink.
            let h = virtual_focal(&tgt, &intr, opts.focal).component_div(&f);
            if opts.preserve_aspect && (h.x - h.y).abs() < 1e-3 * h.x {
                continue;
            }
            let a = d_warp_d_params(&intr, &tgt, &opts).unwrap();
            let n = finite_difference(|x| warp_entries(&intr, x, &opts), &x, GEOMETRY_STEP).unwrap();
            let e = a.max_relative_error(&n);
            assert!(e < 1e-5, "x = {x:?}, {opts:?}, err = {e}");
        }
    }

    #[test]
    fn patch_center_is_invariant_to_scale() {
        let intr = cam();
        let tgt = CropTarget::new(Vector2::new(0.6, -0.4), Vector2::new(0.3, 0.2)).unwrap();
        let parts = warp_partials(&tgt, &intr, &PclOptions::default()).unwrap();
        let vc = build_virtual_camera(&tgt, &intr, &PclOptions::default()).unwrap();
        let g = warp_matrix(&vc, &intr);
        let x = intr.project(&Vector3::new(0.6, -0.4, 1.0)).unwrap().to_homogeneous();
        let h = g.matrix() * x;
        for d in &parts[2..] {
            let dh = d * x;
            let du = (dh.x - h.x / h.z * dh.z) / h.z;
            let dv = (dh.y - h.y / h.z * dh.z) / h.z;
            assert!(du.abs() < 1e-12 && dv.abs() < 1e-12);
        }
    }

    #[test]
    fn crop_jacobian_matches_finite_differences() {
        let intr = CameraIntrinsics::new(0.7, 0.7, 0.5, 0.5, 96, 96).unwrap();
        let img = Image::from_fn(96, 96, 1, |r, c, _| {
            let (x, y) = (c as f64 / 96.0, r as f64 / 96.0);
            0.5 + 0.3 * (5.0 * x).sin() * (4.0 * y + 0.3).cos()
        })
        .unwrap();
        let opts = PclOptions::default();
        let x = [0.25, -0.15, 0.45, 0.5];
        let tgt = target_from_params(&x).unwrap();
        let (oh, ow) = (12, 12);
        let a = d_crop_d_params(&img, &intr, &tgt, &opts, oh, ow).unwrap();
        let n = finite_difference(|x| crop_values(&img, &intr, x, &opts, oh, ow), &x, 1e-7).unwrap();
        let vc = build_virtual_camera(&tgt, &intr, &opts).unwrap();
        let grid = make_grid(&warp_matrix(&vc, &intr), oh, ow).unwrap();
        let mut checked = 0;
        for (i, pt) in grid.points.iter().enumerate() {
            if crate::image_warp::lattice_distance(&img, pt) < 1e-2 {
                continue;
            }
            for k in 0..4 {
                let e = check_error(a.get(i, k), n.get(i, k));
                assert!(e < 1e-4, "pixel {i} param {k}: {} vs {}", a.get(i, k), n.get(i, k));
            }
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn option_c_preserves_patch_center_scale() {
        let intr = cam();
        let s = Vector2::new(0.3, 0.4);
        let rows = compare_focal_options(&intr, &focal_target_grid(5), s).unwrap();
        assert_eq!(rows.len(), 75);
        for r in rows.iter().filter(|r| r.option == FocalOption::C) {
            assert!((r.ratio_x - 1.0).abs() < 1e-6 && (r.ratio_y - 1.0).abs() < 1e-6, "{r:?}");
        }
        let at = |opt| {
            compare_focal_options(&intr, &[Vector2::new(1.0, 0.0)], s)
                .unwrap()
                .into_iter()
                .find(|r| r.option == opt)
                .unwrap()
        };
        // Option A at p = (1, 0): 1 / (√(1+x²) · ‖p‖) = 1/2.
        assert!((at(FocalOption::A).ratio_x - 0.5).abs() < 1e-6);
        assert!((at(FocalOption::B).ratio_x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(!at(FocalOption::A).preserved && !at(FocalOption::B).preserved);
        assert!(at(FocalOption::C).preserved);
    }

    #[test]
    fn center_target_preserves_all_options() {
        let rows = compare_focal_options(&cam(), &[Vector2::zeros()], Vector2::new(0.5, 0.5)).unwrap();
        assert!(rows.iter().all(|r| r.preserved));
    }

    #[test]
    fn battery_passes() {
        for row in gradcheck_battery(5, 50).unwrap() {
            assert!(row.passed(), "{row:?}");
        }
    }

    #[test]
    fn jacobian_label_validation() {
        assert!(Jacobian::new(DMatrix::zeros(2, 2), vec!["a".into()], vec!["x".into(), "y".into()]).is_err());
        assert!(Jacobian::new(DMatrix::from_element(1, 1, f64::NAN), vec!["a".into()], vec!["x".into()]).is_err());
    }
}
