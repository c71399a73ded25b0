//! Sampling-grid generation and bilinear resampling for image crops.
//!
//! Grids are built by inverse mapping: each output pixel center is sent
//! through the inverse warp to find where to sample the source image. Pixel
//! `i` of an `N`-pixel axis has its center at `(i + 0.5) / N` in normalized
//! coordinates. Samples falling outside the source contribute zero.

use nalgebra::{Point2, Vector2};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::pcl::{build_virtual_camera, warp_matrix, CropTarget, PclOptions, VirtualCamera, WarpMatrix};

/// Sample positions closer than this to the pixel lattice snap onto it.
const LATTICE_SNAP: f64 = 1e-10;

/// Row-major `height × width × channels` image of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive ({height}x{width}x{channels})"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "image data has {} values, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("image contains non-finite values".into()));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image by evaluating `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    data.push(f(r, c, k));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    /// Zero outside the image.
    fn get_or_zero(&self, row: i64, col: i64, ch: usize) -> f64 {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            0.0
        } else {
            self.get(row as usize, col as usize, ch)
        }
    }

    pub fn mean_abs_diff(&self, other: &Image) -> Result<f64> {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels) {
            return Err(Error::InvalidInput("image dimensions differ".into()));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }
}

/// Source sample positions, one per output pixel, in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub out_height: usize,
    pub out_width: usize,
    pub points: Vec<Point2<f64>>,
}

impl SampleGrid {
    pub fn new(out_height: usize, out_width: usize, points: Vec<Point2<f64>>) -> Result<Self> {
        if points.len() != out_height * out_width {
            return Err(Error::InvalidInput(format!(
                "grid has {} points, expected {}",
                points.len(),
                out_height * out_width
            )));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidInput("grid contains non-finite points".into()));
        }
        Ok(SampleGrid {
            out_height,
            out_width,
            points,
        })
    }

    /// The pixel centers of an `h × w` image.
    pub fn pixel_centers(h: usize, w: usize) -> SampleGrid {
        let points = (0..h)
            .flat_map(|r| (0..w).map(move |c| pixel_center(r, c, h, w)))
            .collect();
        SampleGrid {
            out_height: h,
            out_width: w,
            points,
        }
    }
}

/// Normalized coordinates of the center of pixel `(row, col)`.
pub fn pixel_center(row: usize, col: usize, h: usize, w: usize) -> Point2<f64> {
    Point2::new((col as f64 + 0.5) / w as f64, (row as f64 + 0.5) / h as f64)
}

/// Border handling for [`bilinear_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Zeros,
}

pub fn make_grid(w: &WarpMatrix, out_h: usize, out_w: usize) -> Result<SampleGrid> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidInput(format!(
            "output size must be positive ({out_h}x{out_w})"
        )));
    }
    let mut points = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        for c in 0..out_w {
            points.push(w.apply_inverse(pixel_center(r, c, out_h, out_w))?);
        }
    }
    Ok(SampleGrid {
        out_height: out_h,
        out_width: out_w,
        points,
    })
}

/// Continuous pixel coordinate of a normalized position along an axis of `n` pixels.
fn to_pixel(u: f64, n: usize) -> f64 {
    let x = u * n as f64 - 0.5;
    let r = x.round();
    if (x - r).abs() < LATTICE_SNAP {
        r
    } else {
        x
    }
}

/// Bilinear cell lookup shared by sampling and differentiation.
struct Cell {
    x0: i64,
    y0: i64,
    fx: f64,
    fy: f64,
}

impl Cell {
    fn locate(img: &Image, pt: &Point2<f64>) -> Cell {
        let x = to_pixel(pt.x, img.width);
        let y = to_pixel(pt.y, img.height);
        // floor() puts lattice points at the minimum corner of their cell,
        // which fixes the one-sided derivative used there.
        let (x0, y0) = (x.floor(), y.floor());
        Cell {
            x0: x0 as i64,
            y0: y0 as i64,
            fx: x - x0,
            fy: y - y0,
        }
    }

    fn corners(&self, img: &Image, ch: usize) -> [f64; 4] {
        [
            img.get_or_zero(self.y0, self.x0, ch),
            img.get_or_zero(self.y0, self.x0 + 1, ch),
            img.get_or_zero(self.y0 + 1, self.x0, ch),
            img.get_or_zero(self.y0 + 1, self.x0 + 1, ch),
        ]
    }

    fn value(&self, v: &[f64; 4]) -> f64 {
        let (fx, fy) = (self.fx, self.fy);
        let top = if fx == 0.0 { v[0] } else { v[0] * (1.0 - fx) + v[1] * fx };
        let bottom = if fx == 0.0 { v[2] } else { v[2] * (1.0 - fx) + v[3] * fx };
        if fy == 0.0 {
            top
        } else {
            top * (1.0 - fy) + bottom * fy
        }
    }

    /// Derivatives w.r.t. continuous pixel coordinates (x, y).
    fn grad(&self, v: &[f64; 4]) -> (f64, f64) {
        let (fx, fy) = (self.fx, self.fy);
        let dx = (1.0 - fy) * (v[1] - v[0]) + fy * (v[3] - v[2]);
        let dy = (1.0 - fx) * (v[2] - v[0]) + fx * (v[3] - v[1]);
        (dx, dy)
    }
}

/// Bilinear resampling of `img` at every grid point.
pub fn bilinear_sample(img: &Image, grid: &SampleGrid, padding: Padding) -> Image {
    let Padding::Zeros = padding;
    let ch = img.channels;
    let mut data = Vec::with_capacity(grid.points.len() * ch);
    for pt in &grid.points {
        let cell = Cell::locate(img, pt);
        for k in 0..ch {
            data.push(cell.value(&cell.corners(img, k)));
        }
    }
    Image {
        height: grid.out_height,
        width: grid.out_width,
        channels: ch,
        data,
    }
}

/// Derivatives of each sampled value w.r.t. its grid point, in normalized units.
///
/// `du[i]` and `dv[i]` line up with the data layout of the sampled image.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGradient {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
}

pub fn grad_bilinear(img: &Image, grid: &SampleGrid) -> GridGradient {
    let ch = img.channels;
    let (sx, sy) = (img.width as f64, img.height as f64);
    let mut du = Vec::with_capacity(grid.points.len() * ch);
    let mut dv = Vec::with_capacity(grid.points.len() * ch);
    for pt in &grid.points {
        let cell = Cell::locate(img, pt);
        for k in 0..ch {
            let (gx, gy) = cell.grad(&cell.corners(img, k));
            du.push(gx * sx);
            dv.push(gy * sy);
        }
    }
    GridGradient { du, dv }
}

/// Distance (in source pixels) from `pt` to the nearest lattice line.
pub fn lattice_distance(img: &Image, pt: &Point2<f64>) -> f64 {
    let x = pt.x * img.width as f64 - 0.5;
    let y = pt.y * img.height as f64 - 0.5;
    (x - x.round()).abs().min((y - y.round()).abs())
}

/// Re-renders the region around `tgt` as seen by the virtual camera.
pub fn perspective_crop_image(
    img: &Image,
    intr: &CameraIntrinsics,
    tgt: &CropTarget,
    opts: &PclOptions,
    out_h: usize,
    out_w: usize,
) -> Result<(Image, VirtualCamera)> {
    let vc = build_virtual_camera(tgt, intr, opts)?;
    let w = warp_matrix(&vc, intr);
    let grid = make_grid(&w, out_h, out_w)?;
    Ok((bilinear_sample(img, &grid, Padding::Zeros), vc))
}

/// Affine STN-style grid: output center `q` samples source `A⁻¹ q`.
pub fn affine_grid(a_inv: &nalgebra::Matrix3<f64>, out_h: usize, out_w: usize) -> SampleGrid {
    let points = (0..out_h)
        .flat_map(|r| {
            (0..out_w).map(move |c| {
                let q = pixel_center(r, c, out_h, out_w);
                let lin = a_inv.fixed_view::<2, 2>(0, 0) * q.coords
                    + Vector2::new(a_inv[(0, 2)], a_inv[(1, 2)]);
                Point2::from(lin)
            })
        })
        .collect();
    SampleGrid {
        out_height: out_h,
        out_width: out_w,
        points,
    }
}
