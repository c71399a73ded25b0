//! Pinhole camera model in normalized image coordinates.
//!
//! Image coordinates run from 0 to 1 along each axis with the origin at the
//! top-left corner, x to the right and y downwards. Camera space is
//! right-handed with z pointing forward along the optical axis. Focal lengths
//! are expressed in normalized image units per unit of the camera plane
//! (z = 1), so a pixel focal length `F` on an image `W` pixels wide becomes
//! `F / W`.

use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intrinsic parameters of a zero-skew pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

/// On-disk layout of the camera JSON file.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<CameraRecord> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Self> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<CameraIntrinsics> for CameraRecord {
    fn from(c: CameraIntrinsics) -> Self {
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

impl CameraIntrinsics {
    /// Validating constructor. `cx`, `cy` are in normalized coordinates.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0) || !(fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(Error::InvalidCamera(format!(
                "principal point must lie in [0, 1] (cx = {cx}, cy = {cy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!(
                "resolution must be positive ({width}x{height})"
            )));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Builds normalized intrinsics from pixel-unit focal length and principal point.
    pub fn from_pixels(
        fx_px: f64,
        fy_px: f64,
        cx_px: f64,
        cy_px: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!(
                "resolution must be positive ({width}x{height})"
            )));
        }
        let (w, h) = (width as f64, height as f64);
        Self::new(fx_px / w, fy_px / h, cx_px / w, cy_px / h, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn focal(&self) -> [f64; 2] {
        [self.fx, self.fy]
    }

    pub fn principal_point(&self) -> Point2<f64> {
        Point2::new(self.cx, self.cy)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Same camera with both focal lengths multiplied by `factor`.
    pub fn with_focal_scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.fx * factor,
            self.fy * factor,
            self.cx,
            self.cy,
            self.width,
            self.height,
        )
    }

    /// Same camera with the principal point moved to the image center.
    pub fn with_centered_principal_point(&self) -> Self {
        CameraIntrinsics {
            cx: 0.5,
            cy: 0.5,
            ..*self
        }
    }

    /// Same camera with a different pixel resolution (normalized parameters unchanged).
    pub fn with_resolution(&self, width: u32, height: u32) -> Result<Self> {
        Self::new(self.fx, self.fy, self.cx, self.cy, width, height)
    }

    pub fn as_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Closed-form inverse of [`as_matrix`](Self::as_matrix).
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn pixel_to_normalized(&self, pt: Point2<f64>) -> Point2<f64> {
        Point2::new(pt.x / self.width as f64, pt.y / self.height as f64)
    }

    pub fn normalized_to_pixel(&self, pt: Point2<f64>) -> Point2<f64> {
        Point2::new(pt.x * self.width as f64, pt.y * self.height as f64)
    }

    /// Lifts a normalized image point onto the camera plane z = 1.
    pub fn backproject(&self, pt: Point2<f64>) -> Vector3<f64> {
        Vector3::new((pt.x - self.cx) / self.fx, (pt.y - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-space point (any length unit) to normalized image coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Point2<f64>> {
        if !(p.z > 0.0) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok(Point2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }
}

/// Dehomogenizes `h`, failing when the last component is numerically zero.
pub fn dehomogenize(h: &Vector3<f64>) -> Result<Point2<f64>> {
    if h.z.abs() < crate::DEHOMOGENIZE_EPS || !h.z.is_finite() {
        return Err(Error::PointAtInfinity(h.z));
    }
    Ok(Point2::new(h.x / h.z, h.y / h.z))
}
