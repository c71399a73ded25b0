//! Virtual-camera construction and the perspective crop warp.
//!
//! A perspective crop re-renders a region of interest as seen by a virtual
//! camera that shares the real camera's optical center but is rotated so its
//! optical axis pierces the crop target. The warp between the two image
//! planes is the homography `K_virt · Rᵀ · K⁻¹`, where `R` maps virtual-camera
//! coordinates to real-camera coordinates.

use nalgebra::{Matrix3, Point2, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{dehomogenize, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::pose::{Pose2D, Pose3D};

/// Principal point of every virtual camera, in patch coordinates.
pub const VIRTUAL_PRINCIPAL_POINT: f64 = 0.5;

/// Default padding added around a tight keypoint bounding box.
pub const DEFAULT_MARGIN: f64 = 0.1;

/// Bounding boxes thinner than this along either axis are rejected.
pub const MIN_BBOX_EXTENT: f64 = 1e-9;

/// Crop center on the camera plane (z = 1) plus the crop scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropTarget {
    p: Vector2<f64>,
    s: Vector2<f64>,
}

impl CropTarget {
    pub fn new(p: Vector2<f64>, s: Vector2<f64>) -> Result<Self> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::InvalidInput(format!("crop center must be finite, got {p:?}")));
        }
        if !(s.x > 0.0 && s.y > 0.0 && s.x.is_finite() && s.y.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "crop scale must be positive, got ({}, {})",
                s.x, s.y
            )));
        }
        Ok(CropTarget { p, s })
    }

    /// Target given by a normalized image point, backprojected through `intr`.
    pub fn from_image_point(
        center: Point2<f64>,
        s: Vector2<f64>,
        intr: &CameraIntrinsics,
    ) -> Result<Self> {
        let b = intr.backproject(center);
        Self::new(Vector2::new(b.x, b.y), s)
    }

    pub fn p(&self) -> Vector2<f64> {
        self.p
    }

    pub fn s(&self) -> Vector2<f64> {
        self.s
    }

    /// Length of the homogeneous lift `(p_x, p_y, 1)`.
    pub fn p_norm(&self) -> f64 {
        homogeneous_norm(&self.p)
    }
}

fn homogeneous_norm(p: &Vector2<f64>) -> f64 {
    (1.0 + p.x * p.x + p.y * p.y).sqrt()
}

/// Rule for the virtual focal length before division by the crop scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FocalOption {
    /// Keep the real focal length; the camera only rotates.
    A,
    /// Scale by the distance to the target so the image planes meet at `p`.
    B,
    /// Compensate foreshortening so axis-aligned scales at the patch center match.
    #[default]
    C,
}

impl std::str::FromStr for FocalOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(FocalOption::A),
            "B" | "b" => Ok(FocalOption::B),
            "C" | "c" => Ok(FocalOption::C),
            other => Err(Error::InvalidInput(format!(
                "unknown focal option '{other}' (expected A, B or C)"
            ))),
        }
    }
}

impl std::fmt::Display for FocalOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FocalOption::A => "A",
            FocalOption::B => "B",
            FocalOption::C => "C",
        };
        f.write_str(s)
    }
}

/// Knobs shared by keypoint and image crops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PclOptions {
    pub focal: FocalOption,
    /// Use the smaller virtual focal length on both axes.
    pub preserve_aspect: bool,
    /// Relative padding of the keypoint bounding box.
    pub margin: f64,
}

impl Default for PclOptions {
    fn default() -> Self {
        PclOptions {
            focal: FocalOption::C,
            preserve_aspect: false,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl PclOptions {
    pub fn with_focal(focal: FocalOption) -> Self {
        PclOptions {
            focal,
            ..Default::default()
        }
    }
}

/// A camera sharing the real optical center, aimed at a crop target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualCamera {
    /// Maps virtual-camera coordinates to real-camera coordinates.
    pub rotation: Rotation3<f64>,
    pub intrinsics: CameraIntrinsics,
    /// Camera-plane point the optical axis passes through.
    pub target: Vector2<f64>,
}

/// Homography from real-image to virtual-image coordinates, with its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpMatrix {
    m: Matrix3<f64>,
    m_inv: Matrix3<f64>,
}

/// Rotation from the virtual camera to the real camera for target `p`.
///
/// The result is `R_y · R_x` with zero roll about the virtual optical axis,
/// expressed with square roots of the target coordinates instead of angles.
/// Its third column is `(p_x, p_y, 1) / ‖(p_x, p_y, 1)‖`.
pub fn rotation_from_target(p: &Vector2<f64>) -> Rotation3<f64> {
    let (px, py) = (p.x, p.y);
    let a = 1.0 + px * px;
    let sa = a.sqrt();
    let n = (a + py * py).sqrt();
    let g = 1.0 / (n * sa);
    let m = Matrix3::new(
        1.0 / sa,
        -px * py * g,
        px / n,
        0.0,
        sa / n,
        py / n,
        -px / sa,
        -py * g,
        1.0 / n,
    );
    Rotation3::from_matrix_unchecked(m)
}

/// The two Euler factors `(R_y, R_x)` of [`rotation_from_target`].
///
/// `R_y` turns about the vertical axis (horizontal target offset), `R_x`
/// tilts about the horizontal axis (vertical target offset).
pub fn rotation_factors(p: &Vector2<f64>) -> (Rotation3<f64>, Rotation3<f64>) {
    let (px, py) = (p.x, p.y);
    let sa = (1.0 + px * px).sqrt();
    let n = homogeneous_norm(p);
    let (cos_phi, sin_phi) = (1.0 / sa, px / sa);
    let (cos_theta, sin_theta) = (sa / n, -py / n);
    let ry = Matrix3::new(
        cos_phi, 0.0, sin_phi, //
        0.0, 1.0, 0.0, //
        -sin_phi, 0.0, cos_phi,
    );
    let rx = Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, cos_theta, -sin_theta, //
        0.0, sin_theta, cos_theta,
    );
    (
        Rotation3::from_matrix_unchecked(ry),
        Rotation3::from_matrix_unchecked(rx),
    )
}

/// Virtual focal length before division by the crop scale.
pub fn virtual_focal(tgt: &CropTarget, intr: &CameraIntrinsics, opt: FocalOption) -> Vector2<f64> {
    let (fx, fy) = (intr.fx(), intr.fy());
    let n = tgt.p_norm();
    match opt {
        FocalOption::A => Vector2::new(fx, fy),
        FocalOption::B => Vector2::new(fx * n, fy * n),
        FocalOption::C => {
            let sa = (1.0 + tgt.p.x * tgt.p.x).sqrt();
            Vector2::new(fx * n * sa, fy * n * n / sa)
        }
    }
}

/// Virtual focal lengths after zoom and the optional aspect rule.
pub fn virtual_focal_scaled(
    tgt: &CropTarget,
    intr: &CameraIntrinsics,
    opts: &PclOptions,
) -> Vector2<f64> {
    let h = virtual_focal(tgt, intr, opts.focal);
    let f = h.component_div(&tgt.s);
    if opts.preserve_aspect {
        let m = f.x.min(f.y);
        Vector2::new(m, m)
    } else {
        f
    }
}

pub fn build_virtual_camera(
    tgt: &CropTarget,
    intr: &CameraIntrinsics,
    opts: &PclOptions,
) -> Result<VirtualCamera> {
    let f = virtual_focal_scaled(tgt, intr, opts);
    let intrinsics = CameraIntrinsics::new(
        f.x,
        f.y,
        VIRTUAL_PRINCIPAL_POINT,
        VIRTUAL_PRINCIPAL_POINT,
        intr.width(),
        intr.height(),
    )?;
    Ok(VirtualCamera {
        rotation: rotation_from_target(&tgt.p),
        intrinsics,
        target: tgt.p,
    })
}

impl VirtualCamera {
    /// Expresses a real-camera point in virtual-camera coordinates.
    pub fn to_virtual(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(x)
    }

    pub fn to_real(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x
    }
}

pub fn warp_matrix(vc: &VirtualCamera, intr: &CameraIntrinsics) -> WarpMatrix {
    let r = vc.rotation.matrix();
    let m = vc.intrinsics.as_matrix() * r.transpose() * intr.inverse_matrix();
    let m_inv = intr.as_matrix() * r * vc.intrinsics.inverse_matrix();
    WarpMatrix { m, m_inv }
}

impl WarpMatrix {
    pub fn identity() -> Self {
        WarpMatrix {
            m: Matrix3::identity(),
            m_inv: Matrix3::identity(),
        }
    }

    /// Wraps an arbitrary invertible homography.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("warp matrix is singular".into()))?;
        Ok(WarpMatrix { m, m_inv })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.m_inv
    }

    pub fn inverse(&self) -> WarpMatrix {
        WarpMatrix {
            m: self.m_inv,
            m_inv: self.m,
        }
    }

    /// Real-image point to virtual-image point.
    pub fn apply(&self, pt: Point2<f64>) -> Result<Point2<f64>> {
        dehomogenize(&(self.m * pt.to_homogeneous()))
    }

    /// Virtual-image point to real-image point.
    pub fn apply_inverse(&self, pt: Point2<f64>) -> Result<Point2<f64>> {
        dehomogenize(&(self.m_inv * pt.to_homogeneous()))
    }
}

/// Affine crop `[[s_x, c_x, a_x], [c_y, s_y, a_y], [0, 0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCrop {
    m: Matrix3<f64>,
}

impl AffineCrop {
    pub fn new(a: Vector2<f64>, s: Vector2<f64>, c: Vector2<f64>) -> Self {
        AffineCrop {
            m: Matrix3::new(
                s.x, c.x, a.x, //
                c.y, s.y, a.y, //
                0.0, 0.0, 1.0,
            ),
        }
    }

    /// Moves `root` to the origin and divides offsets by `scale`.
    pub fn root_centering(root: Point2<f64>, scale: Vector2<f64>) -> Self {
        let inv = Vector2::new(1.0 / scale.x, 1.0 / scale.y);
        Self::new(
            Vector2::new(-root.x * inv.x, -root.y * inv.y),
            inv,
            Vector2::zeros(),
        )
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn is_invertible(&self) -> bool {
        self.m[(0, 0)] * self.m[(1, 1)] != self.m[(0, 1)] * self.m[(1, 0)]
    }

    pub fn apply(&self, pt: Point2<f64>) -> Point2<f64> {
        let h = self.m * pt.to_homogeneous();
        Point2::new(h.x, h.y)
    }
}

/// Where a keypoint crop is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CropAnchor {
    /// The pose's root joint.
    #[default]
    Root,
    /// The mean of all keypoints.
    Centroid,
}

impl CropAnchor {
    pub fn locate(&self, pose: &Pose2D) -> Point2<f64> {
        match self {
            CropAnchor::Root => pose.root_point(),
            CropAnchor::Centroid => pose.centroid(),
        }
    }
}

/// Crop scale from the padded tight bounding box of `pose`.
pub fn crop_scale(pose: &Pose2D, margin: f64) -> Result<Vector2<f64>> {
    let size = pose.bounding_box().size();
    if !(size.x >= MIN_BBOX_EXTENT && size.y >= MIN_BBOX_EXTENT) {
        return Err(Error::DegenerateBoundingBox {
            width: size.x,
            height: size.y,
        });
    }
    Ok(size * (1.0 + margin))
}

/// Keypoints warped into a virtual camera, with what is needed to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointCrop {
    pub pose: Pose2D,
    pub camera: VirtualCamera,
    pub target: CropTarget,
    pub warp: WarpMatrix,
}

fn warp_pose(pose: &Pose2D, warp: &WarpMatrix) -> Result<Pose2D> {
    let joints = pose
        .joints
        .iter()
        .map(|p| warp.apply(*p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pose2D {
        joints,
        root: pose.root,
    })
}

/// Perspective crop of a single 2D pose.
pub fn pcl_keypoints(
    kps: &Pose2D,
    intr: &CameraIntrinsics,
    anchor: CropAnchor,
    opts: &PclOptions,
) -> Result<KeypointCrop> {
    let s = crop_scale(kps, opts.margin)?;
    let target = CropTarget::from_image_point(anchor.locate(kps), s, intr)?;
    let camera = build_virtual_camera(&target, intr, opts)?;
    let warp = warp_matrix(&camera, intr);
    Ok(KeypointCrop {
        pose: warp_pose(kps, &warp)?,
        camera,
        target,
        warp,
    })
}

/// A pose sequence warped through one shared virtual camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceCrop {
    pub poses: Vec<Pose2D>,
    pub camera: VirtualCamera,
    pub target: CropTarget,
    pub warp: WarpMatrix,
    /// Index of the frame the camera was aimed from.
    pub middle: usize,
}

/// Perspective crop of a sequence, aimed at the middle frame (`len / 2`).
pub fn pcl_keypoint_sequence(
    seq: &[Pose2D],
    intr: &CameraIntrinsics,
    anchor: CropAnchor,
    opts: &PclOptions,
) -> Result<SequenceCrop> {
    if seq.is_empty() {
        return Err(Error::InvalidInput("empty pose sequence".into()));
    }
    let middle = seq.len() / 2;
    let KeypointCrop {
        camera,
        target,
        warp,
        ..
    } = pcl_keypoints(&seq[middle], intr, anchor, opts)?;
    let poses = seq
        .iter()
        .map(|p| warp_pose(p, &warp))
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceCrop {
        poses,
        camera,
        target,
        warp,
        middle,
    })
}

/// Rotates a virtual-camera reconstruction back into the real camera frame.
pub fn pcl_inv(pose: &Pose3D, vc: &VirtualCamera) -> Pose3D {
    pose.map(|j| vc.rotation * j)
}

/// Which part of the virtual-to-real rotation to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackRotation {
    #[default]
    None,
    /// Only the tilt about the horizontal axis.
    XOnly,
    /// The complete rotation, identical to [`pcl_inv`].
    XyFull,
}

impl std::str::FromStr for BackRotation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BackRotation::None),
            "x_only" | "x-only" => Ok(BackRotation::XOnly),
            "xy_full" | "xy-full" | "full" => Ok(BackRotation::XyFull),
            other => Err(Error::InvalidInput(format!(
                "unknown rotation mode '{other}' (expected none, x_only or xy_full)"
            ))),
        }
    }
}

impl std::fmt::Display for BackRotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackRotation::None => "none",
            BackRotation::XOnly => "x_only",
            BackRotation::XyFull => "xy_full",
        })
    }
}

/// Applies part or all of the virtual-to-real rotation.
pub fn pcl_inv_partial(pose: &Pose3D, vc: &VirtualCamera, mode: BackRotation) -> Pose3D {
    match mode {
        BackRotation::None => pose.clone(),
        BackRotation::XOnly => {
            let (_, rx) = rotation_factors(&vc.target);
            pose.map(|j| rx * j)
        }
        BackRotation::XyFull => {
            let (ry, rx) = rotation_factors(&vc.target);
            let r = ry * rx;
            pose.map(|j| r * j)
        }
    }
}

/// Rectangular-crop baseline: root-centered offsets divided by the crop scale.
pub fn rc_crop(kps: &Pose2D, margin: f64) -> Result<Pose2D> {
    rc_crop_with_scale(kps, margin).map(|(p, _)| p)
}

pub fn rc_crop_with_scale(kps: &Pose2D, margin: f64) -> Result<(Pose2D, Vector2<f64>)> {
    let s = crop_scale(kps, margin)?;
    let crop = AffineCrop::root_centering(kps.root_point(), s);
    let joints = kps.joints.iter().map(|p| crop.apply(*p)).collect();
    Ok((
        Pose2D {
            joints,
            root: kps.root,
        },
        s,
    ))
}
