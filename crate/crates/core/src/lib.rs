//! Perspective crop layers.
//!
//! Location-dependent perspective-correcting crops between a real pinhole
//! camera and a virtual camera aimed at a region of interest, with
//! differentiable image and keypoint warping, 3D pose back-rotation, and a
//! small synthetic experiment suite comparing perspective crops against
//! rectangular crops for 2D-to-3D pose lifting.

pub mod camera;
pub mod diffcheck;
pub mod error;
pub mod image_warp;
pub mod io;
pub mod lifting;
pub mod mlp;
pub mod pcl;
pub mod pose;
pub mod study;
pub mod synthetic;

pub use camera::CameraIntrinsics;
pub use error::{Error, Result};
pub use pcl::{
    BackRotation, CropAnchor, CropTarget, FocalOption, PclOptions, VirtualCamera, WarpMatrix,
};
pub use pose::{Pose2D, Pose3D};

/// Homogeneous points with `|w|` below this are treated as points at infinity.
pub const DEHOMOGENIZE_EPS: f64 = 1e-12;
