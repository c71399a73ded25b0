//! 2D keypoint sets and 3D joint sets with a designated root joint.

use nalgebra::{Point2, Vector2, Vector3};

use crate::error::{Error, Result};

/// 2D keypoints in normalized image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub joints: Vec<Point2<f64>>,
    pub root: usize,
}

/// 3D joints in millimeters, expressed in some camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub joints: Vec<Vector3<f64>>,
    pub root: usize,
}

/// Axis-aligned extent of a 2D point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point2<f64>,
    pub max: Point2<f64>,
}

impl BoundingBox {
    pub fn size(&self) -> Vector2<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point2<f64> {
        nalgebra::center(&self.min, &self.max)
    }
}

impl Pose2D {
    pub fn new(joints: Vec<Point2<f64>>, root: usize) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidInput("pose has no keypoints".into()));
        }
        if root >= joints.len() {
            return Err(Error::InvalidInput(format!(
                "root index {root} out of range for {} keypoints",
                joints.len()
            )));
        }
        Ok(Pose2D { joints, root })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn root_point(&self) -> Point2<f64> {
        self.joints[self.root]
    }

    pub fn centroid(&self) -> Point2<f64> {
        let sum = self
            .joints
            .iter()
            .fold(Vector2::zeros(), |acc, p| acc + p.coords);
        Point2::from(sum / self.joints.len() as f64)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.joints {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BoundingBox { min, max }
    }

    /// Flattened `[u0, v0, u1, v1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

impl Pose3D {
    pub fn new(joints: Vec<Vector3<f64>>, root: usize) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidInput("pose has no joints".into()));
        }
        if root >= joints.len() {
            return Err(Error::InvalidInput(format!(
                "root index {root} out of range for {} joints",
                joints.len()
            )));
        }
        Ok(Pose3D { joints, root })
    }

    /// Builds a pose from `[x0, y0, z0, x1, ...]`.
    pub fn from_flat(values: &[f64], root: usize) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(Error::InvalidInput(format!(
                "flat 3D pose length {} is not a multiple of 3",
                values.len()
            )));
        }
        let joints = values
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        Self::new(joints, root)
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn root_joint(&self) -> Vector3<f64> {
        self.joints[self.root]
    }

    /// Translates the pose so the root joint sits at the origin.
    pub fn root_centered(&self) -> Pose3D {
        let r = self.root_joint();
        Pose3D {
            joints: self.joints.iter().map(|j| j - r).collect(),
            root: self.root,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|j| [j.x, j.y, j.z]).collect()
    }

    pub fn map(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Pose3D {
        Pose3D {
            joints: self.joints.iter().map(f).collect(),
            root: self.root,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_root() {
        assert!(Pose2D::new(vec![Point2::new(0.0, 0.0)], 1).is_err());
        assert!(Pose2D::new(vec![], 0).is_err());
        assert!(Pose3D::new(vec![Vector3::zeros()], 3).is_err());
    }

    #[test]
    fn bounding_box_and_centroid() {
        let p = Pose2D::new(
            vec![
                Point2::new(0.1, 0.2),
                Point2::new(0.3, 0.2),
                Point2::new(0.3, 0.6),
                Point2::new(0.1, 0.6),
            ],
            0,
        )
        .unwrap();
        let b = p.bounding_box();
        assert!((b.size() - Vector2::new(0.2, 0.4)).norm() < 1e-15);
        assert!((p.centroid() - Point2::new(0.2, 0.4)).norm() < 1e-15);
    }

    #[test]
    fn flat_roundtrip() {
        let p = Pose3D::new(vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0)], 1)
            .unwrap();
        assert_eq!(Pose3D::from_flat(&p.to_flat(), 1).unwrap(), p);
        assert!(Pose3D::from_flat(&[1.0, 2.0], 0).is_err());
    }
}
