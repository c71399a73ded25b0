//! Synthetic cubes and stick figures seen through a pinhole camera.
//!
//! Everything is generated in the camera frame in millimeters. Generation is
//! sequential and driven by a single seeded ChaCha stream, so a spec and seed
//! always yield the same dataset.

use nalgebra::{Point2, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::image_warp::Image;
use crate::pose::{Pose2D, Pose3D};

/// Consecutive rejected draws after which generation gives up.
pub const MAX_REJECTIONS: usize = 10_000;

/// Default cube edge length in millimeters.
pub const DEFAULT_CUBE_EDGE: f64 = 500.0;

/// One record: 2D keypoints and the 3D joints they were projected from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pose2d: Pose2D,
    pub pose3d: Pose3D,
}

/// Where subjects are placed in the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Root projects to the image center.
    Centered,
    /// Root uniformly distributed over the configured image region.
    General,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(Placement::Centered),
            "general" => Ok(Placement::General),
            other => Err(Error::InvalidInput(format!(
                "unknown placement '{other}' (expected centered or general)"
            ))),
        }
    }
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub count: usize,
    pub placement: Placement,
    pub camera: CameraIntrinsics,
    pub seed: u64,
    /// Normalized image interval `[lo, hi]` (both axes) for the root under general placement.
    pub region: [f64; 2],
    /// Root depth interval in millimeters.
    pub depth_mm: [f64; 2],
    /// Scale of per-joint articulation limits (figures); 0 gives the rest pose.
    pub articulation: f64,
    /// Maximum absolute subject rotation in degrees about the camera x axis
    /// (equivalently, camera pitch).
    pub pitch_deg: f64,
    /// Maximum absolute rotation in degrees about the optical axis.
    pub roll_deg: f64,
    /// Maximum absolute rotation in degrees about the subject's vertical axis.
    pub yaw_deg: f64,
}

impl DatasetSpec {
    /// Stick-figure defaults.
    pub fn figures(count: usize, placement: Placement, camera: CameraIntrinsics, seed: u64) -> Self {
        DatasetSpec {
            count,
            placement,
            camera,
            seed,
            region: [0.2, 0.8],
            depth_mm: [3000.0, 7000.0],
            articulation: 1.0,
            pitch_deg: 45.0,
            roll_deg: 10.0,
            yaw_deg: 180.0,
        }
    }

    /// Cube defaults.
    pub fn cubes(count: usize, placement: Placement, camera: CameraIntrinsics, seed: u64) -> Self {
        DatasetSpec {
            count,
            placement,
            camera,
            seed,
            region: [0.1, 0.9],
            depth_mm: [2500.0, 6000.0],
            articulation: 0.0,
            pitch_deg: 40.0,
            roll_deg: 40.0,
            yaw_deg: 40.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.count == 0 {
            return bad("dataset count must be at least 1".into());
        }
        let [lo, hi] = self.region;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad(format!("region [{lo}, {hi}] must be an interval inside [0, 1]"));
        }
        let [dmin, dmax] = self.depth_mm;
        if !(dmin > 0.0 && dmax >= dmin && dmax.is_finite()) {
            return bad(format!("depth range [{dmin}, {dmax}] must be positive and ordered"));
        }
        if !(self.articulation >= 0.0 && self.articulation.is_finite()) {
            return bad("articulation must be non-negative".into());
        }
        if !(self.pitch_deg >= 0.0 && self.roll_deg >= 0.0 && self.yaw_deg >= 0.0) {
            return bad("orientation limits must be non-negative".into());
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn sample_root_image_point(&self, rng: &mut ChaCha8Rng) -> Point2<f64> {
        match self.placement {
            Placement::Centered => Point2::new(0.5, 0.5),
            Placement::General => {
                let [lo, hi] = self.region;
                Point2::new(uniform(rng, lo, hi), uniform(rng, lo, hi))
            }
        }
    }

    fn sample_orientation(&self, rng: &mut ChaCha8Rng) -> Rotation3<f64> {
        let (pitch, roll, yaw) = (
            self.pitch_deg.to_radians(),
            self.roll_deg.to_radians(),
            self.yaw_deg.to_radians(),
        );
        let ry = uniform(rng, -yaw, yaw);
        let rx = uniform(rng, -pitch, pitch);
        let rz = uniform(rng, -roll, roll);
        Rotation3::from_axis_angle(&Vector3::z_axis(), rz)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), rx)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), ry)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn inside_unit_square(p: &Point2<f64>) -> bool {
    (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)
}

/// Projects all joints; `None` if any joint is behind the camera or outside the frame.
fn project_in_frame(cam: &CameraIntrinsics, joints: &[Vector3<f64>]) -> Option<Vec<Point2<f64>>> {
    joints
        .iter()
        .map(|j| cam.project(j).ok().filter(inside_unit_square))
        .collect()
}

/// Projects every joint of `pose` through `cam`.
pub fn project_pose(cam: &CameraIntrinsics, pose: &Pose3D) -> Result<Pose2D> {
    let joints = pose
        .joints
        .iter()
        .map(|j| cam.project(j))
        .collect::<Result<Vec<_>>>()?;
    Pose2D::new(joints, pose.root)
}

// ---------------------------------------------------------------------------
// Cubes

/// A colored cube in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeInstance {
    pub center: Vector3<f64>,
    pub orientation: Rotation3<f64>,
    pub edge: f64,
}

/// Vertex `i` has signs `(bit 0, bit 1, bit 2)` on the cube's (x, y, z) axes.
fn corner_signs(i: usize) -> Vector3<f64> {
    let s = |b: usize| if i & b != 0 { 1.0 } else { -1.0 };
    Vector3::new(s(1), s(2), s(4))
}

/// Faces as (outward axis, vertex indices in cyclic order).
const FACES: [(usize, f64, [usize; 4]); 6] = [
    (0, 1.0, [1, 3, 7, 5]),
    (0, -1.0, [0, 4, 6, 2]),
    (1, 1.0, [2, 6, 7, 3]),
    (1, -1.0, [0, 1, 5, 4]),
    (2, 1.0, [4, 5, 7, 6]),
    (2, -1.0, [0, 2, 3, 1]),
];

/// Distinct base colors, one per face in [`FACES`] order.
pub const FACE_COLORS: [[f64; 3]; 6] = [
    [0.90, 0.20, 0.20],
    [0.20, 0.80, 0.25],
    [0.20, 0.35, 0.90],
    [0.95, 0.85, 0.20],
    [0.85, 0.25, 0.85],
    [0.20, 0.85, 0.85],
];

impl CubeInstance {
    pub fn new(center: Vector3<f64>, orientation: Rotation3<f64>, edge: f64) -> Result<Self> {
        if !(edge > 0.0) {
            return Err(Error::InvalidInput(format!("cube edge must be positive, got {edge}")));
        }
        if !(center.z > edge) {
            return Err(Error::InvalidInput(format!(
                "cube center depth {} must exceed the edge length {edge}",
                center.z
            )));
        }
        Ok(CubeInstance {
            center,
            orientation,
            edge,
        })
    }

    pub fn vertices(&self) -> [Vector3<f64>; 8] {
        std::array::from_fn(|i| self.center + self.orientation * (corner_signs(i) * (self.edge / 2.0)))
    }

    /// Center followed by the 8 vertices, root at index 0.
    pub fn keypoints(&self) -> Pose3D {
        let mut joints = vec![self.center];
        joints.extend(self.vertices());
        Pose3D { joints, root: 0 }
    }

    /// The same cube expressed in a frame rotated by `r` (new = rᵀ · old).
    pub fn in_rotated_frame(&self, r: &Rotation3<f64>) -> CubeInstance {
        CubeInstance {
            center: r.inverse_transform_vector(&self.center),
            orientation: r.inverse() * self.orientation,
            edge: self.edge,
        }
    }
}

/// Generates cubes with projected center and vertices.
///
/// Keypoint 0 is the cube center, so the root doubles as the known crop
/// location; keypoints 1..=8 are the vertices.
pub fn gen_cube_dataset(spec: &DatasetSpec) -> Result<Vec<(CubeInstance, Sample)>> {
    spec.validate()?;
    let mut rng = spec.rng();
    let cam = &spec.camera;
    let mut out = Vec::with_capacity(spec.count);
    while out.len() < spec.count {
        let mut attempts = 0;
        let record = loop {
            if attempts == MAX_REJECTIONS {
                return Err(Error::RejectionExhausted(MAX_REJECTIONS));
            }
            attempts += 1;
            let at = spec.sample_root_image_point(&mut rng);
            let depth = uniform(&mut rng, spec.depth_mm[0], spec.depth_mm[1]);
            let orientation = spec.sample_orientation(&mut rng);
            let center = cam.backproject(at) * depth;
            let Ok(cube) = CubeInstance::new(center, orientation, DEFAULT_CUBE_EDGE) else {
                continue;
            };
            let pose3d = cube.keypoints();
            if let Some(mut joints) = project_in_frame(cam, &pose3d.joints) {
                if spec.placement == Placement::Centered {
                    joints[0] = at;
                }
                break (cube, Sample {
                    pose2d: Pose2D { joints, root: 0 },
                    pose3d,
                });
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// How cube faces are lit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shading {
    /// Base color scaled by the cosine between face normal and view ray.
    #[default]
    FlatPerFace,
    /// Unmodulated base colors.
    Ambient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub shading: Shading,
    pub background: [f64; 3],
    /// Subsamples per pixel along each axis.
    pub supersample: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            shading: Shading::FlatPerFace,
            background: [0.0; 3],
            supersample: 1,
        }
    }
}

struct ScreenQuad {
    corners: [Vector2<f64>; 4],
    color: [f64; 3],
    min: Vector2<f64>,
    max: Vector2<f64>,
}

impl ScreenQuad {
    fn contains(&self, p: &Vector2<f64>) -> bool {
        let mut pos = false;
        let mut neg = false;
        for i in 0..4 {
            let a = self.corners[i];
            let b = self.corners[(i + 1) % 4];
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            pos |= cross > 0.0;
            neg |= cross < 0.0;
        }
        !(pos && neg)
    }
}

/// Painter's-algorithm rendering of a cube as an RGB image.
///
/// Faces pointing away from the camera are culled; the remaining faces of a
/// convex cube never overlap, but are still drawn far-to-near.
pub fn rasterize_cube(
    cube: &CubeInstance,
    intr: &CameraIntrinsics,
    out_h: usize,
    out_w: usize,
    opts: &RenderOptions,
) -> Result<Image> {
    if out_h == 0 || out_w == 0 || opts.supersample == 0 {
        return Err(Error::InvalidInput("render size and supersampling must be positive".into()));
    }
    let verts = cube.vertices();
    let mut faces: Vec<(f64, ScreenQuad)> = Vec::new();
    for (k, (axis, sign, idx)) in FACES.iter().enumerate() {
        let normal = cube.orientation * (Vector3::ith(*axis, 1.0) * *sign);
        let center = idx.iter().map(|&i| verts[i]).sum::<Vector3<f64>>() / 4.0;
        let facing = -normal.dot(&center.normalize());
        if facing <= 0.0 {
            continue;
        }
        let mut corners = [Vector2::zeros(); 4];
        for (c, &i) in corners.iter_mut().zip(idx) {
            let q = intr.project(&verts[i])?;
            *c = Vector2::new(q.x * out_w as f64, q.y * out_h as f64);
        }
        let min = corners.iter().fold(Vector2::repeat(f64::INFINITY), |m, c| m.inf(c));
        let max = corners.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |m, c| m.sup(c));
        let shade = match opts.shading {
            Shading::FlatPerFace => 0.25 + 0.75 * facing,
            Shading::Ambient => 1.0,
        };
        let color = FACE_COLORS[k].map(|v| v * shade);
        faces.push((center.norm(), ScreenQuad {
            corners,
            color,
            min,
            max,
        }));
    }
    faces.sort_by(|a, b| b.0.total_cmp(&a.0));

    let ss = opts.supersample;
    let weight = 1.0 / (ss * ss) as f64;
    let mut data = Vec::with_capacity(out_h * out_w * 3);
    for r in 0..out_h {
        for c in 0..out_w {
            let mut acc = [0.0; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    let p = Vector2::new(
                        c as f64 + (sx as f64 + 0.5) / ss as f64,
                        r as f64 + (sy as f64 + 0.5) / ss as f64,
                    );
                    let mut color = opts.background;
                    for (_, f) in &faces {
                        if p.x >= f.min.x && p.x <= f.max.x && p.y >= f.min.y && p.y <= f.max.y && f.contains(&p) {
                            color = f.color;
                        }
                    }
                    for k in 0..3 {
                        acc[k] += color[k] * weight;
                    }
                }
            }
            data.extend_from_slice(&acc);
        }
    }
    Image::new(out_h, out_w, 3, data)
}

// ---------------------------------------------------------------------------
// Stick figures

/// Number of joints in the figure skeleton.
pub const FIGURE_JOINTS: usize = 17;

/// Joint names in skeleton order (pelvis first).
pub const JOINT_NAMES: [&str; FIGURE_JOINTS] = [
    "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine", "thorax",
    "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
];

/// Parent of each joint; the pelvis is its own parent.
pub const PARENTS: [usize; FIGURE_JOINTS] = [0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15];

/// Rest-pose offset of each joint from its parent, in mm (x right, y down).
///
/// Bone lengths follow average adult proportions: hip half-width 130,
/// thigh 450, shin 440, lower spine 230, upper spine 250, neck 110, head
/// 115, clavicle 150, upper arm 280, forearm 250.
pub const REST_OFFSETS: [[f64; 3]; FIGURE_JOINTS] = [
    [0.0, 0.0, 0.0],
    [-130.0, 0.0, 0.0],
    [0.0, 450.0, 0.0],
    [0.0, 440.0, 0.0],
    [130.0, 0.0, 0.0],
    [0.0, 450.0, 0.0],
    [0.0, 440.0, 0.0],
    [0.0, -230.0, 0.0],
    [0.0, -250.0, 0.0],
    [0.0, -110.0, 0.0],
    [0.0, -115.0, 0.0],
    [150.0, 0.0, 0.0],
    [280.0, 0.0, 0.0],
    [250.0, 0.0, 0.0],
    [-150.0, 0.0, 0.0],
    [-280.0, 0.0, 0.0],
    [-250.0, 0.0, 0.0],
];

/// Articulation limit in degrees of the rotation applied at each joint to its
/// child bones, per axis (x, y, z).
const JOINT_LIMITS_DEG: [[f64; 3]; FIGURE_JOINTS] = [
    [0.0, 0.0, 0.0],
    [50.0, 20.0, 25.0],
    [45.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
    [50.0, 20.0, 25.0],
    [45.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
    [20.0, 20.0, 15.0],
    [15.0, 25.0, 15.0],
    [25.0, 30.0, 15.0],
    [0.0, 0.0, 0.0],
    [40.0, 40.0, 60.0],
    [0.0, 60.0, 0.0],
    [0.0, 0.0, 0.0],
    [40.0, 40.0, 60.0],
    [0.0, 60.0, 0.0],
    [0.0, 0.0, 0.0],
];

/// Flexion centers (x axis, degrees) so knees and elbows bend one way.
const JOINT_BIAS_DEG: [[f64; 3]; FIGURE_JOINTS] = {
    let mut b = [[0.0; 3]; FIGURE_JOINTS];
    b[2] = [-45.0, 0.0, 0.0];
    b[5] = [-45.0, 0.0, 0.0];
    b[12] = [0.0, 60.0, 0.0];
    b[15] = [0.0, -60.0, 0.0];
    b
};

/// Skeleton topology and bone lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct StickFigure {
    pub root: usize,
    pub bones: Vec<(usize, usize)>,
    pub bone_lengths: Vec<f64>,
}

impl StickFigure {
    pub fn standard() -> Self {
        let bones: Vec<(usize, usize)> = (1..FIGURE_JOINTS).map(|j| (PARENTS[j], j)).collect();
        let bone_lengths = bones
            .iter()
            .map(|&(_, j)| Vector3::from(REST_OFFSETS[j]).norm())
            .collect();
        StickFigure {
            root: 0,
            bones,
            bone_lengths,
        }
    }

    /// Bone lengths of an arbitrary pose under this topology.
    pub fn measure(&self, pose: &Pose3D) -> Vec<f64> {
        self.bones
            .iter()
            .map(|&(a, b)| (pose.joints[a] - pose.joints[b]).norm())
            .collect()
    }

    /// Forward kinematics: joint positions relative to the pelvis in the body frame.
    ///
    /// `angles[j]` are per-axis Euler angles (radians) of the rotation at
    /// joint `j`, applied to all bones below it.
    pub fn forward_kinematics(&self, angles: &[[f64; 3]; FIGURE_JOINTS]) -> Vec<Vector3<f64>> {
        let mut world_rot = [Rotation3::identity(); FIGURE_JOINTS];
        let mut pos = vec![Vector3::zeros(); FIGURE_JOINTS];
        for j in 0..FIGURE_JOINTS {
            let local = Rotation3::from_euler_angles(angles[j][0], angles[j][1], angles[j][2]);
            if j == self.root {
                world_rot[j] = local;
                continue;
            }
            let p = PARENTS[j];
            pos[j] = pos[p] + world_rot[p] * Vector3::from(REST_OFFSETS[j]);
            world_rot[j] = world_rot[p] * local;
        }
        pos
    }
}

fn sample_articulation(rng: &mut ChaCha8Rng, scale: f64) -> [[f64; 3]; FIGURE_JOINTS] {
    let mut angles = [[0.0; 3]; FIGURE_JOINTS];
    for j in 0..FIGURE_JOINTS {
        for k in 0..3 {
            let lim = JOINT_LIMITS_DEG[j][k] * scale;
            let bias = JOINT_BIAS_DEG[j][k] * scale.min(1.0);
            angles[j][k] = (bias + uniform(rng, -lim, lim)).to_radians();
        }
    }
    angles
}

/// Generates articulated figures with their 2D projections.
///
/// The root's image position is drawn first; articulation, orientation and
/// depth are then redrawn until the whole figure fits in the frame, so the
/// root position stays uniformly distributed.
pub fn gen_figure_dataset(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = spec.rng();
    let cam = &spec.camera;
    let figure = StickFigure::standard();
    let mut out = Vec::with_capacity(spec.count);
    while out.len() < spec.count {
        let at = spec.sample_root_image_point(&mut rng);
        let ray = cam.backproject(at);
        let mut attempts = 0;
        let sample = loop {
            if attempts == MAX_REJECTIONS {
                return Err(Error::RejectionExhausted(MAX_REJECTIONS));
            }
            attempts += 1;
            let angles = sample_articulation(&mut rng, spec.articulation);
            let orientation = spec.sample_orientation(&mut rng);
            let depth = uniform(&mut rng, spec.depth_mm[0], spec.depth_mm[1]);
            let root = ray * depth;
            let joints: Vec<Vector3<f64>> = figure
                .forward_kinematics(&angles)
                .iter()
                .map(|j| root + orientation * j)
                .collect();
            if let Some(mut joints2d) = project_in_frame(cam, &joints) {
                joints2d[figure.root] = at;
                break Sample {
                    pose2d: Pose2D {
                        joints: joints2d,
                        root: figure.root,
                    },
                    pose3d: Pose3D {
                        joints,
                        root: figure.root,
                    },
                };
            }
        };
        out.push(sample);
    }
    Ok(out)
}
