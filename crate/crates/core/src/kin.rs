//! Serial-chain forward kinematics, geometric Jacobians and the sphere
//! collision model.
//!
//! Planar and spatial robots share one code path: everything is computed
//! with 3D transforms, and planar robots keep `z = 0` with every joint
//! rotating about the z axis. [`Dim`] decides which rows of a Jacobian and
//! which coordinates of a point are meaningful.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

/// Spatial dimension of a robot and its world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    Planar,
    Spatial,
}

impl Dim {
    /// Number of positional coordinates (2 or 3).
    pub fn n(self) -> usize {
        match self {
            Dim::Planar => 2,
            Dim::Spatial => 3,
        }
    }

    /// Number of rotational task coordinates (1 or 3).
    pub fn n_rot(self) -> usize {
        match self {
            Dim::Planar => 1,
            Dim::Spatial => 3,
        }
    }

    /// Rows of a task-space Jacobian: positional rows then rotational rows.
    pub fn task_dim(self) -> usize {
        self.n() + self.n_rot()
    }

    /// Indices into a full 6-row twist `[v; w]` used by this dimension.
    pub(crate) fn task_rows(self) -> &'static [usize] {
        match self {
            Dim::Planar => &[0, 1, 5],
            Dim::Spatial => &[0, 1, 2, 3, 4, 5],
        }
    }
}

impl TryFrom<u8> for Dim {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            2 => Ok(Dim::Planar),
            3 => Ok(Dim::Spatial),
            other => Err(format!("dim must be 2 or 3, got {other}")),
        }
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.n() as u8
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}D", self.n())
    }
}

/// Joint angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct JointConfig(DVector<f64>);

impl JointConfig {
    pub fn new(values: Vec<f64>) -> Self {
        JointConfig(DVector::from_vec(values))
    }

    pub fn zeros(n: usize) -> Self {
        JointConfig(DVector::zeros(n))
    }

    pub fn from_vector(v: DVector<f64>) -> Self {
        JointConfig(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_vector_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig::new(v)
    }
}

impl From<JointConfig> for Vec<f64> {
    fn from(q: JointConfig) -> Self {
        q.0.as_slice().to_vec()
    }
}

impl std::ops::Index<usize> for JointConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for JointConfig {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Rigid transform. Planar poses keep `translation.z == 0` and rotate about z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            translation: Vector3::zeros(),
            rotation: Matrix3::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: Matrix3<f64>) -> Self {
        Pose {
            translation,
            rotation,
        }
    }

    pub fn planar(x: f64, y: f64, angle: f64) -> Self {
        Pose {
            translation: Vector3::new(x, y, 0.0),
            rotation: rot_z(angle),
        }
    }

    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Pose {
            translation: Vector3::from(xyz),
            rotation: Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).into_inner(),
        }
    }

    /// `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.translation + self.rotation * other.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }

    /// Rotation angle about z; meaningful for planar poses.
    pub fn planar_angle(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Max absolute entry of `R Rᵀ - I`, plus a determinant check.
    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let e = self.rotation * self.rotation.transpose() - Matrix3::identity();
        e.amax() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

pub(crate) fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Wrap an angle to `[-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r < -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    /// Center in the owning frame. Planar robots use `z = 0`.
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub spheres: Vec<Sphere>,
}

/// A revolute joint. Its frame is `parent * offset * Rot(axis, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub axis: Unit<Vector3<f64>>,
    pub offset: Pose,
    pub lower: f64,
    pub upper: f64,
}

impl Joint {
    fn motion(&self, q: f64) -> Matrix3<f64> {
        let a = self.axis.as_ref();
        if a.x == 0.0 && a.y == 0.0 && a.z == 1.0 {
            rot_z(q)
        } else {
            Rotation3::from_axis_angle(&self.axis, q).into_inner()
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// A sphere expressed in the world frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSphere {
    pub frame: usize,
    /// Index of the sphere within its frame's [`LinkGeometry`].
    pub index: usize,
    pub local: Vector3<f64>,
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Serial revolute chain with a sphere decomposition per frame.
///
/// Frames `0..n_dof` are the joint frames; an optional fixed `tip` adds
/// frame `n_dof`.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub dim: Dim,
    pub joints: Vec<Joint>,
    pub tip: Option<Pose>,
    pub links: Vec<LinkGeometry>,
    pub tcp_frame: usize,
    pub default_config: JointConfig,
    pub self_collision_pairs: Vec<(usize, usize)>,
}

impl RobotModel {
    pub fn n_dof(&self) -> usize {
        self.joints.len()
    }

    pub fn n_frames(&self) -> usize {
        self.joints.len() + usize::from(self.tip.is_some())
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_dof(), self.joints.iter().map(|j| j.upper))
    }

    pub fn limit_midpoint(&self) -> JointConfig {
        JointConfig::new(self.joints.iter().map(Joint::midpoint).collect())
    }

    pub fn n_spheres(&self) -> usize {
        self.links.iter().map(|l| l.spheres.len()).sum()
    }

    /// Number of joints that move `frame`.
    pub fn joints_moving(&self, frame: usize) -> usize {
        (frame + 1).min(self.n_dof())
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.as_slice()
            .iter()
            .zip(&self.joints)
            .all(|(v, j)| *v >= j.lower && *v <= j.upper)
    }

    /// Clamp `q` into the joint limits in place.
    pub fn clamp(&self, q: &mut DVector<f64>) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidRobot(msg));
        if self.joints.is_empty() {
            return invalid("robot has no joints".into());
        }
        for (k, j) in self.joints.iter().enumerate() {
            if !(j.lower < j.upper) {
                return invalid(format!("joint {k}: lower limit must be below upper limit"));
            }
            if !Pose::is_orthonormal(&j.offset, ROTATION_TOL) {
                return invalid(format!("joint {k}: offset rotation is not orthonormal"));
            }
            if self.dim == Dim::Planar {
                let a = j.axis.as_ref();
                if a.x.abs() > 1e-12 || a.y.abs() > 1e-12 || a.z < 0.0 {
                    return invalid(format!("joint {k}: planar joints rotate about +z"));
                }
                if j.offset.translation.z != 0.0 {
                    return invalid(format!("joint {k}: planar offsets must have z = 0"));
                }
            }
        }
        if self.links.len() != self.n_frames() {
            return invalid(format!(
                "expected link geometry for {} frames, got {}",
                self.n_frames(),
                self.links.len()
            ));
        }
        for (i, l) in self.links.iter().enumerate() {
            for s in &l.spheres {
                if !(s.radius > 0.0) {
                    return invalid(format!("frame {i}: sphere radius must be positive"));
                }
                if self.dim == Dim::Planar && s.center.z != 0.0 {
                    return invalid(format!("frame {i}: planar sphere centers must have z = 0"));
                }
            }
        }
        if self.tcp_frame >= self.n_frames() {
            return invalid(format!("tcp frame {} out of range", self.tcp_frame));
        }
        if self.default_config.len() != self.n_dof() {
            return invalid("default configuration length mismatch".into());
        }
        if !self.within_limits(&self.default_config) {
            return invalid("default configuration outside joint limits".into());
        }
        for &(i, j) in &self.self_collision_pairs {
            if !(j > i && j < self.n_frames()) {
                return invalid(format!("self-collision pair ({i}, {j}) invalid"));
            }
        }
        Ok(())
    }

    fn check_config(&self, q: &JointConfig) -> Result<()> {
        if q.len() != self.n_dof() {
            return Err(Error::DimensionMismatch {
                what: "joint configuration",
                expected: self.n_dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    fn check_frame(&self, frame: usize) -> Result<()> {
        if frame >= self.n_frames() {
            return Err(Error::InvalidFrame {
                frame,
                n_frames: self.n_frames(),
            });
        }
        Ok(())
    }

    /// One pose per frame, composed base to tip.
    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<Vec<Pose>> {
        self.check_config(q)?;
        Ok(self.frames(q.as_slice()))
    }

    /// Forward kinematics without the length check. Panics on short input.
    pub(crate) fn frames(&self, q: &[f64]) -> Vec<Pose> {
        let mut out = Vec::with_capacity(self.n_frames());
        let mut parent = Pose::identity();
        for (j, &angle) in self.joints.iter().zip(q) {
            let mut f = parent.compose(&j.offset);
            f.rotation *= j.motion(angle);
            out.push(f.clone());
            parent = f;
        }
        if let Some(tip) = &self.tip {
            out.push(parent.compose(tip));
        }
        out
    }

    /// World-frame axis of each joint, given precomputed frames.
    pub(crate) fn joint_axes(&self, frames: &[Pose]) -> Vec<Vector3<f64>> {
        self.joints
            .iter()
            .enumerate()
            .map(|(k, j)| frames[k].rotation * j.axis.as_ref())
            .collect()
    }

    /// Full 6×N twist Jacobian `[v; w]` of `point` rigidly attached to `frame`.
    pub(crate) fn twist_jacobian(
        &self,
        frames: &[Pose],
        axes: &[Vector3<f64>],
        frame: usize,
        point: &Vector3<f64>,
    ) -> DMatrix<f64> {
        let n = self.n_dof();
        let mut jac = DMatrix::zeros(6, n);
        for k in 0..self.joints_moving(frame) {
            let w = axes[k];
            let v = w.cross(&(point - frames[k].translation));
            jac[(0, k)] = v.x;
            jac[(1, k)] = v.y;
            jac[(2, k)] = v.z;
            jac[(3, k)] = w.x;
            jac[(4, k)] = w.y;
            jac[(5, k)] = w.z;
        }
        jac
    }

    /// Positional Jacobian (D×N) of `point` attached to `frame`.
    pub(crate) fn point_jacobian(
        &self,
        frames: &[Pose],
        axes: &[Vector3<f64>],
        frame: usize,
        point: &Vector3<f64>,
    ) -> DMatrix<f64> {
        let d = self.dim.n();
        let n = self.n_dof();
        let mut jac = DMatrix::zeros(d, n);
        for k in 0..self.joints_moving(frame) {
            let v = axes[k].cross(&(point - frames[k].translation));
            for r in 0..d {
                jac[(r, k)] = v[r];
            }
        }
        jac
    }

    /// Task Jacobian from precomputed frames: positional rows then rotational rows.
    pub(crate) fn task_jacobian(&self, frames: &[Pose], axes: &[Vector3<f64>], frame: usize) -> DMatrix<f64> {
        let full = self.twist_jacobian(frames, axes, frame, &frames[frame].translation);
        select_rows(&full, self.dim.task_rows())
    }

    /// Geometric Jacobian of `frame`: `D` positional rows then 1 (planar) or
    /// 3 (spatial) angular rows.
    pub fn geometric_jacobian(&self, q: &JointConfig, frame: usize) -> Result<DMatrix<f64>> {
        self.check_config(q)?;
        self.check_frame(frame)?;
        let frames = self.frames(q.as_slice());
        let axes = self.joint_axes(&frames);
        Ok(self.task_jacobian(&frames, &axes, frame))
    }

    pub fn sphere_positions(&self, q: &JointConfig) -> Result<Vec<WorldSphere>> {
        self.check_config(q)?;
        let frames = self.frames(q.as_slice());
        Ok(self.world_spheres(&frames))
    }

    pub(crate) fn world_spheres(&self, frames: &[Pose]) -> Vec<WorldSphere> {
        let mut out = Vec::with_capacity(self.n_spheres());
        for (i, (link, pose)) in self.links.iter().zip(frames).enumerate() {
            for (k, s) in link.spheres.iter().enumerate() {
                out.push(WorldSphere {
                    frame: i,
                    index: k,
                    local: s.center,
                    center: pose.transform_point(&s.center),
                    radius: s.radius,
                });
            }
        }
        out
    }

    /// Positional Jacobian (D×N) of a point given in `frame`'s local coordinates.
    pub fn sphere_jacobian(
        &self,
        q: &JointConfig,
        frame: usize,
        local_center: &Vector3<f64>,
    ) -> Result<DMatrix<f64>> {
        self.check_config(q)?;
        self.check_frame(frame)?;
        let frames = self.frames(q.as_slice());
        let axes = self.joint_axes(&frames);
        let world = frames[frame].transform_point(local_center);
        Ok(self.point_jacobian(&frames, &axes, frame, &world))
    }
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}
