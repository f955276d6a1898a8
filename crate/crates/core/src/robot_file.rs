//! Text robot description.
//!
//! ```toml
//! schema_version = 1
//! name = "planar2"
//! dim = 2                       # 2 = planar, 3 = spatial
//! tcp_frame = 2                 # index into the frame list
//! default_config = [0.0, 0.0]
//! self_collision_pairs = []     # [[i, j], ...] with j > i
//!
//! [[joints]]
//! origin = [0.0, 0.0]           # offset from the parent frame, length `dim`
//! angle = 0.0                   # planar offset rotation; spatial robots use `rpy = [r, p, y]`
//! axis = [0.0, 0.0, 1.0]        # optional, defaults to +z
//! lower = -3.14159
//! upper = 3.14159
//!
//! [tip]                         # optional fixed frame after the last joint
//! origin = [1.0, 0.0]
//!
//! [[links]]                     # one entry per frame (joints, then tip)
//! spheres = [{ center = [0.5, 0.0], radius = 0.1 }]
//! ```

use std::path::Path;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kin::{Dim, Joint, JointConfig, LinkGeometry, Pose, RobotModel, Sphere};

pub const ROBOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    schema_version: u32,
    name: String,
    dim: u8,
    tcp_frame: usize,
    default_config: Vec<f64>,
    #[serde(default)]
    self_collision_pairs: Vec<[usize; 2]>,
    joints: Vec<JointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tip: Option<OffsetSpec>,
    links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OffsetSpec {
    origin: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rpy: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointSpec {
    origin: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rpy: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSpec {
    #[serde(default)]
    spheres: Vec<SphereSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereSpec {
    center: Vec<f64>,
    radius: f64,
}

fn point(dim: Dim, v: &[f64], what: &str) -> Result<Vector3<f64>> {
    if v.len() != dim.n() {
        return Err(Error::InvalidRobot(format!(
            "{what}: expected {} coordinates, got {}",
            dim.n(),
            v.len()
        )));
    }
    let mut p = Vector3::zeros();
    p.as_mut_slice()[..v.len()].copy_from_slice(v);
    Ok(p)
}

fn offset_pose(dim: Dim, origin: &[f64], angle: Option<f64>, rpy: Option<[f64; 3]>, what: &str) -> Result<Pose> {
    let t = point(dim, origin, what)?;
    match dim {
        Dim::Planar => {
            if rpy.is_some() {
                return Err(Error::InvalidRobot(format!("{what}: planar offsets use `angle`")));
            }
            Ok(Pose::planar(t.x, t.y, angle.unwrap_or(0.0)))
        }
        Dim::Spatial => {
            if angle.is_some() {
                return Err(Error::InvalidRobot(format!("{what}: spatial offsets use `rpy`")));
            }
            Ok(Pose::from_xyz_rpy(t.into(), rpy.unwrap_or([0.0; 3])))
        }
    }
}

fn offset_spec(dim: Dim, pose: &Pose) -> (Vec<f64>, Option<f64>, Option<[f64; 3]>) {
    let origin = pose.translation.as_slice()[..dim.n()].to_vec();
    match dim {
        Dim::Planar => {
            let a = pose.planar_angle();
            (origin, (a != 0.0).then_some(a), None)
        }
        Dim::Spatial => {
            let (r, p, y) = nalgebra::Rotation3::from_matrix_unchecked(pose.rotation).euler_angles();
            let rpy = [r, p, y];
            (origin, None, (rpy != [0.0; 3]).then_some(rpy))
        }
    }
}

impl RobotModel {
    pub fn from_toml_str(text: &str) -> Result<RobotModel> {
        let file: RobotFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.schema_version != ROBOT_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported robot schema version {}",
                file.schema_version
            )));
        }
        let dim = Dim::try_from(file.dim).map_err(Error::InvalidRobot)?;
        let joints = file
            .joints
            .iter()
            .enumerate()
            .map(|(k, j)| {
                let what = format!("joint {k}");
                let axis = Vector3::from(j.axis.unwrap_or([0.0, 0.0, 1.0]));
                if axis.norm() < 1e-12 {
                    return Err(Error::InvalidRobot(format!("{what}: zero axis")));
                }
                Ok(Joint {
                    axis: Unit::new_normalize(axis),
                    offset: offset_pose(dim, &j.origin, j.angle, j.rpy, &what)?,
                    lower: j.lower,
                    upper: j.upper,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let tip = file
            .tip
            .as_ref()
            .map(|t| offset_pose(dim, &t.origin, t.angle, t.rpy, "tip"))
            .transpose()?;
        let links = file
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let spheres = l
                    .spheres
                    .iter()
                    .map(|s| {
                        Ok(Sphere {
                            center: point(dim, &s.center, &format!("frame {i} sphere"))?,
                            radius: s.radius,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LinkGeometry { spheres })
            })
            .collect::<Result<Vec<_>>>()?;
        let robot = RobotModel {
            name: file.name,
            dim,
            joints,
            tip,
            links,
            tcp_frame: file.tcp_frame,
            default_config: JointConfig::new(file.default_config),
            self_collision_pairs: file
                .self_collision_pairs
                .iter()
                .map(|p| (p[0], p[1]))
                .collect(),
        };
        robot.validate()?;
        Ok(robot)
    }

    pub fn to_toml_string(&self) -> String {
        let dim = self.dim;
        let file = RobotFile {
            schema_version: ROBOT_SCHEMA_VERSION,
            name: self.name.clone(),
            dim: dim.into(),
            tcp_frame: self.tcp_frame,
            default_config: self.default_config.as_slice().to_vec(),
            self_collision_pairs: self.self_collision_pairs.iter().map(|&(i, j)| [i, j]).collect(),
            joints: self
                .joints
                .iter()
                .map(|j| {
                    let (origin, angle, rpy) = offset_spec(dim, &j.offset);
                    let a = j.axis.into_inner();
                    JointSpec {
                        origin,
                        angle,
                        rpy,
                        axis: (a != Vector3::z()).then_some(a.into()),
                        lower: j.lower,
                        upper: j.upper,
                    }
                })
                .collect(),
            tip: self.tip.as_ref().map(|t| {
                let (origin, angle, rpy) = offset_spec(dim, t);
                OffsetSpec { origin, angle, rpy }
            }),
            links: self
                .links
                .iter()
                .map(|l| LinkSpec {
                    spheres: l
                        .spheres
                        .iter()
                        .map(|s| SphereSpec {
                            center: s.center.as_slice()[..dim.n()].to_vec(),
                            radius: s.radius,
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("robot description serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RobotModel> {
        let text = std::fs::read_to_string(path)?;
        RobotModel::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    /// Stable identifier: name plus a digest of the canonical description.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        format!("{}-{}", self.name, &hex::encode(digest)[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn round_trip_presets() {
        for robot in [presets::planar_arm(5, 0.18, 0.03, 4), presets::spatial_arm7()] {
            let text = robot.to_toml_string();
            let back = RobotModel::from_toml_str(&text).unwrap();
            assert_eq!(back.id(), robot.id());
            let q = robot.default_config.clone();
            let a = robot.forward_kinematics(&q).unwrap();
            let b = back.forward_kinematics(&q).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x.translation - y.translation).amax() < 1e-12);
                assert!((x.rotation - y.rotation).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn parses_documented_example() {
        let text = r#"
schema_version = 1
name = "planar2"
dim = 2
tcp_frame = 2
default_config = [0.0, 0.0]

[[joints]]
origin = [0.0, 0.0]
lower = -3.14159
upper = 3.14159

[[joints]]
origin = [1.0, 0.0]
lower = -3.14159
upper = 3.14159

[tip]
origin = [1.0, 0.0]

[[links]]
spheres = [{ center = [0.5, 0.0], radius = 0.1 }]

[[links]]
spheres = [{ center = [0.5, 0.0], radius = 0.1 }]

[[links]]
"#;
        let r = RobotModel::from_toml_str(text).unwrap();
        assert_eq!(r.n_dof(), 2);
        assert_eq!(r.n_frames(), 3);
        let f = r.forward_kinematics(&JointConfig::zeros(2)).unwrap();
        assert!((f[2].translation.x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_schema_and_fields() {
        let robot = presets::planar_arm(2, 1.0, 0.1, 1);
        let text = robot.to_toml_string().replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(RobotModel::from_toml_str(&text), Err(Error::Parse(_))));
        let text = robot.to_toml_string().replace("dim = 2", "dim = 4");
        assert!(RobotModel::from_toml_str(&text).is_err());
    }
}
