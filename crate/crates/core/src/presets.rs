//! Built-in robots used by tests, benchmarks and the CLI.

use std::f64::consts::PI;

use nalgebra::{Unit, Vector3};

use crate::kin::{Dim, Joint, JointConfig, LinkGeometry, Pose, RobotModel, Sphere};

/// Planar arm with `n` equal links along local x, every joint limited to
/// `[-π, π]`, `spheres_per_link` spheres evenly spaced up to each link tip
/// and a fixed tip frame as TCP.
pub fn planar_arm(n: usize, link_length: f64, sphere_radius: f64, spheres_per_link: usize) -> RobotModel {
    planar_arm_with_limits(n, link_length, sphere_radius, spheres_per_link, PI)
}

/// Same as [`planar_arm`] with joints after the first limited to `±elbow_limit`.
pub fn planar_arm_with_limits(
    n: usize,
    link_length: f64,
    sphere_radius: f64,
    spheres_per_link: usize,
    elbow_limit: f64,
) -> RobotModel {
    let joints = (0..n)
        .map(|k| {
            let lim = if k == 0 { PI } else { elbow_limit };
            Joint {
                axis: Vector3::z_axis(),
                offset: Pose::planar(if k == 0 { 0.0 } else { link_length }, 0.0, 0.0),
                lower: -lim,
                upper: lim,
            }
        })
        .collect();
    let mut links: Vec<LinkGeometry> = (0..n)
        .map(|_| LinkGeometry {
            spheres: (1..=spheres_per_link)
                .map(|m| Sphere {
                    center: Vector3::new(link_length * m as f64 / spheres_per_link as f64, 0.0, 0.0),
                    radius: sphere_radius,
                })
                .collect(),
        })
        .collect();
    links.push(LinkGeometry::default());
    let self_collision_pairs = (0..n)
        .flat_map(|i| (i + 2..n).map(move |j| (i, j)))
        .collect();
    RobotModel {
        name: format!("planar{n}"),
        dim: Dim::Planar,
        joints,
        tip: Some(Pose::planar(link_length, 0.0, 0.0)),
        links,
        tcp_frame: n,
        default_config: JointConfig::zeros(n),
        self_collision_pairs,
    }
}

/// Desk-scale 5-DoF planar arm: 0.18 m links (0.9 m reach), four 3 cm
/// spheres per link, elbows limited to ±0.8π.
pub fn flat_arm5() -> RobotModel {
    let mut r = planar_arm_with_limits(5, 0.18, 0.03, 4, 0.8 * PI);
    r.name = "flat5".into();
    r
}

/// Desk-scale 3-DoF planar arm with full-circle joints; its IK has two
/// discrete solution modes (elbow up / elbow down).
pub fn flat_arm3() -> RobotModel {
    let mut r = planar_arm(3, 0.3, 0.03, 3);
    r.name = "flat3".into();
    r
}

/// 7-DoF spatial arm with alternating z/y axes in the proportions of a
/// lightweight manipulator, scaled to a 0.83 m reach.
pub fn spatial_arm7() -> RobotModel {
    let deg = PI / 180.0;
    let z = Vector3::z_axis();
    let y = Vector3::y_axis();
    let spec: [(f64, Unit<Vector3<f64>>, f64); 7] = [
        (0.22, z, 170.0),
        (0.0, y, 120.0),
        (0.14, z, 170.0),
        (0.14, y, 120.0),
        (0.135, z, 170.0),
        (0.135, y, 120.0),
        (0.0, z, 170.0),
    ];
    let joints: Vec<Joint> = spec
        .iter()
        .map(|&(dz, axis, lim)| Joint {
            axis,
            offset: Pose::from_xyz_rpy([0.0, 0.0, dz], [0.0; 3]),
            lower: -lim * deg,
            upper: lim * deg,
        })
        .collect();
    let tip_len = 0.055;
    // Length of the segment carried by each frame, up to the next joint origin.
    let seg: Vec<f64> = (0..7)
        .map(|k| if k + 1 < 7 { spec[k + 1].0 } else { tip_len })
        .collect();
    let radius = 0.05;
    let mut links: Vec<LinkGeometry> = seg
        .iter()
        .map(|&len| {
            let n = (len / 0.07).ceil() as usize;
            LinkGeometry {
                spheres: (1..=n)
                    .map(|m| Sphere {
                        center: Vector3::new(0.0, 0.0, len * m as f64 / n as f64),
                        radius,
                    })
                    .collect(),
            }
        })
        .collect();
    links.push(LinkGeometry::default());
    let with_spheres: Vec<usize> = (0..links.len()).filter(|&i| !links[i].spheres.is_empty()).collect();
    let mut pairs = Vec::new();
    for &i in &with_spheres {
        for &j in &with_spheres {
            if j >= i + 3 {
                pairs.push((i, j));
            }
        }
    }
    RobotModel {
        name: "spatial7".into(),
        dim: Dim::Spatial,
        joints,
        tip: Some(Pose::from_xyz_rpy([0.0, 0.0, tip_len], [0.0; 3])),
        links,
        tcp_frame: 7,
        default_config: JointConfig::new(vec![0.0, 0.6, 0.0, -1.2, 0.0, 0.6, 0.0]),
        self_collision_pairs: pairs,
    }
}
