use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kin::{Dim, JointConfig, Pose, RobotModel};
use crate::net::{frame_feature, NetworkParams};
use crate::objective::ObjectiveWeights;
use crate::par::Execution;
use crate::train::is_collision_free;
use crate::world::{DistanceField, WorldFeature};

use super::prediction_error;

/// How joint space is covered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSampling {
    /// `per_joint` evenly spaced values per joint, limits included.
    Grid { per_joint: usize },
    Random { n: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    /// Cells per side of the square map.
    pub resolution: usize,
    pub n_orientation_bins: usize,
    /// Map covers `[−extent, extent]²`; `None` uses the arm's reach.
    pub extent: Option<f64>,
    pub sampling: MapSampling,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            resolution: 64,
            n_orientation_bins: 360,
            extent: None,
            sampling: MapSampling::Random {
                n: 1_000_000,
                seed: 0,
            },
        }
    }
}

/// Per-cell reachability and network error over a planar workspace grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMap {
    pub resolution: usize,
    pub extent: f64,
    pub n_orientation_bins: usize,
    /// Row-major, row 0 at the lowest y.
    pub feasible: Vec<bool>,
    pub reached_bins: Vec<usize>,
    /// Worst position error of the best head over reached orientations.
    pub max_pos_error: Vec<Option<f64>>,
    pub max_rot_error: Vec<Option<f64>>,
}

impl WorkspaceMap {
    pub fn cell_of(&self, x: f64, y: f64) -> Option<usize> {
        cell_index(self.resolution, self.extent, x, y)
    }

    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        let c = 2.0 * self.extent / self.resolution as f64;
        let (i, j) = (idx % self.resolution, idx / self.resolution);
        (-self.extent + (i as f64 + 0.5) * c, -self.extent + (j as f64 + 0.5) * c)
    }

    pub fn feasible_count(&self) -> usize {
        self.feasible.iter().filter(|&&f| f).count()
    }

    /// 8-bit image rows, top row first. Feasibility maps to 255/0; error
    /// layers scale linearly to `max`, with unreachable cells black.
    pub fn to_gray8(&self, layer: MapLayer, max: f64) -> Vec<u8> {
        let r = self.resolution;
        let mut out = Vec::with_capacity(r * r);
        for j in (0..r).rev() {
            for i in 0..r {
                let k = j * r + i;
                let v = match layer {
                    MapLayer::Feasible => {
                        if self.feasible[k] {
                            255
                        } else {
                            0
                        }
                    }
                    MapLayer::PosError | MapLayer::RotError => {
                        let e = if layer == MapLayer::PosError {
                            self.max_pos_error[k]
                        } else {
                            self.max_rot_error[k]
                        };
                        e.map_or(0, |e| (1.0 + 254.0 * (e / max).clamp(0.0, 1.0)).round() as u8)
                    }
                };
                out.push(v);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell,x,y,feasible,reached_bins,max_pos_error,max_rot_error\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |e| e.to_string());
        for k in 0..self.feasible.len() {
            let (x, y) = self.cell_center(k);
            s.push_str(&format!(
                "{k},{x},{y},{},{},{},{}\n",
                self.feasible[k] as u8,
                self.reached_bins[k],
                opt(self.max_pos_error[k]),
                opt(self.max_rot_error[k])
            ));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapLayer {
    Feasible,
    PosError,
    RotError,
}

fn cell_index(res: usize, extent: f64, x: f64, y: f64) -> Option<usize> {
    let c = 2.0 * extent / res as f64;
    let i = ((x + extent) / c).floor();
    let j = ((y + extent) / c).floor();
    if i < 0.0 || j < 0.0 || i >= res as f64 || j >= res as f64 {
        return None;
    }
    Some(j as usize * res + i as usize)
}

fn orientation_bin(n: usize, angle: f64) -> usize {
    (((angle + PI) / (2.0 * PI) * n as f64).floor() as usize).min(n - 1)
}

fn reach(robot: &RobotModel) -> f64 {
    let mut r: f64 = robot.joints.iter().map(|j| j.offset.translation.norm()).sum();
    if let Some(t) = &robot.tip {
        r += t.translation.norm();
    }
    r
}

fn config_at(robot: &RobotModel, sampling: MapSampling, idx: usize) -> JointConfig {
    match sampling {
        MapSampling::Grid { per_joint } => {
            let mut rest = idx;
            JointConfig::new(
                robot
                    .joints
                    .iter()
                    .map(|j| {
                        let k = rest % per_joint;
                        rest /= per_joint;
                        if per_joint == 1 {
                            j.midpoint()
                        } else {
                            j.lower + (j.upper - j.lower) * k as f64 / (per_joint - 1) as f64
                        }
                    })
                    .collect(),
            )
        }
        MapSampling::Random { seed, .. } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            crate::solver::random_config(robot, &mut rng)
        }
    }
}

/// Sample joint space, bin collision-free TCP poses by cell and orientation,
/// and optionally record the network's best-head error at each reached bin.
pub fn build_maps(
    robot: &RobotModel,
    field: &DistanceField,
    weights: ObjectiveWeights,
    cfg: &MapConfig,
    net: Option<(&NetworkParams, &WorldFeature)>,
    exec: Execution,
) -> Result<WorkspaceMap> {
    if robot.dim != Dim::Planar {
        return Err(Error::InvalidArgument("maps need a planar robot".into()));
    }
    if cfg.resolution == 0 || cfg.n_orientation_bins == 0 {
        return Err(Error::InvalidArgument("map resolution and bins must be positive".into()));
    }
    let extent = cfg.extent.unwrap_or_else(|| reach(robot) * 1.05);
    let total = match cfg.sampling {
        MapSampling::Grid { per_joint } => per_joint
            .checked_pow(robot.n_dof() as u32)
            .ok_or_else(|| Error::InvalidArgument("joint grid too large".into()))?,
        MapSampling::Random { n, .. } => n,
    };
    let res = cfg.resolution;
    let chunk = 4096;
    let n_chunks = total.div_ceil(chunk);
    let parts = exec.map_range(n_chunks, |c| {
        let mut local: BTreeMap<(usize, usize), (usize, Pose)> = BTreeMap::new();
        for idx in c * chunk..((c + 1) * chunk).min(total) {
            let q = config_at(robot, cfg.sampling, idx);
            let tcp = robot.frames(q.as_slice())[robot.tcp_frame].clone();
            let Some(cell) = cell_index(res, extent, tcp.translation.x, tcp.translation.y) else {
                continue;
            };
            if !is_collision_free(robot, field, &q, weights) {
                continue;
            }
            let bin = orientation_bin(cfg.n_orientation_bins, tcp.planar_angle());
            local.entry((cell, bin)).or_insert((idx, tcp));
        }
        local
    });
    let mut reached: BTreeMap<(usize, usize), (usize, Pose)> = BTreeMap::new();
    for part in parts {
        for (k, v) in part {
            match reached.get(&k) {
                Some((idx, _)) if *idx <= v.0 => {}
                _ => {
                    reached.insert(k, v);
                }
            }
        }
    }
    let mut map = WorkspaceMap {
        resolution: res,
        extent,
        n_orientation_bins: cfg.n_orientation_bins,
        feasible: vec![false; res * res],
        reached_bins: vec![0; res * res],
        max_pos_error: vec![None; res * res],
        max_rot_error: vec![None; res * res],
    };
    for &(cell, _) in reached.keys() {
        map.feasible[cell] = true;
        map.reached_bins[cell] += 1;
    }
    if let Some((params, feature)) = net {
        params.ensure_compatible(robot, None)?;
        let entries: Vec<_> = reached.iter().map(|(&(cell, _), (_, pose))| (cell, pose)).collect();
        let batches: Vec<_> = entries.chunks(1024).collect();
        let errs = exec.map(&batches, |_, b| -> Result<Vec<(usize, f64, f64)>> {
            let frames: Vec<_> = b.iter().map(|(_, p)| frame_feature(Dim::Planar, p)).collect();
            let inputs: Vec<_> = frames.iter().map(|f| (feature, f)).collect();
            let x = params.input_matrix(&inputs)?;
            let (q, _) = params.forward_batch(&x)?;
            Ok(b.iter()
                .enumerate()
                .map(|(c, (cell, pose))| {
                    let (p, r) = best_head_error(robot, &q, c, pose);
                    (*cell, p, r)
                })
                .collect())
        });
        for e in errs {
            for (cell, p, r) in e? {
                let mp = map.max_pos_error[cell].get_or_insert(0.0);
                *mp = mp.max(p);
                let mr = map.max_rot_error[cell].get_or_insert(0.0);
                *mr = mr.max(r);
            }
        }
    }
    Ok(map)
}

fn best_head_error(robot: &RobotModel, q: &[DMatrix<f64>], c: usize, target: &Pose) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for m in q {
        let (p, r) = prediction_error(robot, &JointConfig::from_vector(m.column(c).into_owned()), target);
        best.0 = best.0.min(p);
        best.1 = best.1.min(r);
    }
    best
}
