use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kin::{Pose, RobotModel};
use crate::net::NetworkParams;
use crate::world::WorldFeature;

use super::prediction_error;

/// Errors of each head's raw prediction at one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub target: Pose,
    pub pos_error: Vec<f64>,
    pub rot_error: Vec<f64>,
    pub best_pos_error: f64,
    pub best_rot_error: f64,
}

impl SweepPoint {
    pub fn head_rot_error(&self, head: usize) -> f64 {
        self.rot_error[head.min(self.rot_error.len() - 1)]
    }
}

/// `n ≥ 2` planar poses evenly spaced from `a` to `b`.
pub fn straight_path(a: (f64, f64, f64), b: (f64, f64, f64), n: usize) -> Vec<Pose> {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n.max(2) - 1) as f64;
            Pose::planar(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2))
        })
        .collect()
}

/// Evaluate every head along `path` without solver iterations.
pub fn transition_sweep(
    params: &NetworkParams,
    robot: &RobotModel,
    feature: &WorldFeature,
    path: &[Pose],
) -> Result<Vec<SweepPoint>> {
    params.ensure_compatible(robot, None)?;
    path.iter()
        .map(|target| {
            let out = params.predict(feature, target, robot.dim)?;
            let (pos, rot): (Vec<f64>, Vec<f64>) = out.heads.iter().map(|q| prediction_error(robot, q, target)).unzip();
            Ok(SweepPoint {
                target: target.clone(),
                best_pos_error: pos.iter().copied().fold(f64::INFINITY, f64::min),
                best_rot_error: rot.iter().copied().fold(f64::INFINITY, f64::min),
                pos_error: pos,
                rot_error: rot,
            })
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Longest contiguous run `[start, end)` with `values > factor × median(values)`.
pub fn high_error_segment(values: &[f64], factor: f64) -> Option<(usize, usize)> {
    let thr = factor * median(values);
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=values.len() {
        let high = i < values.len() && values[i] > thr;
        match (high, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}
