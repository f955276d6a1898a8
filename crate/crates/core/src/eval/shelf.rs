use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kin::{Dim, Pose, RobotModel};
use crate::objective::ObjectiveWeights;
use crate::solver::random_config;
use crate::train::is_collision_free;
use crate::world::{DistanceField, VoxelGrid};

/// Open-front shelf to the right of the base: a back wall, two side boards
/// and evenly spaced shelf boards.
pub struct Shelf {
    pub x_front: f64,
    pub x_back: f64,
    pub y_bottom: f64,
    pub y_top: f64,
    pub n_compartments: usize,
    pub thickness: f64,
}

impl Default for Shelf {
    fn default() -> Self {
        Shelf {
            x_front: 0.35,
            x_back: 0.85,
            y_bottom: -0.6,
            y_top: 0.6,
            n_compartments: 4,
            thickness: 0.04,
        }
    }
}

impl Shelf {
    fn board_ys(&self) -> Vec<f64> {
        let n = self.n_compartments;
        (0..=n)
            .map(|k| self.y_bottom + (self.y_top - self.y_bottom) * k as f64 / n as f64)
            .collect()
    }

    /// Free interior boxes `(x0, y0, x1, y1)`.
    pub fn compartments(&self) -> Vec<(f64, f64, f64, f64)> {
        let ys = self.board_ys();
        let t = 0.5 * self.thickness;
        ys.windows(2)
            .map(|w| (self.x_front, w[0] + t, self.x_back - self.thickness, w[1] - t))
            .collect()
    }

    /// 64×64 planar grid over `[-1, 1]²`.
    pub fn grid(&self) -> Result<VoxelGrid> {
        let mut g = VoxelGrid::empty(Dim::Planar, [64, 64, 1], 2.0 / 64.0, Vector3::new(-1.0, -1.0, 0.0))?;
        let t = 0.5 * self.thickness;
        let p = |x: f64, y: f64| Vector3::new(x, y, 0.0);
        g.fill_box(p(self.x_back - self.thickness, self.y_bottom - t), p(self.x_back, self.y_top + t));
        for y in self.board_ys() {
            g.fill_box(p(self.x_front, y - t), p(self.x_back, y + t));
        }
        Ok(g)
    }

    /// Targets from collision-free configurations whose TCP lies inside a
    /// compartment, with Gaussian orientation noise of `angle_noise` radians.
    pub fn targets(
        &self,
        robot: &RobotModel,
        field: &DistanceField,
        weights: ObjectiveWeights,
        n: usize,
        angle_noise: f64,
        rng: &mut impl Rng,
    ) -> Result<Vec<Pose>> {
        let boxes = self.compartments();
        let mut out = Vec::with_capacity(n);
        let mut tries = 0usize;
        while out.len() < n {
            tries += 1;
            if tries > 2_000_000 {
                return Err(Error::InvalidArgument("could not sample shelf targets".into()));
            }
            let q = random_config(robot, rng);
            let tcp = robot.frames(q.as_slice())[robot.tcp_frame].clone();
            let (x, y) = (tcp.translation.x, tcp.translation.y);
            if !boxes.iter().any(|&(x0, y0, x1, y1)| x >= x0 && x <= x1 && y >= y0 && y <= y1) {
                continue;
            }
            if !is_collision_free(robot, field, &q, weights) {
                continue;
            }
            let a = tcp.planar_angle() + angle_noise * rng.sample::<f64, _>(StandardNormal);
            out.push(Pose::planar(x, y, a));
        }
        Ok(out)
    }
}
