//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use cfik::kin::{Dim, JointConfig, RobotModel};
use cfik::net::{Activation, Architecture, NetworkParams};
use cfik::objective::{cost_split, cost_total, grad_aux, grad_total, IkProblem, ObjectiveWeights};
use cfik::presets;
use cfik::train::{loss_and_grad, BatchItem, HeadSeparation, StepContext, WorldSet};
use cfik::world::{generate_world, make_bps, VoxelGrid, WorldGenParams};
use cfik::Execution;
use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rotation about a unit axis by Rodrigues' formula.
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0);
    Matrix3::identity() + angle.sin() * k + (1.0 - angle.cos()) * k * k
}

pub fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// Frame transforms by plain 4×4 matrix products.
pub fn fk_oracle(robot: &RobotModel, q: &JointConfig) -> Vec<Matrix4<f64>> {
    let mut out = Vec::new();
    let mut t = Matrix4::identity();
    for (j, &a) in robot.joints.iter().zip(q.as_slice()) {
        let offset = homogeneous(&j.offset.rotation, &j.offset.translation);
        let motion = homogeneous(&rodrigues(j.axis.as_ref(), a), &Vector3::zeros());
        t = t * offset * motion;
        out.push(t);
    }
    if let Some(tip) = &robot.tip {
        out.push(t * homogeneous(&tip.rotation, &tip.translation));
    }
    out
}

/// Unweighted self-collision cost by a double loop over the spheres of each
/// listed frame pair, in list order.
pub fn self_collision_oracle(robot: &RobotModel, q: &JointConfig, margin: f64) -> f64 {
    let spheres = robot.sphere_positions(q).unwrap();
    let mut total = 0.0;
    for &(fa, fb) in &robot.self_collision_pairs {
        for a in spheres.iter().filter(|s| s.frame == fa) {
            for b in spheres.iter().filter(|s| s.frame == fb) {
                let clearance = (a.center - b.center).norm() - a.radius - b.radius;
                if clearance < margin {
                    let s = clearance - margin;
                    total += 0.5 * s * s;
                }
            }
        }
    }
    total
}

/// Signed distance per voxel to the nearest voxel center of opposite
/// occupancy; grids without such a voxel hold `±diagonal`.
pub fn sdf_oracle(grid: &VoxelGrid) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let ci = grid.center(i);
            let best = (0..grid.len())
                .filter(|&j| grid.occupancy[j] != grid.occupancy[i])
                .map(|j| (grid.center(j) - ci).norm())
                .fold(f64::INFINITY, f64::min);
            let d = if best.is_finite() { best } else { grid.diagonal() };
            if grid.occupancy[i] {
                -d
            } else {
                d
            }
        })
        .collect()
}

/// Largest entry of `|a − b|`.
pub fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).amax()
}

pub fn is_planar(robot: &RobotModel) -> bool {
    robot.dim == Dim::Planar
}

pub const H: f64 = 1e-6;

pub fn fd<F: Fn(&[f64]) -> f64>(f: F, q: &[f64]) -> Vec<f64> {
    (0..q.len())
        .map(|k| {
            let mut a = q.to_vec();
            let mut b = q.to_vec();
            a[k] += H;
            b[k] -= H;
            (f(&a) - f(&b)) / (2.0 * H)
        })
        .collect()
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1e-6)
}

pub fn world(seed: u64, dim: Dim) -> (cfik::world::DistanceField, cfik::world::BasisPointSet) {
    let mut p = match dim {
        Dim::Planar => WorldGenParams::planar_default(),
        Dim::Spatial => WorldGenParams::spatial_default(),
    };
    if dim == Dim::Spatial {
        p.shape = [32, 32, 32];
        p.voxel_size = 2.0 / 32.0;
    }
    let g = generate_world(seed, &p).unwrap();
    let bps = make_bps(seed, 16, &g.bounds()).unwrap();
    (cfik::world::build_distance_field(&g), bps)
}

pub fn random_q(robot: &RobotModel, rng: &mut ChaCha8Rng) -> JointConfig {
    cfik::solver::random_config(robot, rng)
}

pub fn check_objective(robot: &RobotModel, seed: u64) -> (f64, f64) {
    let (field, _) = world(seed % 7, robot.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_q(robot, &mut rng);
    let target_q = random_q(robot, &mut rng);
    let target = robot.forward_kinematics(&target_q).unwrap()[robot.tcp_frame].clone();
    let p = IkProblem::new(robot, &field, &target, ObjectiveWeights::default());
    let g = grad_total(&p, &q);
    let n = fd(|x| cost_total(&p, &JointConfig::new(x.to_vec())), q.as_slice());
    let ga = grad_aux(&p, &q);
    let na = fd(|x| cost_split(&p, &JointConfig::new(x.to_vec())).1, q.as_slice());
    (rel_err(g.as_slice(), &n), rel_err(ga.as_slice(), &na))
}

pub fn tiny_net(robot: &RobotModel, bps: &cfik::world::BasisPointSet, seed: u64, act: Activation) -> NetworkParams {
    let mut arch = Architecture::default_for(robot, bps.len());
    arch.trunk = vec![2];
    arch.head = vec![2];
    arch.activation = act;
    NetworkParams::new(arch, robot, bps, ObjectiveWeights::default(), seed).unwrap()
}

/// Full chain: parameters → angles → objective (plus head separation).
/// The distance field is piecewise trilinear, so a difference step can
/// straddle a cell face; the smaller step resolves those cases.
pub fn check_network(seed: u64, act: Activation) -> f64 {
    check_network_h(seed, act, H).min(check_network_h(seed, act, 1e-7))
}

pub fn check_network_h(seed: u64, act: Activation, h: f64) -> f64 {
    let robot = presets::flat_arm5();
    let p = WorldGenParams::planar_default();
    let g = generate_world(seed % 5, &p).unwrap();
    let bps = make_bps(seed, 16, &g.bounds()).unwrap();
    let worlds = WorldSet::new(&[("w".into(), g)], &bps);
    let params = tiny_net(&robot, &bps, seed, act);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch: Vec<BatchItem> = (0..3)
        .map(|_| {
            let q = random_q(&robot, &mut rng);
            BatchItem {
                world: 0,
                target: robot.forward_kinematics(&q).unwrap()[robot.tcp_frame].clone(),
                label: None,
            }
        })
        .collect();
    let ctx = StepContext {
        robot: &robot,
        worlds: &worlds,
        weights: ObjectiveWeights::default(),
        separation: Some(HeadSeparation { lambda: 0.05, cap: 10.0 }),
        grad_clip: None,
        exec: Execution::Sequential,
    };
    let (_, grads) = loss_and_grad(&params, &batch, &ctx).unwrap();
    let analytic = grads.flat();
    let theta = params.flat();
    // Spot-check a random subset of parameters.
    let idx: Vec<usize> = (0..12).map(|_| rng.random_range(0..theta.len())).collect();
    let loss = |t: &[f64]| {
        let mut p = params.clone();
        p.set_flat(t).unwrap();
        loss_and_grad(&p, &batch, &ctx).unwrap().0.loss
    };
    let mut a = Vec::new();
    let mut n = Vec::new();
    for &i in &idx {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[i] += h;
        tm[i] -= h;
        n.push((loss(&tp) - loss(&tm)) / (2.0 * h));
        a.push(analytic[i]);
    }
    rel_err(&a, &n)
}
