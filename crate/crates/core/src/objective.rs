//! IK objective: frame terms, collision terms, closeness to the default
//! configuration, and their analytic gradients.
//!
//! `U = U_F + U_A` with `U_F = U_P + λ_R·U_Rot` and
//! `U_A = λ_W·U_W + λ_S·U_S + λ_L·U_L`.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::kin::{JointConfig, Pose, RobotModel};
use crate::world::DistanceField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub lambda_rot: f64,
    pub lambda_world: f64,
    pub lambda_self: f64,
    pub lambda_length: f64,
    /// Required clearance in meters; the collision terms vanish beyond it.
    pub clip_margin: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            lambda_rot: 1.0,
            lambda_world: 100.0,
            lambda_self: 100.0,
            lambda_length: 0.01,
            clip_margin: 0.01,
        }
    }
}

impl ObjectiveWeights {
    /// Defaults with collision weights lowered to 10 for network training,
    /// where heavier collision gradients drown out the pose terms.
    pub fn training() -> Self {
        ObjectiveWeights {
            lambda_world: 10.0,
            lambda_self: 10.0,
            ..Self::default()
        }
    }

    /// Nonnegative weights with collision terms weighted at least as high as length.
    pub fn is_valid(&self) -> bool {
        let all = [
            self.lambda_rot,
            self.lambda_world,
            self.lambda_self,
            self.lambda_length,
            self.clip_margin,
        ];
        all.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.lambda_world >= self.lambda_length
            && self.lambda_self >= self.lambda_length
    }
}

/// One collision-free IK query: reach `target` with the TCP inside `field`.
#[derive(Clone, Copy, Debug)]
pub struct IkProblem<'a> {
    pub robot: &'a RobotModel,
    pub field: &'a DistanceField,
    pub target: &'a Pose,
    pub weights: ObjectiveWeights,
}

impl<'a> IkProblem<'a> {
    pub fn new(
        robot: &'a RobotModel,
        field: &'a DistanceField,
        target: &'a Pose,
        weights: ObjectiveWeights,
    ) -> Self {
        IkProblem {
            robot,
            field,
            target,
            weights,
        }
    }
}

/// C¹ hinge `½·min(d − margin, 0)²`.
#[inline]
pub fn smooth_clip(d: f64, margin: f64) -> f64 {
    let s = (d - margin).min(0.0);
    0.5 * s * s
}

/// Derivative of [`smooth_clip`] with respect to `d`.
#[inline]
pub fn smooth_clip_grad(d: f64, margin: f64) -> f64 {
    (d - margin).min(0.0)
}

/// Unweighted values of every term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub position: f64,
    pub rotation: f64,
    pub world: f64,
    pub self_collision: f64,
    pub length: f64,
}

impl CostTerms {
    pub fn frame(&self, w: &ObjectiveWeights) -> f64 {
        self.position + w.lambda_rot * self.rotation
    }

    pub fn aux(&self, w: &ObjectiveWeights) -> f64 {
        w.lambda_world * self.world + w.lambda_self * self.self_collision + w.lambda_length * self.length
    }

    pub fn total(&self, w: &ObjectiveWeights) -> f64 {
        self.frame(w) + self.aux(w)
    }

    pub fn collision_free(&self) -> bool {
        self.world == 0.0 && self.self_collision == 0.0
    }
}

/// Gradients of every unweighted term with respect to `q`.
#[derive(Clone, Debug)]
pub struct TermGradients {
    pub position: DVector<f64>,
    pub rotation: DVector<f64>,
    pub world: DVector<f64>,
    pub self_collision: DVector<f64>,
    pub length: DVector<f64>,
}

impl TermGradients {
    fn zeros(n: usize) -> Self {
        TermGradients {
            position: DVector::zeros(n),
            rotation: DVector::zeros(n),
            world: DVector::zeros(n),
            self_collision: DVector::zeros(n),
            length: DVector::zeros(n),
        }
    }

    pub fn frame(&self, w: &ObjectiveWeights) -> DVector<f64> {
        &self.position + w.lambda_rot * &self.rotation
    }

    pub fn aux(&self, w: &ObjectiveWeights) -> DVector<f64> {
        w.lambda_world * &self.world + w.lambda_self * &self.self_collision + w.lambda_length * &self.length
    }

    pub fn total(&self, w: &ObjectiveWeights) -> DVector<f64> {
        self.frame(w) + self.aux(w)
    }
}

/// Which terms to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grad {
    None,
    All,
}

/// Evaluate all terms (and optionally gradients) sharing one forward pass.
pub fn evaluate(problem: &IkProblem<'_>, q: &[f64], grad: Grad) -> (CostTerms, Option<TermGradients>) {
    let robot = problem.robot;
    let n = robot.n_dof();
    let d = robot.dim.n();
    let margin = problem.weights.clip_margin;
    let frames = robot.frames(q);
    let axes = if grad == Grad::All {
        robot.joint_axes(&frames)
    } else {
        Vec::new()
    };
    let mut g = (grad == Grad::All).then(|| TermGradients::zeros(n));
    let mut terms = CostTerms::default();

    let tcp = &frames[robot.tcp_frame];
    let dp = tcp.translation - problem.target.translation;
    terms.position = 0.5 * dp.norm_squared();
    let m = tcp.rotation * problem.target.rotation.transpose();
    terms.rotation = 0.5 * (3.0 - m.trace());
    if let Some(g) = g.as_mut() {
        let a = Vector3::new(m[(1, 2)] - m[(2, 1)], m[(2, 0)] - m[(0, 2)], m[(0, 1)] - m[(1, 0)]);
        for k in 0..robot.joints_moving(robot.tcp_frame) {
            let w = axes[k];
            let v = w.cross(&(tcp.translation - frames[k].translation));
            g.position[k] = v.dot(&dp);
            g.rotation[k] = -0.5 * w.dot(&a);
        }
    }

    // World collisions.
    for (i, link) in robot.links.iter().enumerate() {
        for s in &link.spheres {
            let c = frames[i].transform_point(&s.center);
            let (dist, dgrad) = problem.field.query(&c);
            let clearance = dist - s.radius;
            if clearance >= margin {
                continue;
            }
            terms.world += smooth_clip(clearance, margin);
            if let Some(g) = g.as_mut() {
                let scale = smooth_clip_grad(clearance, margin);
                for k in 0..robot.joints_moving(i) {
                    let v = axes[k].cross(&(c - frames[k].translation));
                    let dot: f64 = (0..d).map(|r| v[r] * dgrad[r]).sum();
                    g.world[k] += scale * dot;
                }
            }
        }
    }

    // Self collisions.
    for &(fi, fj) in &robot.self_collision_pairs {
        for si in &robot.links[fi].spheres {
            let ci = frames[fi].transform_point(&si.center);
            for sj in &robot.links[fj].spheres {
                let cj = frames[fj].transform_point(&sj.center);
                let diff = ci - cj;
                let dist = diff.norm();
                let clearance = dist - si.radius - sj.radius;
                if clearance >= margin {
                    continue;
                }
                terms.self_collision += smooth_clip(clearance, margin);
                if let Some(g) = g.as_mut() {
                    if dist == 0.0 {
                        continue;
                    }
                    let u = diff / dist;
                    let scale = smooth_clip_grad(clearance, margin);
                    for k in 0..robot.joints_moving(fj) {
                        let mut jv = axes[k].cross(&(ci - frames[k].translation));
                        if k >= robot.joints_moving(fi) {
                            jv = Vector3::zeros();
                        }
                        jv -= axes[k].cross(&(cj - frames[k].translation));
                        g.self_collision[k] += scale * u.dot(&jv);
                    }
                }
            }
        }
    }

    let qbar = robot.default_config.as_slice();
    for k in 0..n {
        let e = q[k] - qbar[k];
        terms.length += 0.5 * e * e;
        if let Some(g) = g.as_mut() {
            g.length[k] = e;
        }
    }
    (terms, g)
}

pub fn cost_terms(problem: &IkProblem<'_>, q: &JointConfig) -> CostTerms {
    evaluate(problem, q.as_slice(), Grad::None).0
}

/// `½‖p(q) − p̄‖²` of the TCP.
pub fn cost_position(problem: &IkProblem<'_>, q: &JointConfig) -> f64 {
    cost_terms(problem, q).position
}

/// `½(3 − tr(R(q) R̄ᵀ))`; equals `1 − cos Δθ` for planar robots.
pub fn cost_rotation(problem: &IkProblem<'_>, q: &JointConfig) -> f64 {
    cost_terms(problem, q).rotation
}

pub fn cost_world_collision(problem: &IkProblem<'_>, q: &JointConfig) -> f64 {
    cost_terms(problem, q).world
}

pub fn cost_self_collision(problem: &IkProblem<'_>, q: &JointConfig) -> f64 {
    cost_terms(problem, q).self_collision
}

pub fn cost_length(problem: &IkProblem<'_>, q: &JointConfig) -> f64 {
    cost_terms(problem, q).length
}

pub fn cost_total(problem: &IkProblem<'_>, q: &JointConfig) -> f64 {
    cost_terms(problem, q).total(&problem.weights)
}

/// `(U_F, U_A)`.
pub fn cost_split(problem: &IkProblem<'_>, q: &JointConfig) -> (f64, f64) {
    let t = cost_terms(problem, q);
    (t.frame(&problem.weights), t.aux(&problem.weights))
}

pub fn grad_total(problem: &IkProblem<'_>, q: &JointConfig) -> DVector<f64> {
    let (_, g) = evaluate(problem, q.as_slice(), Grad::All);
    g.expect("gradients requested").total(&problem.weights)
}

pub fn grad_aux(problem: &IkProblem<'_>, q: &JointConfig) -> DVector<f64> {
    let (_, g) = evaluate(problem, q.as_slice(), Grad::All);
    g.expect("gradients requested").aux(&problem.weights)
}
