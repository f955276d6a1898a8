//! Two-stage numerical IK.
//!
//! Stage one projects a guess onto the target with damped least squares on
//! the task-space error twist. Stage two descends the auxiliary cost inside
//! the nullspace of the TCP Jacobian, re-projecting after every step.

use nalgebra::{DMatrix, DVector, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kin::{wrap_angle, Dim, JointConfig, RobotModel};
use crate::objective::{evaluate, CostTerms, Grad, IkProblem};

/// How stage one measures the TCP error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// Position error plus the axis-angle rotation error with the geometric Jacobian.
    #[default]
    Twist,
    /// Gauss–Newton root search on the scalar costs `[U_P, U_Rot]`.
    ScalarCost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_projection_iters: usize,
    /// Iteration budget of stage two.
    pub max_nullspace_iters: usize,
    /// Projection steps allowed to repair drift after each nullspace step.
    pub repair_iters: usize,
    pub pos_tol: f64,
    pub rot_tol: f64,
    /// Levenberg damping factor λ of `Jᵀ(JJᵀ + λ²I)⁻¹`; raised adaptively.
    pub damping: f64,
    pub step_size: f64,
    /// Joint-space norm bound of a single step, radians.
    pub max_step: f64,
    pub max_backtracks: usize,
    pub n_multistarts: usize,
    /// End stage two as soon as the configuration is feasible.
    pub stop_when_feasible: bool,
    pub residual: ResidualMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_projection_iters: 50,
            max_nullspace_iters: 10,
            repair_iters: 5,
            pos_tol: 1e-4,
            rot_tol: 1e-3,
            damping: 1e-6,
            step_size: 1.0,
            max_step: 0.3,
            max_backtracks: 6,
            n_multistarts: 20,
            stop_when_feasible: true,
            residual: ResidualMode::Twist,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.pos_tol > 0.0
            && self.rot_tol > 0.0
            && self.damping >= 0.0
            && self.step_size > 0.0
            && self.max_step > 0.0
            && self.max_projection_iters >= 1
            && self.max_nullspace_iters >= 1
            && self.n_multistarts >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid solver configuration".into()))
        }
    }
}

/// Where an initial guess came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartLabel {
    Guess(usize),
    Random(usize),
    HeadA,
    HeadB,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkResult {
    pub q: JointConfig,
    pub feasible: bool,
    pub pos_error: f64,
    pub rot_error: f64,
    /// Total objective `U`.
    pub cost: f64,
    pub terms: CostTerms,
    pub iterations_used: usize,
    pub start_label: StartLabel,
}

/// Task-space error `[p̄ − p; rot]`. The rotational part is `log(R̄ Rᵀ)` for
/// spatial robots and the wrapped angle difference for planar ones.
pub fn task_residual(problem: &IkProblem<'_>, q: &JointConfig) -> DVector<f64> {
    residual_of(problem, q.as_slice())
}

fn residual_of(problem: &IkProblem<'_>, q: &[f64]) -> DVector<f64> {
    let robot = problem.robot;
    let frames = robot.frames(q);
    twist_error(robot.dim, &frames[robot.tcp_frame], problem.target)
}

fn twist_error(dim: Dim, tcp: &crate::kin::Pose, target: &crate::kin::Pose) -> DVector<f64> {
    let dp = target.translation - tcp.translation;
    match dim {
        Dim::Planar => DVector::from_vec(vec![
            dp.x,
            dp.y,
            wrap_angle(target.planar_angle() - tcp.planar_angle()),
        ]),
        Dim::Spatial => {
            let rel = Rotation3::from_matrix_unchecked(target.rotation * tcp.rotation.transpose());
            let w = rel.scaled_axis();
            DVector::from_vec(vec![dp.x, dp.y, dp.z, w.x, w.y, w.z])
        }
    }
}

/// `(position error, rotation error)` norms of a residual.
fn split_errors(dim: Dim, r: &DVector<f64>) -> (f64, f64) {
    let n = dim.n();
    (r.rows(0, n).norm(), r.rows(n, dim.n_rot()).norm())
}

fn within_tol(cfg: &SolverConfig, pos: f64, rot: f64) -> bool {
    pos <= cfg.pos_tol && rot <= cfg.rot_tol
}

/// Damped least-squares step `Jᵀ(JJᵀ + λ²I)⁻¹ r`. Raises λ until the
/// system is positive definite.
fn dls_step(jac: &DMatrix<f64>, r: &DVector<f64>, damping: f64) -> DVector<f64> {
    let m = jac.nrows();
    let jjt = jac * jac.transpose();
    let mut lambda = damping.max(1e-12);
    loop {
        let a = &jjt + DMatrix::identity(m, m) * (lambda * lambda);
        if let Some(ch) = a.cholesky() {
            return jac.transpose() * ch.solve(r);
        }
        lambda *= 10.0;
    }
}

/// Nullspace projector `I − J⁺J` from a rank-revealing SVD.
pub fn nullspace_projector(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let n = jac.ncols();
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * n as f64;
    let mut p = DMatrix::identity(n, n);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            let v = v_t.row(i).transpose();
            p -= &v * v.transpose();
        }
    }
    p
}

/// Joints at a limit whose step would push them further out.
fn blocked_joints(robot: &RobotModel, q: &DVector<f64>, dq: &DVector<f64>) -> Vec<usize> {
    robot
        .joints
        .iter()
        .enumerate()
        .filter(|(k, j)| {
            let next = q[*k] + dq[*k];
            (next > j.upper && q[*k] >= j.upper) || (next < j.lower && q[*k] <= j.lower)
        })
        .map(|(k, _)| k)
        .collect()
}

fn clip_norm(v: &mut DVector<f64>, max: f64) {
    let n = v.norm();
    if n > max {
        *v *= max / n;
    }
}

/// Outcome of the projection stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub q: JointConfig,
    pub converged: bool,
    pub iters: usize,
    pub pos_error: f64,
    pub rot_error: f64,
}

/// Iterate `q ← clamp(q + J⁺_λ·residual)` until the TCP is within tolerance
/// or `cfg.max_projection_iters` steps were taken.
pub fn project_to_target(problem: &IkProblem<'_>, q0: &JointConfig, cfg: &SolverConfig) -> Projection {
    project_with_budget(problem, q0, cfg, cfg.max_projection_iters)
}

fn residual_for(problem: &IkProblem<'_>, cfg: &SolverConfig, q: &[f64]) -> (DVector<f64>, DMatrix<f64>, (f64, f64)) {
    let robot = problem.robot;
    let frames = robot.frames(q);
    let twist = twist_error(robot.dim, &frames[robot.tcp_frame], problem.target);
    let errs = split_errors(robot.dim, &twist);
    let axes = robot.joint_axes(&frames);
    match cfg.residual {
        ResidualMode::Twist => (twist, robot.task_jacobian(&frames, &axes, robot.tcp_frame), errs),
        ResidualMode::ScalarCost => {
            let (terms, grads) = evaluate(problem, q, Grad::All);
            let g = grads.expect("gradients requested");
            let r = DVector::from_vec(vec![-terms.position, -terms.rotation]);
            let jac = DMatrix::from_rows(&[g.position.transpose(), g.rotation.transpose()]);
            (r, jac, errs)
        }
    }
}

fn project_with_budget(problem: &IkProblem<'_>, q0: &JointConfig, cfg: &SolverConfig, budget: usize) -> Projection {
    let robot = problem.robot;
    let mut q = q0.as_vector().clone();
    robot.clamp(&mut q);
    let (mut r, mut jac, mut errs) = residual_for(problem, cfg, q.as_slice());
    let mut lambda = cfg.damping;
    let mut iters = 0;
    while iters < budget && !within_tol(cfg, errs.0, errs.1) {
        iters += 1;
        let mut dq = dls_step(&jac, &r, lambda);
        let blocked = blocked_joints(robot, &q, &dq);
        if !blocked.is_empty() {
            let mut masked = jac.clone();
            for &k in &blocked {
                masked.column_mut(k).fill(0.0);
            }
            dq = dls_step(&masked, &r, lambda);
        }
        clip_norm(&mut dq, 2.0 * cfg.max_step);
        let mut q_new = &q + dq;
        robot.clamp(&mut q_new);
        let (r_new, jac_new, errs_new) = residual_for(problem, cfg, q_new.as_slice());
        if r_new.norm() < r.norm() {
            q = q_new;
            r = r_new;
            jac = jac_new;
            errs = errs_new;
            lambda = (lambda * 0.1).max(cfg.damping);
        } else {
            lambda = (lambda * 10.0).max(1e-4);
        }
    }
    Projection {
        q: JointConfig::from_vector(q),
        converged: within_tol(cfg, errs.0, errs.1),
        iters,
        pos_error: errs.0,
        rot_error: errs.1,
    }
}

fn is_feasible(cfg: &SolverConfig, terms: &CostTerms, pos: f64, rot: f64) -> bool {
    terms.collision_free() && within_tol(cfg, pos, rot)
}

/// Outcome of the nullspace stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Descent {
    pub q: JointConfig,
    /// `U_A` after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub iters: usize,
}

/// Gradient descent on `U_A` projected into the TCP nullspace.
///
/// Each step `−α·N·∇U_A` is clipped to `max_step`, clamped to the joint
/// limits and re-projected onto the target. A step is accepted only if it
/// lowers `U_A` without losing the TCP tolerance; otherwise α is halved.
pub fn nullspace_descent(problem: &IkProblem<'_>, q0: &JointConfig, cfg: &SolverConfig) -> Descent {
    let robot = problem.robot;
    let w = problem.weights;
    let eval = |q: &DVector<f64>| {
        let (terms, _) = evaluate(problem, q.as_slice(), Grad::None);
        let (pos, rot) = split_errors(robot.dim, &residual_of(problem, q.as_slice()));
        (terms, pos, rot)
    };
    let mut q = q0.as_vector().clone();
    let (mut terms, mut pos, mut rot) = eval(&q);
    let mut ua = terms.aux(&w);
    let mut trace = vec![ua];
    let mut iters = 0;
    while iters < cfg.max_nullspace_iters {
        if cfg.stop_when_feasible && is_feasible(cfg, &terms, pos, rot) {
            break;
        }
        iters += 1;
        let (_, grads) = evaluate(problem, q.as_slice(), Grad::All);
        let g = grads.expect("gradients requested").aux(&w);
        let frames = robot.frames(q.as_slice());
        let axes = robot.joint_axes(&frames);
        let jac = robot.task_jacobian(&frames, &axes, robot.tcp_frame);
        let n = nullspace_projector(&jac);
        let mut dir = -(&n * g);
        if dir.norm() == 0.0 {
            break;
        }
        clip_norm(&mut dir, cfg.max_step / cfg.step_size);
        let mut alpha = cfg.step_size;
        let was_on_target = within_tol(cfg, pos, rot);
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            let mut q_try = &q + alpha * &dir;
            robot.clamp(&mut q_try);
            let repaired = project_with_budget(problem, &JointConfig::from_vector(q_try), cfg, cfg.repair_iters);
            let q_try = repaired.q.into_vector();
            let (t_try, p_try, r_try) = eval(&q_try);
            let ua_try = t_try.aux(&w);
            let tcp_ok = !was_on_target || within_tol(cfg, p_try, r_try);
            if ua_try < ua && tcp_ok {
                q = q_try;
                terms = t_try;
                pos = p_try;
                rot = r_try;
                ua = ua_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(ua);
    }
    Descent {
        q: JointConfig::from_vector(q),
        trace,
        iters,
    }
}

fn solve_one(problem: &IkProblem<'_>, guess: &JointConfig, label: StartLabel, cfg: &SolverConfig) -> IkResult {
    let proj = project_to_target(problem, guess, cfg);
    let near = proj.pos_error <= 10.0 * cfg.pos_tol && proj.rot_error <= 10.0 * cfg.rot_tol;
    let (q, ns_iters) = if near {
        let d = nullspace_descent(problem, &proj.q, cfg);
        (d.q, d.iters)
    } else {
        (proj.q, 0)
    };
    finish(problem, q, label, proj.iters + ns_iters, cfg)
}

fn finish(problem: &IkProblem<'_>, q: JointConfig, label: StartLabel, iterations_used: usize, cfg: &SolverConfig) -> IkResult {
    let (terms, _) = evaluate(problem, q.as_slice(), Grad::None);
    let (pos_error, rot_error) = split_errors(problem.robot.dim, &residual_of(problem, q.as_slice()));
    IkResult {
        feasible: is_feasible(cfg, &terms, pos_error, rot_error),
        cost: terms.total(&problem.weights),
        terms,
        pos_error,
        rot_error,
        q,
        iterations_used,
        start_label: label,
    }
}

/// Run both stages from every labeled guess. Returns the feasible result with
/// the lowest `U`, else the lowest-`U` result; ties go to the earlier guess.
pub fn solve_labeled(
    problem: &IkProblem<'_>,
    guesses: &[(StartLabel, JointConfig)],
    cfg: &SolverConfig,
) -> Result<IkResult> {
    if guesses.is_empty() {
        return Err(Error::NoGuesses);
    }
    for (_, g) in guesses {
        if g.len() != problem.robot.n_dof() {
            return Err(Error::DimensionMismatch {
                what: "initial guess",
                expected: problem.robot.n_dof(),
                got: g.len(),
            });
        }
    }
    let results: Vec<IkResult> = guesses
        .iter()
        .map(|(label, q)| solve_one(problem, q, *label, cfg))
        .collect();
    Ok(pick_best(results))
}

pub(crate) fn pick_best(results: Vec<IkResult>) -> IkResult {
    let mut best: Option<IkResult> = None;
    for r in results {
        let better = match &best {
            None => true,
            Some(b) => (r.feasible && !b.feasible) || (r.feasible == b.feasible && r.cost < b.cost),
        };
        if better {
            best = Some(r);
        }
    }
    best.expect("at least one result")
}

pub fn solve(problem: &IkProblem<'_>, guesses: &[JointConfig], cfg: &SolverConfig) -> Result<IkResult> {
    let labeled: Vec<_> = guesses
        .iter()
        .enumerate()
        .map(|(i, q)| (StartLabel::Guess(i), q.clone()))
        .collect();
    solve_labeled(problem, &labeled, cfg)
}

/// `n` configurations uniform within the joint limits.
pub fn random_guesses(robot: &RobotModel, seed: u64, n: usize) -> Vec<JointConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_config(robot, &mut rng)).collect()
}

pub fn random_config(robot: &RobotModel, rng: &mut impl Rng) -> JointConfig {
    JointConfig::new(
        robot
            .joints
            .iter()
            .map(|j| rng.random_range(j.lower..=j.upper))
            .collect(),
    )
}

/// Result of an independent feasibility re-check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub pos_error: f64,
    pub rot_error: f64,
    /// Smallest sphere-to-obstacle clearance minus the margin.
    pub world_slack: f64,
    /// Smallest sphere-pair clearance minus the margin.
    pub self_slack: f64,
    pub valid: bool,
}

/// Re-derive feasibility of `q` from fresh forward kinematics and direct
/// distance queries, without the objective's cost assembly.
pub fn certify(problem: &IkProblem<'_>, q: &JointConfig, cfg: &SolverConfig) -> Result<Certificate> {
    let robot = problem.robot;
    let frames = robot.forward_kinematics(q)?;
    let tcp = &frames[robot.tcp_frame];
    let target = problem.target;
    let pos_error = (tcp.translation - target.translation).norm();
    let rot_error = match robot.dim {
        Dim::Planar => wrap_angle(tcp.planar_angle() - target.planar_angle()).abs(),
        Dim::Spatial => {
            let c = ((tcp.rotation.transpose() * target.rotation).trace() - 1.0) / 2.0;
            c.clamp(-1.0, 1.0).acos()
        }
    };
    let margin = problem.weights.clip_margin;
    let spheres = robot.sphere_positions(q)?;
    let world_slack = spheres
        .iter()
        .map(|s| problem.field.distance_at(&s.center) - s.radius - margin)
        .fold(f64::INFINITY, f64::min);
    let mut self_slack = f64::INFINITY;
    for a in &spheres {
        for b in &spheres {
            if robot.self_collision_pairs.contains(&(a.frame, b.frame)) {
                let c = (a.center - b.center).norm() - a.radius - b.radius - margin;
                self_slack = self_slack.min(c);
            }
        }
    }
    // The acos route loses precision near zero; allow a small slack on the rotation check.
    let valid = pos_error <= cfg.pos_tol
        && rot_error <= cfg.rot_tol * (1.0 + 1e-6) + 1e-7
        && world_slack >= 0.0
        && self_slack >= 0.0;
    Ok(Certificate {
        pos_error,
        rot_error,
        world_slack,
        self_slack,
        valid,
    })
}
