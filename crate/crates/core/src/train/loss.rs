use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kin::{JointConfig, Pose, RobotModel};
use crate::net::{frame_feature, Gradients, NetworkParams};
use crate::objective::{evaluate, Grad, IkProblem, ObjectiveWeights};
use crate::par::Execution;

use super::adam::Adam;
use super::data::WorldSet;

const SEP_EPS: f64 = 1e-8;

/// Capped reward for distinct heads: `−λ·min(‖q_a − q_b‖, cap)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSeparation {
    pub lambda: f64,
    pub cap: f64,
}

impl HeadSeparation {
    /// Value and its gradient with respect to `q_a`; `q_b` receives the negative.
    /// At `q_a = q_b` the gradient follows the fixed direction `(1, …, 1)/√N`.
    pub fn eval(&self, qa: &DVector<f64>, qb: &DVector<f64>) -> (f64, DVector<f64>) {
        let delta = qa - qb;
        let d2 = delta.norm_squared();
        let dist = (d2 + SEP_EPS * SEP_EPS).sqrt();
        if dist >= self.cap {
            return (-self.lambda * self.cap, DVector::zeros(qa.len()));
        }
        let dir = if d2 > 0.0 {
            delta / dist
        } else {
            DVector::from_element(qa.len(), 1.0 / (qa.len() as f64).sqrt())
        };
        (-self.lambda * dist, dir * -self.lambda)
    }
}

/// Per-sample loss, its gradient per head, and per-head diagnostics.
#[derive(Clone, Debug)]
pub struct SampleEval {
    pub loss: f64,
    pub grads: Vec<DVector<f64>>,
    /// `U` per head (unsupervised) or squared label distance (supervised).
    pub head_costs: Vec<f64>,
    pub collision_free: Vec<bool>,
}

fn add_separation(e: &mut SampleEval, heads: &[DVector<f64>], sep: Option<HeadSeparation>) {
    if let (Some(sep), [qa, qb]) = (sep, heads) {
        let (v, g) = sep.eval(qa, qb);
        e.loss += v;
        e.grads[0] += &g;
        e.grads[1] -= &g;
    }
}

/// `Σ_h U(q_h)` plus the separation term.
pub fn unsupervised_sample(problem: &IkProblem<'_>, heads: &[DVector<f64>], sep: Option<HeadSeparation>) -> SampleEval {
    let mut e = SampleEval {
        loss: 0.0,
        grads: Vec::with_capacity(heads.len()),
        head_costs: Vec::with_capacity(heads.len()),
        collision_free: Vec::with_capacity(heads.len()),
    };
    let w = problem.weights;
    for q in heads {
        let (terms, grads) = evaluate(problem, q.as_slice(), Grad::All);
        let u = terms.total(&w);
        e.loss += u;
        e.head_costs.push(u);
        e.collision_free.push(terms.collision_free());
        e.grads.push(grads.expect("gradients requested").total(&w));
    }
    add_separation(&mut e, heads, sep);
    e
}

/// Squared distance from the closest head to the label plus the separation term.
pub fn supervised_sample(heads: &[DVector<f64>], label: &DVector<f64>, sep: Option<HeadSeparation>) -> SampleEval {
    let d2: Vec<f64> = heads.iter().map(|q| (q - label).norm_squared()).collect();
    let best = (0..heads.len())
        .min_by(|&a, &b| d2[a].total_cmp(&d2[b]))
        .expect("at least one head");
    let mut e = SampleEval {
        loss: d2[best],
        grads: heads.iter().map(|q| DVector::zeros(q.len())).collect(),
        head_costs: d2,
        collision_free: vec![false; heads.len()],
    };
    e.grads[best] = (&heads[best] - label) * 2.0;
    add_separation(&mut e, heads, sep);
    e
}

/// Inputs shared by every training step.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub robot: &'a RobotModel,
    pub worlds: &'a WorldSet,
    pub weights: ObjectiveWeights,
    pub separation: Option<HeadSeparation>,
    /// Bound on the global gradient norm.
    pub grad_clip: Option<f64>,
    pub exec: Execution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: f64,
    /// Mean over samples of the best head's cost.
    pub mean_cost: f64,
    pub min_costs: Vec<f64>,
    pub collision_free_rate: Vec<f64>,
    pub mean_head_distance: f64,
    pub grad_norm: f64,
    /// Non-finite loss or gradient; parameters left unchanged.
    pub rejected: bool,
}

/// One training item: world index, target, and an optional label.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub world: usize,
    pub target: Pose,
    pub label: Option<JointConfig>,
}

/// Mean batch loss and exact parameter gradients. Items with a label use the
/// supervised loss, the rest the objective.
pub fn loss_and_grad(params: &NetworkParams, batch: &[BatchItem], ctx: &StepContext<'_>) -> Result<(BatchStats, Gradients)> {
    let dim = ctx.robot.dim;
    let frames: Vec<_> = batch.iter().map(|b| frame_feature(dim, &b.target)).collect();
    let inputs: Vec<_> = batch
        .iter()
        .zip(&frames)
        .map(|(b, f)| (&ctx.worlds.worlds[b.world].feature, f))
        .collect();
    let x = params.input_matrix(&inputs)?;
    let (q, cache) = params.forward_batch(&x)?;
    let n_heads = q.len();
    let evals = ctx.exec.map(batch, |c, item| {
        let heads: Vec<DVector<f64>> = q.iter().map(|m| m.column(c).into_owned()).collect();
        match &item.label {
            Some(label) => supervised_sample(&heads, label.as_vector(), ctx.separation),
            None => {
                let field = &ctx.worlds.worlds[item.world].field;
                let problem = IkProblem::new(ctx.robot, field, &item.target, ctx.weights);
                unsupervised_sample(&problem, &heads, ctx.separation)
            }
        }
    });
    let b = batch.len().max(1) as f64;
    let n = ctx.robot.n_dof();
    let mut upstream = vec![DMatrix::zeros(n, batch.len()); n_heads];
    let mut stats = BatchStats {
        loss: 0.0,
        mean_cost: 0.0,
        min_costs: Vec::with_capacity(batch.len()),
        collision_free_rate: vec![0.0; n_heads],
        mean_head_distance: 0.0,
        grad_norm: 0.0,
        rejected: false,
    };
    for (c, e) in evals.iter().enumerate() {
        stats.loss += e.loss / b;
        let m = e.head_costs.iter().copied().fold(f64::INFINITY, f64::min);
        stats.min_costs.push(m);
        stats.mean_cost += m / b;
        for h in 0..n_heads {
            upstream[h].set_column(c, &(&e.grads[h] / b));
            if e.collision_free[h] {
                stats.collision_free_rate[h] += 1.0 / b;
            }
        }
        if n_heads == 2 {
            stats.mean_head_distance += (q[0].column(c) - q[1].column(c)).norm() / b;
        }
    }
    let grads = params.backward(&cache, &upstream)?;
    stats.grad_norm = grads.norm();
    Ok((stats, grads))
}

/// Compute the batch gradient and apply one optimizer update. A non-finite
/// loss or gradient leaves the parameters untouched and sets `rejected`.
pub fn train_step(
    params: &mut NetworkParams,
    adam: &mut Adam,
    lr: f64,
    batch: &[BatchItem],
    ctx: &StepContext<'_>,
) -> Result<BatchStats> {
    let (mut stats, mut grads) = loss_and_grad(params, batch, ctx)?;
    if !stats.loss.is_finite() || !stats.grad_norm.is_finite() {
        stats.rejected = true;
        return Ok(stats);
    }
    if let Some(clip) = ctx.grad_clip {
        if stats.grad_norm > clip {
            let s = clip / stats.grad_norm;
            for l in grads.trunk.iter_mut().chain(grads.heads.iter_mut().flatten()) {
                l.weight *= s;
                l.bias *= s;
            }
        }
    }
    adam.step(params, &grads, lr)?;
    Ok(stats)
}

/// Unsupervised update on `(world, target)` pairs.
pub fn unsupervised_step(
    params: &mut NetworkParams,
    adam: &mut Adam,
    lr: f64,
    batch: &[(usize, Pose)],
    ctx: &StepContext<'_>,
) -> Result<BatchStats> {
    let items: Vec<_> = batch
        .iter()
        .map(|(w, t)| BatchItem {
            world: *w,
            target: t.clone(),
            label: None,
        })
        .collect();
    train_step(params, adam, lr, &items, ctx)
}

/// Supervised update on `(world, target, label)` triples.
pub fn supervised_step(
    params: &mut NetworkParams,
    adam: &mut Adam,
    lr: f64,
    batch: &[(usize, Pose, JointConfig)],
    ctx: &StepContext<'_>,
) -> Result<BatchStats> {
    let items: Vec<_> = batch
        .iter()
        .map(|(w, t, l)| BatchItem {
            world: *w,
            target: t.clone(),
            label: Some(l.clone()),
        })
        .collect();
    train_step(params, adam, lr, &items, ctx)
}
