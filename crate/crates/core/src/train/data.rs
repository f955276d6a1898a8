use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kin::{JointConfig, Pose, RobotModel};
use crate::objective::{evaluate, Grad, IkProblem, ObjectiveWeights};
use crate::par::Execution;
use crate::solver::{random_config, random_guesses, solve, solve_labeled, SolverConfig, StartLabel};
use crate::world::{build_distance_field, encode_world, BasisPointSet, DistanceField, VoxelGrid, WorldFeature};

/// Rejection-sampling budget per target.
pub const MAX_SAMPLE_TRIES: usize = 1000;

pub struct TrainWorld {
    pub id: String,
    pub field: DistanceField,
    pub feature: WorldFeature,
}

/// Worlds with their distance fields and encodings.
#[derive(Default)]
pub struct WorldSet {
    pub worlds: Vec<TrainWorld>,
}

impl WorldSet {
    pub fn new(grids: &[(String, VoxelGrid)], bps: &BasisPointSet) -> Self {
        let worlds = grids
            .iter()
            .map(|(id, g)| {
                let field = build_distance_field(g);
                let feature = encode_world(&field, bps);
                TrainWorld {
                    id: id.clone(),
                    field,
                    feature,
                }
            })
            .collect();
        WorldSet { worlds }
    }

    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }
}

/// A reachable, collision-free training target with its generating configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub world: usize,
    pub target: Pose,
    pub witness: JointConfig,
}

/// Whether `q` clears the world and itself by the weights' margin.
pub fn is_collision_free(robot: &RobotModel, field: &DistanceField, q: &JointConfig, weights: ObjectiveWeights) -> bool {
    let target = Pose::identity();
    let problem = IkProblem::new(robot, field, &target, weights);
    evaluate(&problem, q.as_slice(), Grad::None).0.collision_free()
}

/// Sample a collision-free configuration in world `world` and return its TCP
/// pose as the target.
pub fn sample_in_world(
    world: usize,
    field: &DistanceField,
    robot: &RobotModel,
    weights: ObjectiveWeights,
    rng: &mut impl Rng,
) -> Result<Sample> {
    for _ in 0..MAX_SAMPLE_TRIES {
        let q = random_config(robot, rng);
        if is_collision_free(robot, field, &q, weights) {
            let target = robot.frames(q.as_slice())[robot.tcp_frame].clone();
            return Ok(Sample {
                world,
                target,
                witness: q,
            });
        }
    }
    Err(Error::WorldTooCluttered(world))
}

/// Pick a world uniformly and sample a target in it.
pub fn sample_problem(worlds: &WorldSet, robot: &RobotModel, weights: ObjectiveWeights, rng: &mut impl Rng) -> Result<Sample> {
    if worlds.is_empty() {
        return Err(Error::InvalidArgument("empty world set".into()));
    }
    let w = rng.random_range(0..worlds.len());
    sample_in_world(w, &worlds.worlds[w].field, robot, weights, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub world: usize,
    pub target: Pose,
    pub label: JointConfig,
    /// Objective value of the label.
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedData {
    pub samples: Vec<LabeledSample>,
    pub attempts: usize,
    pub solver_calls: usize,
}

fn attempt_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Label up to `n` sampled problems with the best feasible solution of an
/// `n_multistarts` random multistart; infeasible problems are dropped.
#[allow(clippy::too_many_arguments)]
pub fn generate_supervised_data(
    worlds: &WorldSet,
    robot: &RobotModel,
    weights: ObjectiveWeights,
    solver_cfg: &SolverConfig,
    n: usize,
    n_multistarts: usize,
    seed: u64,
    exec: Execution,
) -> Result<SupervisedData> {
    let mut out = SupervisedData {
        samples: Vec::with_capacity(n),
        attempts: 0,
        solver_calls: 0,
    };
    let max_attempts = 20 * n.max(1);
    while out.samples.len() < n && out.attempts < max_attempts {
        let block = (n - out.samples.len()).min(max_attempts - out.attempts);
        let start = out.attempts;
        let labeled = exec.map_range(block, |k| -> Result<Option<LabeledSample>> {
            let mut rng = attempt_rng(seed, start + k);
            let s = match sample_problem(worlds, robot, weights, &mut rng) {
                Ok(s) => s,
                Err(Error::WorldTooCluttered(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let problem = IkProblem::new(robot, &worlds.worlds[s.world].field, &s.target, weights);
            let guesses = random_guesses(robot, rng.random(), n_multistarts.max(1));
            let r = solve(&problem, &guesses, solver_cfg)?;
            Ok(r.feasible.then(|| LabeledSample {
                world: s.world,
                target: s.target,
                label: r.q,
                cost: r.cost,
            }))
        });
        out.attempts += block;
        out.solver_calls += block;
        for l in labeled {
            if let Some(l) = l? {
                if out.samples.len() < n {
                    out.samples.push(l);
                }
            }
        }
    }
    Ok(out)
}

/// Re-solve the selected samples from proposed starts and replace a label
/// whenever a feasible solution with lower cost turns up. Returns
/// `(replaced, solver calls)`.
#[allow(clippy::too_many_arguments)]
pub fn consistency_pass_with<F>(
    data: &mut [LabeledSample],
    indices: &[usize],
    worlds: &WorldSet,
    robot: &RobotModel,
    weights: ObjectiveWeights,
    solver_cfg: &SolverConfig,
    exec: Execution,
    propose: F,
) -> Result<(usize, usize)>
where
    F: Fn(&LabeledSample) -> Vec<JointConfig> + Sync + Send,
{
    let snapshot: &[LabeledSample] = data;
    let found = exec.map(indices, |_, &i| -> Result<Option<(JointConfig, f64)>> {
        let s = &snapshot[i];
        let guesses: Vec<_> = propose(s)
            .into_iter()
            .enumerate()
            .map(|(k, q)| (StartLabel::Guess(k), q))
            .collect();
        if guesses.is_empty() {
            return Ok(None);
        }
        let problem = IkProblem::new(robot, &worlds.worlds[s.world].field, &s.target, weights);
        let r = solve_labeled(&problem, &guesses, solver_cfg)?;
        Ok((r.feasible && r.cost < s.cost).then_some((r.q, r.cost)))
    });
    let mut replaced = 0;
    for (&i, f) in indices.iter().zip(found) {
        if let Some((q, c)) = f? {
            data[i].label = q;
            data[i].cost = c;
            replaced += 1;
        }
    }
    Ok((replaced, indices.len()))
}
