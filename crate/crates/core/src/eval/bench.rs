use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kin::{JointConfig, Pose, RobotModel};
use crate::net::NetworkParams;
use crate::objective::{cost_total, IkProblem, ObjectiveWeights};
use crate::par::Execution;
use crate::solver::{certify, random_guesses, solve_labeled, IkResult, SolverConfig, StartLabel};
use crate::train::{sample_in_world, WorldSet};

/// How initial guesses are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum BenchMode {
    /// `n` uniform random guesses.
    Random(usize),
    /// Network `net`'s heads: the lower-cost head (`starts == 1`) or both.
    Net { net: usize, starts: usize },
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMode::Random(n) => write!(f, "random{n}"),
            BenchMode::Net { net: 0, starts } => write!(f, "net{starts}"),
            BenchMode::Net { net, starts } => write!(f, "net{starts}:{net}"),
        }
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown mode '{s}' (expected randomN, net1, net2 or netS:K)"));
        if let Some(n) = s.strip_prefix("random") {
            let n: usize = n.parse().map_err(|_| bad())?;
            return if n >= 1 { Ok(BenchMode::Random(n)) } else { Err(bad()) };
        }
        if let Some(rest) = s.strip_prefix("net") {
            let (starts, net) = match rest.split_once(':') {
                Some((a, b)) => (a, b.parse().map_err(|_| bad())?),
                None => (rest, 0),
            };
            let starts: usize = starts.parse().map_err(|_| bad())?;
            return if starts == 1 || starts == 2 {
                Ok(BenchMode::Net { net, starts })
            } else {
                Err(bad())
            };
        }
        Err(bad())
    }
}

impl From<BenchMode> for String {
    fn from(m: BenchMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for BenchMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub world: usize,
    pub target: Pose,
}

/// A seeded list of targets shared by every mode of a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSet {
    pub seed: u64,
    pub problems: Vec<ProblemSpec>,
}

impl ProblemSet {
    /// `n_per_world` targets in each world, from collision-free configurations.
    /// Worlds too cluttered to sample contribute none.
    pub fn sample(worlds: &WorldSet, robot: &RobotModel, weights: ObjectiveWeights, n_per_world: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut problems = Vec::new();
        for (w, tw) in worlds.worlds.iter().enumerate() {
            for _ in 0..n_per_world {
                match sample_in_world(w, &tw.field, robot, weights, &mut rng) {
                    Ok(s) => problems.push(ProblemSpec { world: w, target: s.target }),
                    Err(_) => break,
                }
            }
        }
        ProblemSet { seed, problems }
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    /// SHA-256 over the serialized problems.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.problems).expect("problems serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Initial guesses for one problem under `mode`.
pub fn mode_guesses(
    mode: BenchMode,
    problem: &IkProblem<'_>,
    feature: &crate::world::WorldFeature,
    nets: &[&NetworkParams],
    seed: u64,
) -> Result<Vec<(StartLabel, JointConfig)>> {
    match mode {
        BenchMode::Random(n) => Ok(random_guesses(problem.robot, seed, n)
            .into_iter()
            .enumerate()
            .map(|(i, q)| (StartLabel::Random(i), q))
            .collect()),
        BenchMode::Net { net, starts } => {
            let p = nets
                .get(net)
                .ok_or_else(|| Error::InvalidArgument(format!("mode {mode} needs network #{net}")))?;
            let out = p.predict(feature, problem.target, problem.robot.dim)?;
            let labeled: Vec<_> = out
                .heads
                .into_iter()
                .enumerate()
                .map(|(h, q)| (if h == 0 { StartLabel::HeadA } else { StartLabel::HeadB }, q))
                .collect();
            if starts >= labeled.len() {
                return Ok(labeled);
            }
            let best = labeled
                .iter()
                .map(|(_, q)| cost_total(problem, q))
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .expect("at least one head");
            Ok(vec![labeled[best].clone()])
        }
    }
}

/// Per-problem outcome of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub result: IkResult,
    pub seconds: f64,
    /// Independent re-check agrees with a feasible flag (always true when infeasible).
    pub certified: bool,
}

fn guess_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng.random()
}

/// Solve every problem under `mode`; timing is per problem on the calling thread.
#[allow(clippy::too_many_arguments)]
pub fn solve_problems(
    problems: &ProblemSet,
    worlds: &WorldSet,
    robot: &RobotModel,
    weights: ObjectiveWeights,
    nets: &[&NetworkParams],
    mode: BenchMode,
    solver_cfg: &SolverConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SolveRecord>> {
    let records = exec.map(&problems.problems, |i, p| -> Result<SolveRecord> {
        let w = &worlds.worlds[p.world];
        let problem = IkProblem::new(robot, &w.field, &p.target, weights);
        let t = Instant::now();
        let guesses = mode_guesses(mode, &problem, &w.feature, nets, guess_seed(seed, i))?;
        let result = solve_labeled(&problem, &guesses, solver_cfg)?;
        let seconds = t.elapsed().as_secs_f64();
        let certified = !result.feasible || certify(&problem, &result.q, solver_cfg)?.valid;
        Ok(SolveRecord {
            result,
            seconds,
            certified,
        })
    });
    records.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: BenchMode,
    pub n_problems: usize,
    pub feasibility: f64,
    pub mean_iterations: f64,
    /// Mean `U_L` over feasible results.
    pub mean_length_cost: f64,
    pub mean_solve_ms: f64,
    pub certification_failures: usize,
    pub max_feasible_pos_error: f64,
    pub max_feasible_rot_error: f64,
}

impl ModeSummary {
    pub fn from_records(mode: BenchMode, records: &[SolveRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let feasible: Vec<_> = records.iter().filter(|r| r.result.feasible).collect();
        let nf = feasible.len();
        ModeSummary {
            mode,
            n_problems: records.len(),
            feasibility: nf as f64 / n,
            mean_iterations: records.iter().map(|r| r.result.iterations_used as f64).sum::<f64>() / n,
            mean_length_cost: if nf == 0 {
                f64::NAN
            } else {
                feasible.iter().map(|r| r.result.terms.length).sum::<f64>() / nf as f64
            },
            mean_solve_ms: 1e3 * records.iter().map(|r| r.seconds).sum::<f64>() / n,
            certification_failures: records.iter().filter(|r| !r.certified).count(),
            max_feasible_pos_error: feasible.iter().map(|r| r.result.pos_error).fold(0.0, f64::max),
            max_feasible_rot_error: feasible.iter().map(|r| r.result.rot_error).fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub problem_digest: String,
    pub iteration_budget: usize,
    pub seed: u64,
    pub modes: Vec<ModeSummary>,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "mode,n_problems,feasibility,mean_iterations,mean_length_cost,mean_solve_ms,certification_failures,max_feasible_pos_error,max_feasible_rot_error\n",
        );
        for m in &self.modes {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                m.mode,
                m.n_problems,
                m.feasibility,
                m.mean_iterations,
                m.mean_length_cost,
                m.mean_solve_ms,
                m.certification_failures,
                m.max_feasible_pos_error,
                m.max_feasible_rot_error
            ));
        }
        s
    }
}

/// Run every mode on the same problems with the nullspace budget set to
/// `iteration_budget`.
#[allow(clippy::too_many_arguments)]
pub fn run_benchmark(
    problems: &ProblemSet,
    worlds: &WorldSet,
    robot: &RobotModel,
    weights: ObjectiveWeights,
    nets: &[&NetworkParams],
    modes: &[BenchMode],
    solver_cfg: &SolverConfig,
    iteration_budget: usize,
    seed: u64,
    exec: Execution,
) -> Result<BenchmarkReport> {
    for n in nets {
        n.ensure_compatible(robot, None)?;
    }
    let mut cfg = solver_cfg.clone();
    cfg.max_nullspace_iters = iteration_budget;
    cfg.validate()?;
    let mut out = Vec::with_capacity(modes.len());
    for &mode in modes {
        let records = solve_problems(problems, worlds, robot, weights, nets, mode, &cfg, seed, exec)?;
        out.push(ModeSummary::from_records(mode, &records));
    }
    Ok(BenchmarkReport {
        problem_digest: problems.digest(),
        iteration_budget,
        seed,
        modes: out,
    })
}
