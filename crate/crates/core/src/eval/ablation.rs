use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kin::RobotModel;
use crate::net::OutputEncoding;
use crate::objective::ObjectiveWeights;
use crate::par::Execution;
use crate::solver::SolverConfig;
use crate::train::{train, TrainConfig, WorldSet};
use crate::world::BasisPointSet;

use super::bench::{run_benchmark, BenchMode, ProblemSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Variant {
    Full,
    NoUnitVector,
    SingleHead,
    NoBoosting,
    WorldBlind,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoUnitVector,
        Variant::SingleHead,
        Variant::NoBoosting,
        Variant::WorldBlind,
    ];

    /// The variant's change to a base configuration.
    pub fn apply(self, cfg: &mut TrainConfig) {
        match self {
            Variant::Full => {}
            Variant::NoUnitVector => cfg.net.encoding = OutputEncoding::DirectAngle,
            Variant::SingleHead => cfg.net.n_heads = 1,
            Variant::NoBoosting => cfg.boost.enabled = false,
            Variant::WorldBlind => cfg.world_blind = true,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoUnitVector => "no-unit-vector",
            Variant::SingleHead => "single-head",
            Variant::NoBoosting => "no-boosting",
            Variant::WorldBlind => "world-blind",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Parse(format!("unknown variant '{s}'")))
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub feasibility: f64,
    pub mean_iterations: f64,
    pub train_secs: f64,
    pub certification_failures: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub problem_digest: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn feasibility(&self, variant: Variant, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.seed == seed)
            .map(|r| r.feasibility)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,seed,feasibility,mean_iterations,train_secs,certification_failures\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.variant, r.seed, r.feasibility, r.mean_iterations, r.train_secs, r.certification_failures
            ));
        }
        s
    }
}

/// Inputs of an ablation run.
pub struct AblationSetup<'a> {
    pub base: &'a TrainConfig,
    pub robot: &'a RobotModel,
    pub train_worlds: &'a WorldSet,
    pub bps: &'a BasisPointSet,
    pub test_worlds: &'a WorldSet,
    pub problems: &'a ProblemSet,
    /// Objective used when solving the held-out problems.
    pub weights: ObjectiveWeights,
    pub solver: &'a SolverConfig,
    pub iteration_budget: usize,
    pub exec: Execution,
}

/// Train each variant per seed with identical budgets and report single-start
/// feasibility after the iteration budget on the held-out problems.
pub fn run_ablation(variants: &[Variant], seeds: &[u64], setup: &AblationSetup<'_>) -> Result<AblationTable> {
    let mut table = AblationTable {
        problem_digest: setup.problems.digest(),
        rows: Vec::new(),
    };
    for &seed in seeds {
        for &v in variants {
            let mut cfg = setup.base.clone();
            cfg.seed = seed;
            v.apply(&mut cfg);
            let (params, report) = train(cfg, setup.robot, setup.train_worlds, setup.bps, setup.exec)?;
            let bench = run_benchmark(
                setup.problems,
                setup.test_worlds,
                setup.robot,
                setup.weights,
                &[&params],
                &[BenchMode::Net { net: 0, starts: 1 }],
                setup.solver,
                setup.iteration_budget,
                seed,
                setup.exec,
            )?;
            let m = &bench.modes[0];
            log::info!("ablation {v} seed {seed}: feasibility {:.3}", m.feasibility);
            table.rows.push(AblationRow {
                variant: v,
                seed,
                feasibility: m.feasibility,
                mean_iterations: m.mean_iterations,
                train_secs: report.total_secs,
                certification_failures: m.certification_failures,
            });
        }
    }
    Ok(table)
}
