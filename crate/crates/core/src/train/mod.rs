//! Training on the IK objective (no labels) or on solver-generated labels.

mod adam;
mod data;
mod hard;
mod loss;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{scheduled_lr, Adam};
pub use data::{
    consistency_pass_with, generate_supervised_data, is_collision_free, sample_in_world, sample_problem, LabeledSample,
    Sample, SupervisedData, TrainWorld, WorldSet, MAX_SAMPLE_TRIES,
};
pub use hard::{HardEntry, HardSet};
pub use loss::{
    loss_and_grad, supervised_sample, supervised_step, train_step, unsupervised_sample, unsupervised_step, BatchItem,
    BatchStats, HeadSeparation, SampleEval, StepContext,
};

use crate::error::{Error, Result};
use crate::kin::RobotModel;
use crate::net::{Activation, Architecture, NetworkParams, OutputEncoding};
use crate::objective::ObjectiveWeights;
use crate::par::Execution;
use crate::solver::SolverConfig;
use crate::world::BasisPointSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Unsupervised,
    Supervised,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub trunk: Vec<usize>,
    pub head: Vec<usize>,
    pub n_heads: usize,
    pub activation: Activation,
    pub encoding: OutputEncoding,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            trunk: vec![256, 256, 256],
            head: vec![128, 128],
            n_heads: 2,
            activation: Activation::default(),
            encoding: OutputEncoding::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostConfig {
    pub enabled: bool,
    pub hard_factor: f64,
    pub rolling_window: usize,
    pub hard_set_capacity: usize,
    pub replay_fraction: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            enabled: true,
            hard_factor: 4.0,
            rolling_window: 1000,
            hard_set_capacity: 10_000,
            replay_fraction: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisedConfig {
    pub n_samples: usize,
    pub n_multistarts: usize,
    /// Steps between consistency passes; 0 disables them.
    pub consistency_every: usize,
    pub consistency_batch: usize,
    pub solver: SolverConfig,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        SupervisedConfig {
            n_samples: 10_000,
            n_multistarts: 100,
            consistency_every: 500,
            consistency_batch: 128,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub net: NetConfig,
    /// Zero the world feature at the network input.
    pub world_blind: bool,
    pub n_worlds: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Fractions of `steps` at which the rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<f64>,
    pub lambda_head: f64,
    /// Separation cap; `None` means `2·√N_DoF`.
    pub head_sep_cap: Option<f64>,
    pub grad_clip: Option<f64>,
    pub boost: BoostConfig,
    pub supervised: SupervisedConfig,
    /// Weights of the training loss.
    pub objective: ObjectiveWeights,
    pub n_bps: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Unsupervised,
            net: NetConfig::default(),
            world_blind: false,
            n_worlds: 50,
            batch_size: 64,
            steps: 20_000,
            learning_rate: 1e-3,
            lr_decay: 0.3,
            lr_milestones: vec![0.6, 0.85],
            lambda_head: 1e-3,
            head_sep_cap: None,
            grad_clip: Some(10.0),
            boost: BoostConfig::default(),
            supervised: SupervisedConfig::default(),
            objective: ObjectiveWeights::training(),
            n_bps: 100,
            log_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.boost;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(b.hard_factor > 1.0) {
            return bad("hard_factor must exceed 1");
        }
        if !(0.0..1.0).contains(&b.replay_fraction) {
            return bad("replay_fraction must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.steps == 0 {
            return bad("batch_size and steps must be positive");
        }
        if !(self.learning_rate > 0.0) || self.lambda_head < 0.0 {
            return bad("learning rate must be positive and lambda_head nonnegative");
        }
        if !self.objective.is_valid() {
            return bad("invalid objective weights");
        }
        Ok(())
    }

    pub fn separation_cap(&self, n_dof: usize) -> f64 {
        self.head_sep_cap.unwrap_or(2.0 * (n_dof as f64).sqrt())
    }

    pub fn architecture(&self, robot: &RobotModel, world_dim: usize) -> Architecture {
        let mut a = Architecture::default_for(robot, world_dim);
        a.trunk = self.net.trunk.clone();
        a.head = self.net.head.clone();
        a.n_heads = self.net.n_heads;
        a.activation = self.net.activation;
        a.encoding = self.net.encoding;
        a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub mean_cost: f64,
    pub collision_free_rate: f64,
    pub mean_head_distance: f64,
    pub hard_set_size: usize,
}

/// Everything needed to continue training bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub params: NetworkParams,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub hard: HardSet,
    pub step: usize,
    pub lr_scale: f64,
    pub losses: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub dataset: Option<Vec<LabeledSample>>,
    pub skipped_worlds: Vec<usize>,
    pub timing: Timing,
    pub solver_calls: usize,
    pub labels_replaced: usize,
}

/// Wall-clock seconds spent per phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub data_generation: f64,
    pub cleaning: f64,
    pub optimization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub steps: usize,
    pub final_loss: f64,
    pub curve: Vec<CurvePoint>,
    pub data_generation_secs: f64,
    pub cleaning_secs: f64,
    pub optimization_secs: f64,
    pub total_secs: f64,
    pub solver_calls: usize,
    pub labels: usize,
    pub labels_replaced: usize,
    pub hard_set_size: usize,
    pub skipped_worlds: Vec<usize>,
}

pub struct Trainer<'a> {
    robot: &'a RobotModel,
    worlds: &'a WorldSet,
    exec: Execution,
    state: TrainState,
}

impl<'a> Trainer<'a> {
    /// Fresh network and optimizer; supervised mode also generates its labels here.
    pub fn new(
        cfg: TrainConfig,
        robot: &'a RobotModel,
        worlds: &'a WorldSet,
        bps: &BasisPointSet,
        exec: Execution,
    ) -> Result<Self> {
        cfg.validate()?;
        if worlds.is_empty() {
            return Err(Error::InvalidArgument("empty world set".into()));
        }
        for w in &worlds.worlds {
            if w.feature.len() != bps.len() {
                return Err(Error::Mismatch(format!("world {} was encoded with a different basis point set", w.id)));
            }
        }
        let arch = cfg.architecture(robot, bps.len());
        let mut params = NetworkParams::new(arch, robot, bps, cfg.objective, cfg.seed)?;
        params.meta.world_blind = cfg.world_blind;
        let adam = Adam::new(params.n_params());
        let mut state = TrainState {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            hard: HardSet::new(
                cfg.boost.hard_set_capacity,
                cfg.boost.hard_factor,
                cfg.boost.rolling_window,
            ),
            params,
            adam,
            step: 0,
            lr_scale: 1.0,
            losses: Vec::new(),
            curve: Vec::new(),
            dataset: None,
            skipped_worlds: Vec::new(),
            timing: Timing::default(),
            solver_calls: 0,
            labels_replaced: 0,
            config: cfg,
        };
        if state.config.mode == TrainMode::Supervised {
            let t = Instant::now();
            let s = &state.config.supervised;
            let data = generate_supervised_data(
                worlds,
                robot,
                state.config.objective,
                &s.solver,
                s.n_samples,
                s.n_multistarts,
                state.config.seed.wrapping_add(1),
                exec,
            )?;
            state.timing.data_generation += t.elapsed().as_secs_f64();
            state.solver_calls += data.solver_calls;
            if data.samples.is_empty() {
                return Err(Error::InvalidArgument("no feasible labels could be generated".into()));
            }
            state.dataset = Some(data.samples);
        }
        Ok(Trainer {
            robot,
            worlds,
            exec,
            state,
        })
    }

    pub fn resume(state: TrainState, robot: &'a RobotModel, worlds: &'a WorldSet, exec: Execution) -> Result<Self> {
        state.params.ensure_compatible(robot, None)?;
        Ok(Trainer {
            robot,
            worlds,
            exec,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn params(&self) -> &NetworkParams {
        &self.state.params
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.state)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    fn context(&self) -> StepContext<'a> {
        let cfg = &self.state.config;
        StepContext {
            robot: self.robot,
            worlds: self.worlds,
            weights: cfg.objective,
            separation: (self.state.params.arch.n_heads == 2 && cfg.lambda_head > 0.0).then(|| HeadSeparation {
                lambda: cfg.lambda_head,
                cap: cfg.separation_cap(self.robot.n_dof()),
            }),
            grad_clip: cfg.grad_clip,
            exec: self.exec,
        }
    }

    fn fresh_targets(&mut self, n: usize) -> Result<Vec<BatchItem>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let active: Vec<usize> = (0..self.worlds.len())
                .filter(|w| !self.state.skipped_worlds.contains(w))
                .collect();
            if active.is_empty() {
                return Err(Error::InvalidArgument("every world is too cluttered to sample".into()));
            }
            let w = active[self.state.rng.random_range(0..active.len())];
            match sample_in_world(
                w,
                &self.worlds.worlds[w].field,
                self.robot,
                self.state.config.objective,
                &mut self.state.rng,
            ) {
                Ok(s) => out.push(BatchItem {
                    world: s.world,
                    target: s.target,
                    label: None,
                }),
                Err(Error::WorldTooCluttered(w)) => {
                    log::warn!("skipping world {}: too cluttered", self.worlds.worlds[w].id);
                    self.state.skipped_worlds.push(w);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// One optimizer step, plus the supervised consistency pass when due.
    pub fn step(&mut self) -> Result<BatchStats> {
        let cfg = self.state.config.clone();
        let b = cfg.batch_size;
        let t = Instant::now();
        let (batch, n_fresh) = match cfg.mode {
            TrainMode::Unsupervised => {
                let n_replay = if cfg.boost.enabled && !self.state.hard.is_empty() {
                    ((cfg.boost.replay_fraction * b as f64).round() as usize).min(b - 1)
                } else {
                    0
                };
                let mut batch = self.fresh_targets(b - n_replay)?;
                let n_fresh = batch.len();
                for e in self.state.hard.draw(&mut self.state.rng, n_replay) {
                    batch.push(BatchItem {
                        world: e.world,
                        target: e.target,
                        label: None,
                    });
                }
                (batch, n_fresh)
            }
            TrainMode::Supervised => {
                let data = self.state.dataset.as_ref().expect("supervised dataset");
                let batch: Vec<BatchItem> = (0..b)
                    .map(|_| {
                        let s = &data[self.state.rng.random_range(0..data.len())];
                        BatchItem {
                            world: s.world,
                            target: s.target.clone(),
                            label: Some(s.label.clone()),
                        }
                    })
                    .collect();
                (batch, 0)
            }
        };
        self.state.timing.data_generation += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let lr = scheduled_lr(cfg.learning_rate, cfg.lr_decay, &cfg.lr_milestones, self.state.step, cfg.steps)
            * self.state.lr_scale;
        let ctx = self.context();
        let stats = train_step(&mut self.state.params, &mut self.state.adam, lr, &batch, &ctx)?;
        if stats.rejected {
            log::warn!("step {}: non-finite loss, halving learning rate", self.state.step);
            self.state.lr_scale *= 0.5;
        } else if cfg.mode == TrainMode::Unsupervised && cfg.boost.enabled {
            for (item, cost) in batch.iter().zip(&stats.min_costs).take(n_fresh) {
                self.state.hard.observe(item.world, &item.target, *cost);
            }
        }
        self.state.timing.optimization += t.elapsed().as_secs_f64();
        self.state.losses.push(stats.loss);
        self.state.step += 1;

        let s = &cfg.supervised;
        if cfg.mode == TrainMode::Supervised && s.consistency_every > 0 && self.state.step % s.consistency_every == 0 {
            self.consistency_pass()?;
        }
        if cfg.log_every > 0 && (self.state.step % cfg.log_every == 0 || self.state.step == cfg.steps) {
            let free = stats.collision_free_rate.iter().sum::<f64>() / stats.collision_free_rate.len().max(1) as f64;
            self.state.curve.push(CurvePoint {
                step: self.state.step,
                loss: stats.loss,
                mean_cost: stats.mean_cost,
                collision_free_rate: free,
                mean_head_distance: stats.mean_head_distance,
                hard_set_size: self.state.hard.len(),
            });
            log::debug!("step {} loss {:.5} cost {:.5}", self.state.step, stats.loss, stats.mean_cost);
        }
        Ok(stats)
    }

    fn consistency_pass(&mut self) -> Result<()> {
        let t = Instant::now();
        let s = self.state.config.supervised.clone();
        let weights = self.state.config.objective;
        let mut data = self.state.dataset.take().expect("supervised dataset");
        let k = s.consistency_batch.min(data.len());
        let indices: Vec<usize> = (0..k).map(|_| self.state.rng.random_range(0..data.len())).collect();
        let params = &self.state.params;
        let (worlds, robot) = (self.worlds, self.robot);
        let result = consistency_pass_with(&mut data, &indices, worlds, robot, weights, &s.solver, self.exec, |l| {
            params
                .predict(&worlds.worlds[l.world].feature, &l.target, robot.dim)
                .map(|o| o.heads)
                .unwrap_or_default()
        });
        self.state.dataset = Some(data);
        let (replaced, calls) = result?;
        self.state.labels_replaced += replaced;
        self.state.solver_calls += calls;
        self.state.timing.cleaning += t.elapsed().as_secs_f64();
        Ok(())
    }

    /// Train until `config.steps`, writing a checkpoint every `every` steps if given.
    pub fn run(&mut self, checkpoint: Option<(&Path, usize)>) -> Result<()> {
        while self.state.step < self.state.config.steps {
            self.step()?;
            if let Some((path, every)) = checkpoint {
                if every > 0 && self.state.step % every == 0 {
                    self.save_checkpoint(path)?;
                }
            }
        }
        Ok(())
    }

    pub fn report(&self) -> TrainReport {
        let s = &self.state;
        TrainReport {
            mode: s.config.mode,
            steps: s.step,
            final_loss: s.losses.last().copied().unwrap_or(f64::NAN),
            curve: s.curve.clone(),
            data_generation_secs: s.timing.data_generation,
            cleaning_secs: s.timing.cleaning,
            optimization_secs: s.timing.optimization,
            total_secs: s.timing.data_generation + s.timing.cleaning + s.timing.optimization,
            solver_calls: s.solver_calls,
            labels: s.dataset.as_ref().map_or(0, Vec::len),
            labels_replaced: s.labels_replaced,
            hard_set_size: s.hard.len(),
            skipped_worlds: s.skipped_worlds.clone(),
        }
    }

    pub fn finish(self) -> (NetworkParams, TrainReport) {
        let r = self.report();
        (self.state.params, r)
    }
}

/// Train from scratch to completion.
pub fn train(
    cfg: TrainConfig,
    robot: &RobotModel,
    worlds: &WorldSet,
    bps: &BasisPointSet,
    exec: Execution,
) -> Result<(NetworkParams, TrainReport)> {
    let mut t = Trainer::new(cfg, robot, worlds, bps, exec)?;
    t.run(None)?;
    Ok(t.finish())
}
