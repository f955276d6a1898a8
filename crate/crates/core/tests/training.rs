//! Training losses, the supervised pipeline and trainer contracts.

use cfik::kin::{Dim, JointConfig, Pose};
use cfik::net::{Architecture, NetworkParams};
use cfik::objective::{cost_terms, cost_total, IkProblem, ObjectiveWeights};
use cfik::solver::{certify, random_config, SolverConfig};
use cfik::train::{
    consistency_pass_with, loss_and_grad, sample_problem, supervised_step, train, unsupervised_step, Adam,
    BatchItem, HardSet, HeadSeparation, LabeledSample, StepContext, TrainConfig, TrainMode, Trainer, WorldSet,
};
use cfik::world::{generate_world, make_bps, BasisPointSet, VoxelGrid, WorldGenParams};
use cfik::{presets, Execution, RobotModel};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn empty_worlds() -> (WorldSet, BasisPointSet) {
    let g = VoxelGrid::empty(Dim::Planar, [64, 64, 1], 2.0 / 64.0, Vector3::new(-1.0, -1.0, 0.0)).unwrap();
    let bps = make_bps(0, 16, &g.bounds()).unwrap();
    (WorldSet::new(&[("empty".into(), g)], &bps), bps)
}

fn generated_worlds(n: u64, n_bps: usize) -> (WorldSet, BasisPointSet) {
    let p = WorldGenParams::planar_default();
    let grids: Vec<_> = (0..n).map(|s| (format!("w{s}"), generate_world(s, &p).unwrap())).collect();
    let bps = make_bps(0, n_bps, &grids[0].1.bounds()).unwrap();
    (WorldSet::new(&grids, &bps), bps)
}

fn small_net(robot: &RobotModel, bps: &BasisPointSet, seed: u64) -> NetworkParams {
    let mut arch = Architecture::default_for(robot, bps.len());
    arch.trunk = vec![32, 32];
    arch.head = vec![16];
    NetworkParams::new(arch, robot, bps, ObjectiveWeights::training(), seed).unwrap()
}

fn ctx<'a>(robot: &'a RobotModel, worlds: &'a WorldSet, sep: Option<HeadSeparation>) -> StepContext<'a> {
    StepContext {
        robot,
        worlds,
        weights: ObjectiveWeights::training(),
        separation: sep,
        grad_clip: None,
        exec: Execution::Sequential,
    }
}

fn tcp(robot: &RobotModel, q: &JointConfig) -> Pose {
    robot.forward_kinematics(q).unwrap()[robot.tcp_frame].clone()
}

fn small_config(steps: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.net.trunk = vec![32, 32];
    cfg.net.head = vec![16];
    cfg.batch_size = 16;
    cfg.steps = steps;
    cfg.n_bps = 16;
    cfg.log_every = 5;
    cfg.seed = seed;
    cfg
}

#[test]
fn zero_output_layer_at_reachable_posture_is_stationary() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = empty_worlds();
    let mut params = small_net(&robot, &bps, 3);
    // Every head emits (u, v) = (1, 0) per joint, i.e. the mid-range angle 0.
    for head in &mut params.heads {
        let last = head.last_mut().unwrap();
        last.weight.fill(0.0);
        for k in 0..robot.n_dof() {
            last.bias[2 * k] = 1.0;
            last.bias[2 * k + 1] = 0.0;
        }
    }
    let q0 = JointConfig::zeros(robot.n_dof());
    let batch = vec![BatchItem {
        world: 0,
        target: tcp(&robot, &q0),
        label: None,
    }];
    let c = ctx(&robot, &worlds, None);
    let problem = IkProblem::new(&robot, &worlds.worlds[0].field, &batch[0].target, c.weights);
    assert_eq!(cost_total(&problem, &q0), 0.0);
    let (stats, grads) = loss_and_grad(&params, &batch, &c).unwrap();
    assert!(stats.loss.abs() < 1e-12, "loss {}", stats.loss);
    assert!(grads.norm() < 1e-8, "gradient norm {}", grads.norm());
}

#[test]
fn unsupervised_overfits_a_single_sample() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(1, 16);
    let mut params = small_net(&robot, &bps, 5);
    let mut adam = Adam::new(params.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = sample_problem(&worlds, &robot, ObjectiveWeights::training(), &mut rng).unwrap();
    let batch = vec![(s.world, s.target)];
    let c = ctx(&robot, &worlds, None);
    let first = unsupervised_step(&mut params, &mut adam, 1e-3, &batch, &c).unwrap().loss;
    let mut last = first;
    for _ in 1..500 {
        last = unsupervised_step(&mut params, &mut adam, 1e-3, &batch, &c).unwrap().loss;
    }
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn supervised_overfits_a_single_label() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = empty_worlds();
    let mut params = small_net(&robot, &bps, 6);
    let mut adam = Adam::new(params.n_params());
    let label = JointConfig::new(vec![0.4, -0.9, 1.1, 0.2, -0.5]);
    let batch = vec![(0, tcp(&robot, &label), label)];
    let c = ctx(&robot, &worlds, None);
    let mut loss = f64::INFINITY;
    for step in 0..2000 {
        loss = supervised_step(&mut params, &mut adam, 1e-3, &batch, &c).unwrap().loss;
        if loss < 1e-4 {
            eprintln!("converged after {step} steps");
            break;
        }
    }
    assert!(loss < 1e-4, "final loss {loss}");
}

#[test]
fn supervised_loss_ignores_which_head_matches() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = empty_worlds();
    let params = small_net(&robot, &bps, 7);
    let target = tcp(&robot, &JointConfig::zeros(5));
    let out = params.predict(&worlds.worlds[0].feature, &target, Dim::Planar).unwrap();
    let c = ctx(&robot, &worlds, None);
    let loss_for = |label: &JointConfig| {
        let item = BatchItem {
            world: 0,
            target: target.clone(),
            label: Some(label.clone()),
        };
        loss_and_grad(&params, &[item], &c).unwrap().0.loss
    };
    assert!(loss_for(out.q_a()) < 1e-20);
    assert!(loss_for(out.q_b().unwrap()) < 1e-20);
}

#[test]
fn separation_gives_identical_heads_opposing_gradients() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(1, 16);
    let mut params = small_net(&robot, &bps, 8);
    params.heads[1] = params.heads[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = vec![BatchItem {
        world: 0,
        target: tcp(&robot, &random_config(&robot, &mut rng)),
        label: None,
    }];
    let sep = HeadSeparation { lambda: 0.1, cap: 10.0 };
    let (_, with) = loss_and_grad(&params, &batch, &ctx(&robot, &worlds, Some(sep))).unwrap();
    let (_, without) = loss_and_grad(&params, &batch, &ctx(&robot, &worlds, None)).unwrap();
    let part = |h: usize| -> DVector<f64> {
        let a = with.heads[h].last().unwrap();
        let b = without.heads[h].last().unwrap();
        DVector::from_iterator(a.bias.len(), a.bias.iter().zip(b.bias.iter()).map(|(x, y)| x - y))
    };
    let (ga, gb) = (part(0), part(1));
    assert!(ga.norm() > 1e-6, "separation gradient vanished");
    assert!((&ga + &gb).norm() <= 1e-9 * ga.norm().max(1.0), "{ga} vs {gb}");
}

/// Both inverse-kinematics modes of the equal-link 3-DoF arm: flipping the
/// elbow keeps the wrist point and the end orientation.
fn elbow_flip(q: &JointConfig) -> JointConfig {
    JointConfig::new(vec![q[0] + q[1], -q[1], q[2] + q[1]])
}

#[test]
fn consistency_pass_replaces_high_cost_mode() {
    let robot = presets::flat_arm3();
    let (worlds, _) = empty_worlds();
    let w = ObjectiveWeights::default();
    let low = JointConfig::new(vec![0.2, 1.0, 0.3]);
    let high = elbow_flip(&low);
    let target = tcp(&robot, &low);
    let t_high = tcp(&robot, &high);
    assert!((target.translation - t_high.translation).norm() < 1e-12);
    assert!((target.rotation - t_high.rotation).amax() < 1e-12);

    let problem = IkProblem::new(&robot, &worlds.worlds[0].field, &target, w);
    let (c_low, c_high) = (cost_total(&problem, &low), cost_total(&problem, &high));
    // Posture cost alone orders the modes: ½‖q‖² is 0.565 against 2.065.
    assert!(cost_terms(&problem, &low).collision_free() && cost_terms(&problem, &high).collision_free());
    assert!((c_low - 0.5 * w.lambda_length * 1.13).abs() < 1e-9);
    assert!(c_low < c_high);

    let solver = SolverConfig::default();
    let mut data = vec![LabeledSample {
        world: 0,
        target: target.clone(),
        label: high.clone(),
        cost: c_high,
    }];
    // A start in the high mode's basin changes nothing.
    let (replaced, calls) = consistency_pass_with(&mut data, &[0], &worlds, &robot, w, &solver, Execution::Sequential, |_| {
        vec![JointConfig::new(vec![high[0] + 0.02, high[1] - 0.03, high[2]])]
    })
    .unwrap();
    assert_eq!((replaced, calls), (0, 1));
    assert_eq!(data[0].label, high);

    let (replaced, _) = consistency_pass_with(&mut data, &[0], &worlds, &robot, w, &solver, Execution::Sequential, |_| {
        vec![JointConfig::new(vec![low[0] - 0.05, low[1] + 0.04, low[2] + 0.03])]
    })
    .unwrap();
    assert_eq!(replaced, 1);
    let label = &data[0].label;
    assert!((label.as_vector() - low.as_vector()).amax() < 0.05, "{label:?}");
    assert!(data[0].cost < c_high);
    assert!(certify(&problem, label, &solver).unwrap().valid);
}

#[test]
fn unsupervised_training_never_calls_the_solver() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(3, 16);
    let cfg = TrainConfig {
        steps: 30,
        n_bps: 16,
        ..TrainConfig::default()
    };
    let (_, report) = train(cfg, &robot, &worlds, &bps, Execution::Sequential).unwrap();
    assert_eq!(report.mode, TrainMode::Unsupervised);
    assert_eq!(report.solver_calls, 0);
    assert_eq!(report.labels, 0);
    assert_eq!(report.steps, 30);
    assert_eq!(report.cleaning_secs, 0.0);
}

#[test]
fn supervised_report_splits_the_wall_clock() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(5, 100);
    // Default budgets (10k labels, 20k steps) scaled down by the same factor.
    let defaults = TrainConfig::default();
    let scale = 50;
    let mut cfg = TrainConfig {
        mode: TrainMode::Supervised,
        ..TrainConfig::default()
    };
    cfg.supervised.n_samples = defaults.supervised.n_samples / scale;
    cfg.steps = defaults.steps / scale;
    cfg.supervised.consistency_every = defaults.supervised.consistency_every / scale;
    let t = std::time::Instant::now();
    let (_, report) = train(cfg, &robot, &worlds, &bps, Execution::Sequential).unwrap();
    let wall = t.elapsed().as_secs_f64();
    eprintln!(
        "data {:.2}s cleaning {:.2}s optimization {:.2}s labels {} replaced {}",
        report.data_generation_secs, report.cleaning_secs, report.optimization_secs, report.labels, report.labels_replaced
    );
    assert!(report.solver_calls >= report.labels);
    assert_eq!(report.labels, defaults.supervised.n_samples / scale);
    assert!(report.data_generation_secs > 0.0 && report.optimization_secs > 0.0 && report.cleaning_secs >= 0.0);
    let parts = report.data_generation_secs + report.cleaning_secs + report.optimization_secs;
    assert!((report.total_secs - parts).abs() <= 1e-9 * parts.max(1.0));
    assert!(report.total_secs <= wall);
}

#[test]
fn resume_reproduces_the_loss_trajectory() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(3, 16);
    let mut cfg = small_config(40, 11);
    cfg.boost.rolling_window = 10;
    cfg.boost.hard_factor = 1.5;
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("state.json");

    let mut straight = Trainer::new(cfg.clone(), &robot, &worlds, &bps, Execution::Sequential).unwrap();
    straight.run(None).unwrap();

    let mut first = Trainer::new(cfg, &robot, &worlds, &bps, Execution::Sequential).unwrap();
    for _ in 0..20 {
        first.step().unwrap();
    }
    first.save_checkpoint(&ckpt).unwrap();
    drop(first);
    let state = Trainer::load_checkpoint(&ckpt).unwrap();
    let mut resumed = Trainer::resume(state, &robot, &worlds, Execution::Sequential).unwrap();
    resumed.run(None).unwrap();

    let a = straight.state();
    let b = resumed.state();
    assert!(a.hard.len() > 0, "boosting never triggered");
    assert_eq!(a.losses.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.losses.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.params.flat(), b.params.flat());
    assert_eq!(a.hard, b.hard);
}

#[test]
fn fixed_seed_gives_identical_parameters() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(3, 16);
    let run = |exec| train(small_config(25, 4), &robot, &worlds, &bps, exec).unwrap().0.flat();
    let a = run(Execution::Sequential);
    assert_eq!(a, run(Execution::Sequential));
    assert_eq!(a, run(Execution::Parallel));
    assert_ne!(a, train(small_config(25, 5), &robot, &worlds, &bps, Execution::Sequential).unwrap().0.flat());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hard_set_respects_threshold_and_capacity(
        costs in proptest::collection::vec(0.0..10.0f64, 1..400),
        capacity in 0usize..8,
        window in 1usize..20,
        factor in 1.5..6.0f64,
    ) {
        let mut h = HardSet::new(capacity, factor, window);
        let mut inserted = Vec::new();
        for (i, &c) in costs.iter().enumerate() {
            let mean = h.rolling_mean();
            if h.observe(i, &Pose::identity(), c) {
                let m = mean.expect("insertion needs a full window");
                prop_assert!(c > factor * m);
                inserted.push(c);
            } else if let Some(m) = mean {
                prop_assert!(capacity == 0 || c <= factor * m);
            }
            prop_assert!(h.len() <= capacity);
        }
        // The retained entries are the costliest insertions.
        inserted.sort_by(|a, b| b.total_cmp(a));
        let mut kept: Vec<f64> = h.entries().iter().map(|e| e.cost).collect();
        kept.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(&kept[..], &inserted[..kept.len()]);
    }
}

/// Minimum-over-heads objective of the raw predictions on held-out problems.
fn validation_costs(params: &NetworkParams, robot: &RobotModel, worlds: &WorldSet, n: usize) -> Vec<f64> {
    let w = ObjectiveWeights::training();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    (0..n)
        .map(|_| {
            let s = sample_problem(worlds, robot, w, &mut rng).unwrap();
            let tw = &worlds.worlds[s.world];
            let p = IkProblem::new(robot, &tw.field, &s.target, w);
            let out = params.predict(&tw.feature, &s.target, robot.dim).unwrap();
            out.heads.iter().map(|q| cost_total(&p, q)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn percentile(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)]
}

fn desk_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.net.trunk = vec![64, 64];
    cfg.net.head = vec![32];
    cfg.batch_size = 32;
    cfg.steps = 3000;
    cfg.n_bps = 32;
    cfg.boost.rolling_window = 200;
    cfg.seed = seed;
    cfg
}

#[test]
fn boosting_lowers_the_worst_validation_costs() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(10, 32);
    for seed in 0..3 {
        let run = |boost: bool| {
            let mut cfg = desk_config(seed);
            // The hard set needs a few thousand steps to fill before replay matters.
            cfg.steps = 15_000;
            cfg.boost.enabled = boost;
            let (net, _) = train(cfg, &robot, &worlds, &bps, Execution::Parallel).unwrap();
            percentile(&validation_costs(&net, &robot, &worlds, 2000), 0.99)
        };
        let (with, without) = (run(true), run(false));
        eprintln!("seed {seed}: p99 boosted {with:.4} plain {without:.4}");
        assert!(with <= without, "seed {seed}: boosted p99 {with} > plain {without}");
    }
}

#[test]
fn trained_heads_separate_beyond_their_jitter() {
    let robot = presets::flat_arm5();
    let (worlds, bps) = generated_worlds(10, 32);
    let (net, _) = train(desk_config(0), &robot, &worlds, &bps, Execution::Parallel).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut gap, mut jitter) = (0.0, 0.0);
    let n = 500;
    for _ in 0..n {
        let s = sample_problem(&worlds, &robot, ObjectiveWeights::training(), &mut rng).unwrap();
        let f = &worlds.worlds[s.world].feature;
        let nudged = Pose::new(s.target.translation + Vector3::new(1e-3, -1e-3, 0.0), s.target.rotation);
        let a = net.predict(f, &s.target, robot.dim).unwrap();
        let b = net.predict(f, &nudged, robot.dim).unwrap();
        gap += (a.q_a().as_vector() - a.q_b().unwrap().as_vector()).norm();
        jitter += 0.5
            * ((a.q_a().as_vector() - b.q_a().as_vector()).norm() + (a.q_b().unwrap().as_vector() - b.q_b().unwrap().as_vector()).norm());
    }
    let (gap, jitter) = (gap / n as f64, jitter / n as f64);
    assert!(gap >= 10.0 * jitter, "head gap {gap} vs jitter {jitter}");
}
