//! Workspace maps, transition sweeps and the warm-start benchmark.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use cfik::eval::{build_maps, run_benchmark, straight_path, transition_sweep, BenchMode, MapConfig, MapSampling, ProblemSet};
use cfik::net::{Architecture, NetworkParams};
use cfik::objective::ObjectiveWeights;
use cfik::solver::SolverConfig;
use cfik::train::WorldSet;
use cfik::world::{build_distance_field, generate_world, make_bps, DistanceField, VoxelGrid, WorldGenParams};
use cfik::{presets, Dim, Execution};
use nalgebra::Vector3;
use proptest::prelude::*;

fn empty_field(half: f64) -> DistanceField {
    build_distance_field(&VoxelGrid::empty(Dim::Planar, [64, 64, 1], 2.0 * half / 64.0, Vector3::new(-half, -half, 0.0)).unwrap())
}

fn cell(res: usize, extent: f64, x: f64, y: f64) -> usize {
    let c = 2.0 * extent / res as f64;
    ((y + extent) / c).floor() as usize * res + ((x + extent) / c).floor() as usize
}

#[test]
fn single_link_map_is_the_circle_of_its_length() {
    let robot = presets::planar_arm(1, 0.5, 0.03, 2);
    let field = empty_field(1.0);
    let cfg = MapConfig {
        resolution: 40,
        n_orientation_bins: 36,
        extent: Some(0.6),
        sampling: MapSampling::Grid { per_joint: 200_000 },
    };
    let map = build_maps(&robot, &field, ObjectiveWeights::default(), &cfg, None, Execution::Sequential).unwrap();
    let circle: BTreeSet<usize> = (0..1_000_000)
        .map(|i| {
            let a = -PI + 2.0 * PI * i as f64 / 1e6;
            cell(40, 0.6, 0.5 * a.cos(), 0.5 * a.sin())
        })
        .collect();
    let feasible: BTreeSet<usize> = (0..map.feasible.len()).filter(|&i| map.feasible[i]).collect();
    assert_eq!(feasible, circle);
    for i in 0..map.feasible.len() {
        assert_eq!(map.max_pos_error[i], None);
    }
}

#[test]
fn cells_inside_an_obstacle_are_infeasible() {
    let robot = presets::flat_arm3();
    let mut g = VoxelGrid::empty(Dim::Planar, [128, 128, 1], 2.0 / 128.0, Vector3::new(-1.0, -1.0, 0.0)).unwrap();
    g.fill_box(Vector3::new(0.3, 0.2, -1.0), Vector3::new(0.5, 0.4, 1.0));
    let field = build_distance_field(&g);
    let cfg = MapConfig {
        resolution: 32,
        n_orientation_bins: 36,
        extent: Some(1.0),
        sampling: MapSampling::Random { n: 300_000, seed: 1 },
    };
    let map = build_maps(&robot, &field, ObjectiveWeights::default(), &cfg, None, Execution::Parallel).unwrap();
    let c = 2.0 / 32.0;
    let mut inside = 0;
    for i in 0..map.feasible.len() {
        let (x, y) = map.cell_center(i);
        let (hx, hy) = (x - 0.4, y - 0.3);
        if hx.abs() + 0.5 * c <= 0.1 && hy.abs() + 0.5 * c <= 0.1 {
            inside += 1;
            assert!(!map.feasible[i], "cell at ({x:.3}, {y:.3}) inside the obstacle");
        }
    }
    assert!(inside >= 4);
    // The free workspace around the obstacle is still reached.
    assert!(map.feasible[map.cell_of(0.4, -0.3).unwrap()]);
    assert!(map.feasible[map.cell_of(-0.4, 0.3).unwrap()]);
}

#[test]
fn feasible_count_converges_in_sampling() {
    let robot = presets::flat_arm5();
    let field = build_distance_field(&generate_world(3, &WorldGenParams::planar_default()).unwrap());
    let count = |n| {
        let cfg = MapConfig {
            sampling: MapSampling::Random { n, seed: 7 },
            ..MapConfig::default()
        };
        build_maps(&robot, &field, ObjectiveWeights::default(), &cfg, None, Execution::Parallel)
            .unwrap()
            .feasible_count() as f64
    };
    let (a, b) = (count(1_000_000), count(2_000_000));
    assert!(b > 0.0);
    assert!((a - b).abs() <= 0.02 * b, "{a} cells vs {b} with doubled sampling");
}

#[test]
fn empty_world_map_is_mirror_symmetric() {
    let robot = presets::flat_arm3();
    let field = empty_field(1.0);
    // Odd resolution centers a row on the mirror axis y = 0.
    let res = 33;
    let cfg = MapConfig {
        resolution: res,
        n_orientation_bins: 36,
        extent: None,
        sampling: MapSampling::Grid { per_joint: 61 },
    };
    let map = build_maps(&robot, &field, ObjectiveWeights::default(), &cfg, None, Execution::Parallel).unwrap();
    assert!(map.feasible_count() > 0);
    for j in 0..res {
        for i in 0..res {
            assert_eq!(map.feasible[j * res + i], map.feasible[(res - 1 - j) * res + i], "cell ({i}, {j})");
        }
    }
}

#[test]
fn maps_reject_spatial_robots() {
    let robot = presets::spatial_arm7();
    let field = empty_field(1.0);
    assert!(build_maps(&robot, &field, ObjectiveWeights::default(), &MapConfig::default(), None, Execution::Sequential).is_err());
}

fn untrained_net(seed: u64) -> (NetworkParams, cfik::world::WorldFeature) {
    let robot = presets::flat_arm5();
    let g = generate_world(seed % 4, &WorldGenParams::planar_default()).unwrap();
    let bps = make_bps(seed, 16, &g.bounds()).unwrap();
    let mut arch = Architecture::default_for(&robot, bps.len());
    arch.trunk = vec![16];
    arch.head = vec![8];
    let params = NetworkParams::new(arch, &robot, &bps, ObjectiveWeights::default(), seed).unwrap();
    let feature = params.encode(&build_distance_field(&g));
    (params, feature)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn best_head_is_the_minimum_at_every_target(
        seed in 0u64..1000,
        a in (-0.8..0.8f64, -0.8..0.8f64, -PI..PI),
        b in (-0.8..0.8f64, -0.8..0.8f64, -PI..PI),
    ) {
        let robot = presets::flat_arm5();
        let (params, feature) = untrained_net(seed);
        let sweep = transition_sweep(&params, &robot, &feature, &straight_path(a, b, 25)).unwrap();
        for p in &sweep {
            prop_assert_eq!(p.best_pos_error, p.pos_error[0].min(p.pos_error[1]));
            prop_assert_eq!(p.best_rot_error, p.rot_error[0].min(p.rot_error[1]));
        }
    }
}

fn bench_worlds() -> (WorldSet, cfik::world::BasisPointSet) {
    let p = WorldGenParams::planar_default();
    let grids: Vec<_> = (100..103).map(|s| (format!("t{s}"), generate_world(s, &p).unwrap())).collect();
    let bps = make_bps(0, 16, &grids[0].1.bounds()).unwrap();
    (WorldSet::new(&grids, &bps), bps)
}

#[test]
fn benchmark_is_deterministic_and_shares_problems() {
    let robot = presets::flat_arm5();
    let (worlds, _) = bench_worlds();
    let w = ObjectiveWeights::default();
    let problems = ProblemSet::sample(&worlds, &robot, w, 20, 5);
    assert_eq!(problems, ProblemSet::sample(&worlds, &robot, w, 20, 5));
    assert_ne!(problems.digest(), ProblemSet::sample(&worlds, &robot, w, 20, 6).digest());
    let modes = [BenchMode::Random(1), BenchMode::Random(4)];
    let run = |exec| {
        let mut r = run_benchmark(&problems, &worlds, &robot, w, &[], &modes, &SolverConfig::default(), 10, 3, exec).unwrap();
        for m in &mut r.modes {
            m.mean_solve_ms = 0.0;
        }
        r
    };
    let a = run(Execution::Sequential);
    assert_eq!(a, run(Execution::Sequential));
    assert_eq!(a, run(Execution::Parallel));
    assert_eq!(a.problem_digest, problems.digest());
    for m in &a.modes {
        assert_eq!(m.n_problems, problems.len());
        assert!((0.0..=1.0).contains(&m.feasibility));
        assert_eq!(m.certification_failures, 0);
    }
    // More starts from the same stream can only help.
    assert!(a.modes[1].feasibility >= a.modes[0].feasibility);
}

#[test]
fn many_random_starts_nearly_always_succeed() {
    let robot = presets::flat_arm5();
    let (worlds, _) = bench_worlds();
    let w = ObjectiveWeights::default();
    let problems = ProblemSet::sample(&worlds, &robot, w, 40, 11);
    let r = run_benchmark(
        &problems,
        &worlds,
        &robot,
        w,
        &[],
        &[BenchMode::Random(100)],
        &SolverConfig::default(),
        100,
        0,
        Execution::Parallel,
    )
    .unwrap();
    assert!(r.modes[0].feasibility >= 0.95, "feasibility {}", r.modes[0].feasibility);
}

#[test]
fn net_modes_need_a_network() {
    let robot = presets::flat_arm5();
    let (worlds, _) = bench_worlds();
    let w = ObjectiveWeights::default();
    let problems = ProblemSet::sample(&worlds, &robot, w, 2, 1);
    let modes = [BenchMode::Net { net: 0, starts: 1 }];
    assert!(run_benchmark(&problems, &worlds, &robot, w, &[], &modes, &SolverConfig::default(), 10, 0, Execution::Sequential).is_err());
}
