use std::path::Path;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use cfik::eval::{
    build_maps, mode_guesses, run_ablation, run_benchmark, AblationSetup, BenchMode, MapLayer, MapSampling, ProblemSet, Variant,
};
use cfik::net::NetworkParams;
use cfik::par::init_threads;
use cfik::solver::solve_labeled;
use cfik::train::{TrainMode, Trainer, WorldSet};
use cfik::world::{build_distance_field, generate_world, make_bps, WorldSetManifest};
use cfik::{Dim, Execution, IkProblem};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde_json::json;

use crate::config::{check_world_dim, encode_worlds, parse_target, world_params, Config, Inputs};
use crate::manifest::{file_digest, now_unix, OutDir, RunManifest, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};
use crate::{AblateArgs, BenchArgs, Cli, Command, GenWorldsArgs, MapsArgs, SolveArgs, TrainArgs};

/// What a subcommand hands back for its manifest.
#[derive(Default)]
struct Produced {
    seeds: Vec<u64>,
    world_set: Option<WorldSetManifest>,
    summary: serde_json::Value,
    /// Overrides the recorded configuration, for settings taken from flags.
    config: Option<Config>,
}

struct Ctx {
    cfg: Config,
    seed: u64,
    inputs: Inputs,
    exec: Execution,
}

/// The command line with `--out` and its value removed.
fn strip_out(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            out.push(a.clone());
        }
    }
    out
}

pub fn run(cli: Cli, argv: &[String], config_override: Option<Config>) -> Result<()> {
    init_threads(cli.global.threads);
    let mut inputs = Inputs::default();
    let cfg = match (config_override, &cli.global.config) {
        (Some(c), _) => c,
        (None, Some(p)) => {
            let c = Config::load(p)?;
            inputs.files.push(crate::manifest::FileDigest {
                path: p.display().to_string(),
                sha256: file_digest(p)?,
            });
            c
        }
        (None, None) => Config::default(),
    };
    let mut ctx = Ctx {
        cfg,
        seed: cli.global.seed,
        inputs,
        exec: Execution::Parallel,
    };
    if let Command::Replay(r) = &cli.command {
        let out = cli.global.out.as_deref().context("replay needs --out")?;
        return replay(&r.manifest, out);
    }
    let (name, needs_out) = match &cli.command {
        Command::GenWorlds(_) => ("gen-worlds", true),
        Command::Train(_) => ("train", true),
        Command::Solve(_) => ("solve", false),
        Command::Maps(_) => ("maps", true),
        Command::Bench(_) => ("bench", true),
        Command::Ablate(_) => ("ablate", true),
        Command::Replay(_) => unreachable!(),
    };
    let mut out = match &cli.global.out {
        Some(p) => Some(OutDir::create(p)?),
        None if needs_out => bail!("{name} needs --out"),
        None => None,
    };
    let started = now_unix();
    let produced = match &cli.command {
        Command::GenWorlds(a) => gen_worlds(&mut ctx, a, out.as_mut().unwrap())?,
        Command::Train(a) => train(&mut ctx, a, out.as_mut().unwrap())?,
        Command::Solve(a) => solve(&mut ctx, a, out.as_mut())?,
        Command::Maps(a) => maps(&mut ctx, a, out.as_mut().unwrap())?,
        Command::Bench(a) => bench(&mut ctx, a, out.as_mut().unwrap())?,
        Command::Ablate(a) => ablate(&mut ctx, a, out.as_mut().unwrap())?,
        Command::Replay(_) => unreachable!(),
    };
    if let Some(out) = out {
        let mut seeds = vec![ctx.seed];
        seeds.extend(produced.seeds.iter().filter(|s| **s != ctx.seed));
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            subcommand: name.to_string(),
            args: strip_out(argv),
            config: produced.config.unwrap_or(ctx.cfg),
            seeds,
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            inputs: ctx.inputs.files,
            outputs: Vec::new(),
            started_unix: started,
            finished_unix: 0.0,
            world_set: produced.world_set,
            summary: produced.summary,
        };
        let root = out.root.clone();
        out.finish(manifest)?;
        eprintln!("wrote {}", root.join(MANIFEST_FILE).display());
    }
    Ok(())
}

fn replay(manifest_path: &Path, out: &Path) -> Result<()> {
    let old = RunManifest::load(manifest_path)?;
    let mut argv = vec!["cfik".to_string()];
    argv.extend(old.args.iter().cloned());
    argv.push("--out".into());
    argv.push(out.display().to_string());
    let cli = <Cli as clap::Parser>::try_parse_from(&argv).context("the recorded arguments no longer parse")?;
    for f in &old.inputs {
        let p = Path::new(&f.path);
        if p.exists() && file_digest(p)? != f.sha256 {
            bail!("input {} changed since the recorded run", f.path);
        }
    }
    run(cli, &argv[1..], Some(old.config.clone()))?;
    let new = RunManifest::load(&out.join(MANIFEST_FILE))?;
    let mut mismatches = Vec::new();
    for o in old.outputs.iter().filter(|o| o.deterministic) {
        match new.outputs.iter().find(|n| n.path == o.path) {
            Some(n) if n.sha256 == o.sha256 => {}
            _ => mismatches.push(o.path.clone()),
        }
    }
    ensure!(mismatches.is_empty(), "replayed outputs differ: {}", mismatches.join(", "));
    eprintln!(
        "replay reproduced {} deterministic outputs",
        old.outputs.iter().filter(|o| o.deterministic).count()
    );
    Ok(())
}

fn dim_of(code: u8) -> Result<Dim> {
    match code {
        2 => Ok(Dim::Planar),
        3 => Ok(Dim::Spatial),
        d => bail!("--dim must be 2 or 3, got {d}"),
    }
}

fn gen_worlds(ctx: &mut Ctx, a: &GenWorldsArgs, out: &mut OutDir) -> Result<Produced> {
    let dim = dim_of(a.dim)?;
    let mut params = world_params(&ctx.cfg, dim);
    ensure!(params.dim == dim, "configured world dimension disagrees with --dim {}", a.dim);
    if let Some(f) = a.frequency {
        params.noise_frequency = f;
    }
    if let Some(t) = a.threshold {
        params.threshold = t;
    }
    let seeds: Vec<u64> = (0..a.n).map(|i| ctx.seed + i).collect();
    let mut files = Vec::new();
    let mut digests = Vec::new();
    for &s in &seeds {
        let grid = generate_world(s, &params)?;
        let name = format!("world_{s:06}.vox");
        grid.save(out.path(&name))?;
        out.record(&name, true)?;
        digests.push(file_digest(&out.path(&name))?);
        files.push(name);
    }
    let mut cfg = ctx.cfg.clone();
    cfg.world = Some(params.clone());
    Ok(Produced {
        seeds: seeds.clone(),
        world_set: Some(WorldSetManifest {
            schema_version: 1,
            params,
            seeds,
            files,
            digests,
        }),
        config: Some(cfg),
        ..Produced::default()
    })
}

fn train(ctx: &mut Ctx, a: &TrainArgs, out: &mut OutDir) -> Result<Produced> {
    let robot = ctx.inputs.robot(&a.robot)?;
    let grids = ctx.inputs.world_dir(&a.worlds)?;
    check_world_dim(&robot, &grids)?;
    let mut tcfg = ctx.cfg.train.clone();
    if let Some(m) = &a.mode {
        tcfg.mode = match m.as_str() {
            "unsupervised" => TrainMode::Unsupervised,
            "supervised" => TrainMode::Supervised,
            other => bail!("unknown training mode '{other}' (expected unsupervised or supervised)"),
        };
    }
    if let Some(s) = a.steps {
        tcfg.steps = s;
    }
    tcfg.seed = ctx.seed;
    tcfg.validate()?;

    let state = match &a.resume {
        Some(p) => {
            ctx.inputs.files.push(crate::manifest::FileDigest {
                path: p.display().to_string(),
                sha256: file_digest(p)?,
            });
            let st = Trainer::load_checkpoint(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            st.params.ensure_compatible(&robot, None)?;
            Some(st)
        }
        None => None,
    };
    let bps = match &state {
        Some(st) => st.params.meta.bps.clone(),
        None => make_bps(ctx.seed, tcfg.n_bps, &grids[0].1.bounds())?,
    };
    let worlds = WorldSet::new(&grids, &bps);
    let mut trainer = match state {
        Some(st) => {
            tcfg = st.config.clone();
            Trainer::resume(st, &robot, &worlds, ctx.exec)?
        }
        None => Trainer::new(tcfg.clone(), &robot, &worlds, &bps, ctx.exec)?,
    };
    let ckpt = out.path("checkpoint.json");
    trainer.run(a.checkpoint_every.map(|n| (ckpt.as_path(), n)))?;
    if a.checkpoint_every.is_some() && ckpt.exists() {
        out.record("checkpoint.json", false)?;
    }
    let (net, report) = trainer.finish();
    net.save(out.path("net.bin"))?;
    out.record("net.bin", true)?;

    let mut curve = String::from("step,loss,mean_cost,collision_free_rate,mean_head_distance,hard_set_size\n");
    for c in &report.curve {
        curve.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.step, c.loss, c.mean_cost, c.collision_free_rate, c.mean_head_distance, c.hard_set_size
        ));
    }
    out.write("curve.csv", curve.as_bytes(), true)?;
    out.write("train_report.json", serde_json::to_string_pretty(&report)?.as_bytes(), false)?;
    eprintln!(
        "trained {} steps in {:.1}s (data {:.1}s, cleaning {:.1}s, optimization {:.1}s), final loss {:.5}",
        report.steps,
        report.total_secs,
        report.data_generation_secs,
        report.cleaning_secs,
        report.optimization_secs,
        report.final_loss
    );
    let mut cfg = ctx.cfg.clone();
    cfg.train = tcfg;
    Ok(Produced {
        summary: json!({
            "robot_id": robot.id(),
            "bps_id": bps.id(),
            "final_loss": report.final_loss,
            "total_secs": report.total_secs,
            "data_generation_secs": report.data_generation_secs,
            "cleaning_secs": report.cleaning_secs,
            "optimization_secs": report.optimization_secs,
            "solver_calls": report.solver_calls,
        }),
        config: Some(cfg),
        ..Produced::default()
    })
}

fn solve(ctx: &mut Ctx, a: &SolveArgs, out: Option<&mut OutDir>) -> Result<Produced> {
    let robot = ctx.inputs.robot(&a.robot)?;
    let grid = ctx.inputs.world(&a.world)?;
    let grids = vec![("world".to_string(), grid)];
    check_world_dim(&robot, &grids)?;
    let nets: Vec<NetworkParams> = a.net.iter().map(|p| ctx.inputs.net(p, &robot)).collect::<Result<_>>()?;
    let (worlds, _) = encode_worlds(&grids, &nets)?;
    let mode: BenchMode = match &a.mode {
        Some(m) => m.parse()?,
        None if nets.is_empty() => BenchMode::Random(20),
        None => BenchMode::Net { net: 0, starts: 1 },
    };
    let target = parse_target(&a.target, robot.dim)?;
    let w = &worlds.worlds[0];
    let problem = IkProblem::new(&robot, &w.field, &target, ctx.cfg.weights);
    let net_refs: Vec<&NetworkParams> = nets.iter().collect();
    let t = Instant::now();
    let guesses = mode_guesses(mode, &problem, &w.feature, &net_refs, ctx.seed)?;
    let result = solve_labeled(&problem, &guesses, &ctx.cfg.solver)?;
    let wall_ms = t.elapsed().as_secs_f64() * 1e3;
    let printed = json!({
        "q": result.q.as_slice(),
        "feasible": result.feasible,
        "pos_error": result.pos_error,
        "rot_error": result.rot_error,
        "cost": result.cost,
        "iterations": result.iterations_used,
        "start": format!("{:?}", result.start_label),
        "mode": mode.to_string(),
        "wall_ms": wall_ms,
    });
    println!("{}", serde_json::to_string_pretty(&printed)?);
    if let Some(out) = out {
        out.write("result.json", serde_json::to_string_pretty(&result)?.as_bytes(), true)?;
    }
    Ok(Produced {
        summary: json!({ "wall_ms": wall_ms }),
        ..Produced::default()
    })
}

fn write_pgm(out: &mut OutDir, name: &str, side: usize, pixels: &[u8]) -> Result<()> {
    let mut bytes = Vec::new();
    PnmEncoder::new(&mut bytes)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, side as u32, side as u32, ExtendedColorType::L8)?;
    out.write(name, &bytes, true)
}

fn maps(ctx: &mut Ctx, a: &MapsArgs, out: &mut OutDir) -> Result<Produced> {
    let robot = ctx.inputs.robot(&a.robot)?;
    ensure!(robot.dim == Dim::Planar, "maps need a planar robot, {} is spatial", robot.name);
    let grid = ctx.inputs.world(&a.world)?;
    check_world_dim(&robot, &[("world".to_string(), grid.clone())])?;
    let field = build_distance_field(&grid);
    let net = a.net.as_ref().map(|p| ctx.inputs.net(p, &robot)).transpose()?;
    let feature = net.as_ref().map(|n| n.encode(&field));
    let mut mcfg = ctx.cfg.maps.clone();
    if let MapSampling::Random { seed, .. } = &mut mcfg.sampling {
        *seed = ctx.seed;
    }
    let map = build_maps(
        &robot,
        &field,
        ctx.cfg.weights,
        &mcfg,
        net.as_ref().zip(feature.as_ref()),
        ctx.exec,
    )?;
    write_pgm(out, "feasible.pgm", map.resolution, &map.to_gray8(MapLayer::Feasible, 1.0))?;
    if net.is_some() {
        write_pgm(out, "pos_error.pgm", map.resolution, &map.to_gray8(MapLayer::PosError, a.error_scale))?;
        write_pgm(out, "rot_error.pgm", map.resolution, &map.to_gray8(MapLayer::RotError, a.error_scale))?;
    }
    out.write("map.csv", map.to_csv().as_bytes(), true)?;
    eprintln!("{} of {} cells reachable", map.feasible_count(), map.feasible.len());
    let mut cfg = ctx.cfg.clone();
    cfg.maps = mcfg;
    Ok(Produced {
        summary: json!({ "feasible_cells": map.feasible_count(), "cells": map.feasible.len() }),
        config: Some(cfg),
        ..Produced::default()
    })
}

fn bench(ctx: &mut Ctx, a: &BenchArgs, out: &mut OutDir) -> Result<Produced> {
    let robot = ctx.inputs.robot(&a.robot)?;
    let grids = ctx.inputs.world_dir(&a.worlds)?;
    check_world_dim(&robot, &grids)?;
    let nets: Vec<NetworkParams> = a.nets.iter().map(|p| ctx.inputs.net(p, &robot)).collect::<Result<_>>()?;
    let modes: Vec<BenchMode> = a.modes.iter().map(|m| m.parse()).collect::<cfik::Result<_>>()?;
    for m in &modes {
        if let BenchMode::Net { net, .. } = m {
            ensure!(*net < nets.len(), "mode {m} needs network #{net} but {} were given with --net", nets.len());
        }
    }
    let (worlds, _) = encode_worlds(&grids, &nets)?;
    let problems = ProblemSet::sample(&worlds, &robot, ctx.cfg.weights, a.n_per_world, ctx.seed);
    ensure!(!problems.is_empty(), "no collision-free targets could be sampled in these worlds");
    let net_refs: Vec<&NetworkParams> = nets.iter().collect();
    let report = run_benchmark(
        &problems,
        &worlds,
        &robot,
        ctx.cfg.weights,
        &net_refs,
        &modes,
        &ctx.cfg.solver,
        a.budget,
        ctx.seed,
        ctx.exec,
    )?;
    out.write("problems.json", serde_json::to_string(&problems)?.as_bytes(), true)?;
    out.write("report.json", serde_json::to_string_pretty(&report)?.as_bytes(), false)?;
    out.write("report.csv", report.to_csv().as_bytes(), false)?;
    for m in &report.modes {
        eprintln!(
            "{:>10}: feasibility {:.1}%, mean iterations {:.2}, {:.3} ms per problem",
            m.mode.to_string(),
            100.0 * m.feasibility,
            m.mean_iterations,
            m.mean_solve_ms
        );
    }
    Ok(Produced {
        summary: json!({ "problem_digest": report.problem_digest, "n_problems": problems.len() }),
        ..Produced::default()
    })
}

fn ablate(ctx: &mut Ctx, a: &AblateArgs, out: &mut OutDir) -> Result<Produced> {
    let robot = ctx.inputs.robot(&a.robot)?;
    let train_grids = ctx.inputs.world_dir(&a.train_worlds)?;
    let test_grids = ctx.inputs.world_dir(&a.test_worlds)?;
    check_world_dim(&robot, &train_grids)?;
    check_world_dim(&robot, &test_grids)?;
    let variants: Vec<Variant> = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.iter().map(|v| v.parse()).collect::<cfik::Result<_>>()?
    };
    let base = ctx.cfg.train.clone();
    let bps = make_bps(ctx.seed, base.n_bps, &train_grids[0].1.bounds())?;
    let train_worlds = WorldSet::new(&train_grids, &bps);
    let test_worlds = WorldSet::new(&test_grids, &bps);
    let problems = ProblemSet::sample(&test_worlds, &robot, ctx.cfg.weights, a.n_per_world, ctx.seed);
    ensure!(!problems.is_empty(), "no collision-free targets could be sampled in the test worlds");
    let setup = AblationSetup {
        base: &base,
        robot: &robot,
        train_worlds: &train_worlds,
        bps: &bps,
        test_worlds: &test_worlds,
        problems: &problems,
        weights: ctx.cfg.weights,
        solver: &ctx.cfg.solver,
        iteration_budget: a.budget,
        exec: ctx.exec,
    };
    let table = run_ablation(&variants, &a.seeds, &setup)?;
    out.write("ablation.csv", table.to_csv().as_bytes(), false)?;
    out.write("ablation.json", serde_json::to_string_pretty(&table)?.as_bytes(), false)?;
    for r in &table.rows {
        eprintln!(
            "{:>15} seed {}: feasibility {:.1}%, mean iterations {:.2}",
            r.variant.to_string(),
            r.seed,
            100.0 * r.feasibility,
            r.mean_iterations
        );
    }
    Ok(Produced {
        seeds: a.seeds.clone(),
        summary: json!({ "problem_digest": problems.digest() }),
        ..Produced::default()
    })
}
