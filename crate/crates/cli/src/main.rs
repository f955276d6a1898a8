//! `cfik`: world generation, training, solving, maps, benchmarks and ablations.
//!
//! Every subcommand that takes `--out` writes a `manifest.json` there listing
//! its arguments, effective configuration, seeds, input and output digests.
//! `cfik replay <manifest> --out <dir>` re-runs it.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cfik", version, about = "Learning-accelerated collision-free inverse kinematics")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CFIK_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Generate procedural obstacle worlds.
    GenWorlds(GenWorldsArgs),
    /// Train an initial-guess network.
    Train(TrainArgs),
    /// Solve one IK problem and print the result as JSON.
    Solve(SolveArgs),
    /// Reachability and network-error maps of a planar robot.
    Maps(MapsArgs),
    /// Compare initial-guess modes on a shared problem set.
    Bench(BenchArgs),
    /// Train and benchmark the ablation variants.
    Ablate(AblateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GenWorldsArgs {
    /// Number of worlds; seeds run from `--seed` upward.
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    /// 2 for planar, 3 for spatial.
    #[arg(long, default_value_t = 2)]
    pub dim: u8,
    /// Noise lattice cells per meter.
    #[arg(long)]
    pub frequency: Option<f64>,
    /// Occupancy threshold in (0, 1).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Preset name or robot description file.
    #[arg(long)]
    pub robot: String,
    /// Directory written by gen-worlds.
    #[arg(long)]
    pub worlds: PathBuf,
    /// `unsupervised` or `supervised`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write `checkpoint.json` every this many steps.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long)]
    pub robot: String,
    /// World file.
    #[arg(long)]
    pub world: PathBuf,
    /// `x,y,angle` (planar) or `x,y,z,rx,ry,rz` (spatial).
    #[arg(long, allow_hyphen_values = true)]
    pub target: String,
    #[arg(long)]
    pub net: Option<PathBuf>,
    /// `randomN`, `net1` or `net2`; default `net1` with a network, else `random20`.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct MapsArgs {
    #[arg(long)]
    pub robot: String,
    #[arg(long)]
    pub world: PathBuf,
    /// Also map the network's prediction error.
    #[arg(long)]
    pub net: Option<PathBuf>,
    /// Error value shown as white in the error images.
    #[arg(long, default_value_t = 0.1)]
    pub error_scale: f64,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long)]
    pub robot: String,
    #[arg(long)]
    pub worlds: PathBuf,
    /// Networks referenced by `netS:K` modes, in order.
    #[arg(long = "net")]
    pub nets: Vec<PathBuf>,
    /// Comma-separated modes, e.g. `random1,random20,net1,net2`.
    #[arg(long, value_delimiter = ',', default_value = "random1,net1")]
    pub modes: Vec<String>,
    #[arg(long, default_value_t = 2000)]
    pub n_per_world: usize,
    /// Nullspace iteration budget.
    #[arg(long, default_value_t = 10)]
    pub budget: usize,
}

#[derive(Args, Debug, Clone)]
pub struct AblateArgs {
    #[arg(long)]
    pub robot: String,
    #[arg(long)]
    pub train_worlds: PathBuf,
    #[arg(long)]
    pub test_worlds: PathBuf,
    /// Comma-separated variants; default all.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 400)]
    pub n_per_world: usize,
    #[arg(long, default_value_t = 10)]
    pub budget: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match commands::run(cli, &argv[1..], None) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
