//! Configuration file (TOML) and the input loaders shared by subcommands.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cfik::eval::MapConfig;
use cfik::net::NetworkParams;
use cfik::train::{TrainConfig, WorldSet};
use cfik::world::{make_bps, BasisPointSet, VoxelGrid, WorldGenParams};
use cfik::{presets, Dim, ObjectiveWeights, Pose, RobotModel, SolverConfig};
use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::manifest::{file_digest, FileDigest, RunManifest, MANIFEST_FILE};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Every tunable of every subcommand. Missing sections take their defaults.
///
/// ```toml
/// schema_version = 1
/// [solver]
/// max_nullspace_iters = 10
/// [train]
/// steps = 20000
/// [train.net]
/// trunk = [256, 256, 256]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    /// World generation; `None` picks the planar or spatial default by `--dim`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldGenParams>,
    /// Objective used by the solver, maps and benchmarks.
    pub weights: ObjectiveWeights,
    pub solver: SolverConfig,
    pub train: TrainConfig,
    pub maps: MapConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema_version: CONFIG_SCHEMA_VERSION,
            world: None,
            weights: ObjectiveWeights::default(),
            solver: SolverConfig::default(),
            train: TrainConfig::default(),
            maps: MapConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            bail!("config schema version {} is not supported", cfg.schema_version);
        }
        cfg.solver.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

/// Collects digests of every file a run reads.
#[derive(Default)]
pub struct Inputs {
    pub files: Vec<FileDigest>,
}

impl Inputs {
    fn note(&mut self, path: &Path) -> Result<()> {
        let sha256 = file_digest(path)?;
        let path = path.display().to_string();
        if !self.files.iter().any(|f| f.path == path) {
            self.files.push(FileDigest { path, sha256 });
        }
        Ok(())
    }

    /// A preset name (`flat_arm3`, `flat_arm5`, `spatial_arm7`) or a robot description file.
    pub fn robot(&mut self, spec: &str) -> Result<RobotModel> {
        match spec {
            "flat_arm3" => Ok(presets::flat_arm3()),
            "flat_arm5" => Ok(presets::flat_arm5()),
            "spatial_arm7" => Ok(presets::spatial_arm7()),
            path => {
                let p = Path::new(path);
                if !p.exists() {
                    bail!("robot '{spec}' is neither a preset (flat_arm3, flat_arm5, spatial_arm7) nor a file");
                }
                self.note(p)?;
                RobotModel::load(p).with_context(|| format!("loading robot {path}"))
            }
        }
    }

    pub fn world(&mut self, path: &Path) -> Result<VoxelGrid> {
        self.note(path)?;
        VoxelGrid::load(path).with_context(|| format!("loading world {}", path.display()))
    }

    /// The worlds listed by a `gen-worlds` output directory, checked against their digests.
    pub fn world_dir(&mut self, dir: &Path) -> Result<Vec<(String, VoxelGrid)>> {
        let manifest = RunManifest::load(&dir.join(MANIFEST_FILE))?;
        let Some(set) = manifest.world_set else {
            bail!("{} was not written by gen-worlds", dir.display());
        };
        let mut grids = Vec::new();
        for (file, digest) in set.files.iter().zip(&set.digests) {
            let path = dir.join(file);
            if file_digest(&path)? != *digest {
                bail!("{} does not match the digest in its manifest", path.display());
            }
            grids.push((file.clone(), self.world(&path)?));
        }
        if grids.is_empty() {
            bail!("{} lists no worlds", dir.display());
        }
        Ok(grids)
    }

    pub fn net(&mut self, path: &Path, robot: &RobotModel) -> Result<NetworkParams> {
        self.note(path)?;
        let net = NetworkParams::load(path).with_context(|| format!("loading network {}", path.display()))?;
        net.ensure_compatible(robot, None)
            .with_context(|| format!("network {} cannot be used with robot {}", path.display(), robot.name))?;
        Ok(net)
    }
}

/// Load networks and build a world set encoded with their shared basis point
/// set. Without networks a one-point set stands in, since no features are used.
pub fn encode_worlds(grids: &[(String, VoxelGrid)], nets: &[NetworkParams]) -> Result<(WorldSet, BasisPointSet)> {
    let bps = match nets.first() {
        Some(n) => n.meta.bps.clone(),
        None => make_bps(0, 1, &grids[0].1.bounds())?,
    };
    for (k, n) in nets.iter().enumerate() {
        if n.meta.bps_id != bps.id() {
            bail!("network #{k} uses basis point set {} but network #0 uses {}", n.meta.bps_id, bps.id());
        }
    }
    Ok((WorldSet::new(grids, &bps), bps))
}

pub fn check_world_dim(robot: &RobotModel, grids: &[(String, VoxelGrid)]) -> Result<()> {
    for (name, g) in grids {
        if g.dim != robot.dim {
            bail!("world {name} is {:?} but robot {} is {:?}", g.dim, robot.name, robot.dim);
        }
    }
    Ok(())
}

/// `x,y,angle` for planar robots; `x,y,z,rx,ry,rz` (rotation vector, radians) for spatial ones.
pub fn parse_target(text: &str, dim: Dim) -> Result<Pose> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("target '{text}' is not a comma-separated list of numbers"))?;
    match (dim, v.len()) {
        (Dim::Planar, 3) => Ok(Pose::planar(v[0], v[1], v[2])),
        (Dim::Spatial, 6) => {
            let r = Rotation3::new(Vector3::new(v[3], v[4], v[5]));
            Ok(Pose::new(Vector3::new(v[0], v[1], v[2]), *r.matrix()))
        }
        (Dim::Planar, n) => bail!("planar targets take 3 values (x,y,angle), got {n}"),
        (Dim::Spatial, n) => bail!("spatial targets take 6 values (x,y,z,rx,ry,rz), got {n}"),
    }
}

pub fn world_params(cfg: &Config, dim: Dim) -> WorldGenParams {
    match &cfg.world {
        Some(p) => p.clone(),
        None if dim == Dim::Planar => WorldGenParams::planar_default(),
        None => WorldGenParams::spatial_default(),
    }
}
