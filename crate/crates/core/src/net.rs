//! Twin-headed MLP mapping (world feature, target frame) to joint angles.
//!
//! Samples are stored column-wise so a batch is one matrix product per layer.
//! Each head ends in `2·N_DoF` raw outputs read as `(u, v)` pairs; the pair's
//! angle `atan2(v, u)` is rescaled from `[−π, π]` into the joint limits.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kin::{Dim, JointConfig, Pose, RobotModel};
use crate::objective::ObjectiveWeights;
use crate::world::{encode_world, BasisPointSet, DistanceField, WorldFeature};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"CFIKNET1";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// `x·σ(x)`
    #[default]
    Silu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

/// How raw head outputs become joint angles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputEncoding {
    /// One `(u, v)` pair per joint, read as a point on the unit circle.
    #[default]
    UnitVector,
    /// One value per joint, squashed into the limits with `tanh`.
    DirectAngle,
}

impl OutputEncoding {
    pub fn width(self) -> usize {
        match self {
            OutputEncoding::UnitVector => 2,
            OutputEncoding::DirectAngle => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub world_dim: usize,
    pub frame_dim: usize,
    pub trunk: Vec<usize>,
    pub head: Vec<usize>,
    pub n_heads: usize,
    pub n_dof: usize,
    pub activation: Activation,
    pub encoding: OutputEncoding,
}

impl Architecture {
    /// Trunk 3×256, two heads of 2×128.
    pub fn default_for(robot: &RobotModel, world_dim: usize) -> Self {
        Architecture {
            world_dim,
            frame_dim: frame_feature_dim(robot.dim),
            trunk: vec![256, 256, 256],
            head: vec![128, 128],
            n_heads: 2,
            n_dof: robot.n_dof(),
            activation: Activation::default(),
            encoding: OutputEncoding::default(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.world_dim + self.frame_dim
    }

    pub fn output_dim(&self) -> usize {
        self.n_dof * self.encoding.width()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.n_heads > 2 {
            return Err(Error::InvalidArgument("network needs one or two heads".into()));
        }
        if self.n_dof == 0 || self.input_dim() == 0 || self.trunk.contains(&0) || self.head.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            weight: DMatrix::zeros(n_out, n_in),
            bias: DVector::zeros(n_out),
        }
    }

    fn glorot(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        Layer {
            weight: DMatrix::from_fn(n_out, n_in, |_, _| rng.random_range(-a..a)),
            bias: DVector::zeros(n_out),
        }
    }

    fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Consistency data checked before a network is used with a robot and world encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub robot_id: String,
    pub bps_id: String,
    pub bps: BasisPointSet,
    pub weights: ObjectiveWeights,
    /// The world feature is zeroed at the input.
    pub world_blind: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub trunk: Vec<Layer>,
    pub heads: Vec<Vec<Layer>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub meta: NetworkMeta,
}

/// Same layout as the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub trunk: Vec<Layer>,
    pub heads: Vec<Vec<Layer>>,
}

/// Flattened target pose: position, then `(cos θ, sin θ)` in 2D or the
/// row-major rotation matrix in 3D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFeature(pub Vec<f64>);

pub fn frame_feature_dim(dim: Dim) -> usize {
    match dim {
        Dim::Planar => 4,
        Dim::Spatial => 12,
    }
}

pub fn frame_feature(dim: Dim, pose: &Pose) -> FrameFeature {
    let t = &pose.translation;
    match dim {
        Dim::Planar => {
            let a = pose.planar_angle();
            FrameFeature(vec![t.x, t.y, a.cos(), a.sin()])
        }
        Dim::Spatial => {
            let mut v = vec![t.x, t.y, t.z];
            for i in 0..3 {
                for j in 0..3 {
                    v.push(pose.rotation[(i, j)]);
                }
            }
            FrameFeature(v)
        }
    }
}

/// Unit-circle projection with `normalize(0, 0) = (1, 0)`.
pub fn normalize_pair(u: f64, v: f64) -> (f64, f64) {
    let r = u.hypot(v);
    if r == 0.0 {
        (1.0, 0.0)
    } else {
        (u / r, v / r)
    }
}

fn rescale(theta: f64, lower: f64, upper: f64) -> f64 {
    lower + (theta + PI) / (2.0 * PI) * (upper - lower)
}

/// Map raw `(u, v)` pairs to angles within `[lower, upper]`.
pub fn to_angles(raw: &[f64], lower: &[f64], upper: &[f64]) -> Result<JointConfig> {
    if raw.len() != 2 * lower.len() || lower.len() != upper.len() {
        return Err(Error::DimensionMismatch {
            what: "raw output",
            expected: 2 * lower.len(),
            got: raw.len(),
        });
    }
    Ok(JointConfig::new(
        (0..lower.len())
            .map(|k| {
                let (u, v) = normalize_pair(raw[2 * k], raw[2 * k + 1]);
                rescale(v.atan2(u), lower[k], upper[k])
            })
            .collect(),
    ))
}

/// Both heads' predictions for one input (a single-head network has one entry).
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutput {
    pub heads: Vec<JointConfig>,
}

impl HeadOutput {
    pub fn q_a(&self) -> &JointConfig {
        &self.heads[0]
    }

    pub fn q_b(&self) -> Option<&JointConfig> {
        self.heads.get(1)
    }
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: DMatrix<f64>,
    pre: DMatrix<f64>,
}

/// Activations saved by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    batch: usize,
    trunk: Vec<LayerCache>,
    heads: Vec<Vec<LayerCache>>,
    raw: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

impl NetworkParams {
    /// Glorot-initialized network, deterministic in `seed`.
    pub fn new(
        arch: Architecture,
        robot: &RobotModel,
        bps: &BasisPointSet,
        weights: ObjectiveWeights,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(arch, robot, bps, weights, |i, o| Layer::glorot(i, o, &mut rng))
    }

    /// All weights and biases zero.
    pub fn zeros(arch: Architecture, robot: &RobotModel, bps: &BasisPointSet, weights: ObjectiveWeights) -> Result<Self> {
        Self::build(arch, robot, bps, weights, Layer::zeros)
    }

    fn build(
        arch: Architecture,
        robot: &RobotModel,
        bps: &BasisPointSet,
        weights: ObjectiveWeights,
        mut make: impl FnMut(usize, usize) -> Layer,
    ) -> Result<Self> {
        arch.validate()?;
        if arch.n_dof != robot.n_dof() || arch.frame_dim != frame_feature_dim(robot.dim) {
            return Err(Error::Mismatch("architecture does not fit the robot".into()));
        }
        if arch.world_dim != bps.len() {
            return Err(Error::DimensionMismatch {
                what: "world feature",
                expected: bps.len(),
                got: arch.world_dim,
            });
        }
        let mut trunk = Vec::new();
        let mut n_in = arch.input_dim();
        for &w in &arch.trunk {
            trunk.push(make(n_in, w));
            n_in = w;
        }
        let trunk_out = n_in;
        let heads = (0..arch.n_heads)
            .map(|_| {
                let mut layers = Vec::new();
                let mut n_in = trunk_out;
                for &w in &arch.head {
                    layers.push(make(n_in, w));
                    n_in = w;
                }
                layers.push(make(n_in, arch.output_dim()));
                layers
            })
            .collect();
        Ok(NetworkParams {
            trunk,
            heads,
            lower: robot.joints.iter().map(|j| j.lower).collect(),
            upper: robot.joints.iter().map(|j| j.upper).collect(),
            meta: NetworkMeta {
                robot_id: robot.id(),
                bps_id: bps.id(),
                bps: bps.clone(),
                weights,
                world_blind: false,
            },
            arch,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(Layer::n_params).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk.iter_mut().chain(self.heads.iter_mut().flatten())
    }

    /// Parameters in layer order, each weight column-major followed by its bias.
    pub fn flat(&self) -> Vec<f64> {
        flatten(self.layers())
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.n_params(),
                got: values.len(),
            });
        }
        let mut at = 0;
        for l in self.layers_mut() {
            let n = l.weight.len();
            l.weight.as_mut_slice().copy_from_slice(&values[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Refuse use with a different robot or world encoding.
    pub fn ensure_compatible(&self, robot: &RobotModel, bps: Option<&BasisPointSet>) -> Result<()> {
        let id = robot.id();
        if id != self.meta.robot_id {
            return Err(Error::Mismatch(format!(
                "network was trained for robot {} but got {}",
                self.meta.robot_id, id
            )));
        }
        if let Some(b) = bps {
            if b.id() != self.meta.bps_id {
                return Err(Error::Mismatch(format!(
                    "network expects basis point set {} but got {}",
                    self.meta.bps_id,
                    b.id()
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self, field: &DistanceField) -> WorldFeature {
        encode_world(field, &self.meta.bps)
    }

    /// Stack `(world, frame)` pairs into the input matrix, one column each.
    pub fn input_matrix(&self, samples: &[(&WorldFeature, &FrameFeature)]) -> Result<DMatrix<f64>> {
        let a = &self.arch;
        let mut x = DMatrix::zeros(a.input_dim(), samples.len());
        for (c, (w, f)) in samples.iter().enumerate() {
            if w.len() != a.world_dim {
                return Err(Error::DimensionMismatch {
                    what: "world feature",
                    expected: a.world_dim,
                    got: w.len(),
                });
            }
            if f.0.len() != a.frame_dim {
                return Err(Error::DimensionMismatch {
                    what: "frame feature",
                    expected: a.frame_dim,
                    got: f.0.len(),
                });
            }
            if !self.meta.world_blind {
                for (i, v) in w.0.iter().enumerate() {
                    x[(i, c)] = *v;
                }
            }
            for (i, v) in f.0.iter().enumerate() {
                x[(a.world_dim + i, c)] = *v;
            }
        }
        Ok(x)
    }

    fn decode(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.arch.n_dof;
        DMatrix::from_fn(n, raw.ncols(), |k, c| {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            match self.arch.encoding {
                OutputEncoding::UnitVector => {
                    let (u, v) = (raw[(2 * k, c)], raw[(2 * k + 1, c)]);
                    let (u, v) = normalize_pair(u, v);
                    rescale(v.atan2(u), lo, hi)
                }
                OutputEncoding::DirectAngle => 0.5 * (lo + hi) + 0.5 * (hi - lo) * raw[(k, c)].tanh(),
            }
        })
    }

    /// Joint angles per head (`n_dof × batch` each) for a batch of input columns.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<(Vec<DMatrix<f64>>, ForwardCache)> {
        if x.nrows() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: self.arch.input_dim(),
                got: x.nrows(),
            });
        }
        let act = self.arch.activation;
        let mut h = x.clone();
        let mut trunk = Vec::with_capacity(self.trunk.len());
        for l in &self.trunk {
            let pre = affine(l, &h);
            let out = pre.map(|z| act.apply(z));
            trunk.push(LayerCache { input: h, pre });
            h = out;
        }
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut raw = Vec::with_capacity(self.heads.len());
        let mut q = Vec::with_capacity(self.heads.len());
        for layers in &self.heads {
            let mut a = h.clone();
            let mut caches = Vec::with_capacity(layers.len());
            for (i, l) in layers.iter().enumerate() {
                let pre = affine(l, &a);
                let last = i + 1 == layers.len();
                let out = if last { pre.clone() } else { pre.map(|z| act.apply(z)) };
                caches.push(LayerCache { input: a, pre });
                a = out;
            }
            q.push(self.decode(&a));
            raw.push(a);
            heads.push(caches);
        }
        Ok((
            q,
            ForwardCache {
                batch: x.ncols(),
                trunk,
                heads,
                raw,
            },
        ))
    }

    pub fn forward(&self, x_w: &WorldFeature, x_f: &FrameFeature) -> Result<(HeadOutput, ForwardCache)> {
        let x = self.input_matrix(&[(x_w, x_f)])?;
        let (q, cache) = self.forward_batch(&x)?;
        let heads = q
            .into_iter()
            .map(|m| JointConfig::from_vector(m.column(0).into_owned()))
            .collect();
        Ok((HeadOutput { heads }, cache))
    }

    pub fn predict(&self, x_w: &WorldFeature, target: &Pose, dim: Dim) -> Result<HeadOutput> {
        Ok(self.forward(x_w, &frame_feature(dim, target))?.0)
    }

    /// Exact parameter gradients given `∂L/∂q` per head (`n_dof × batch`).
    pub fn backward(&self, cache: &ForwardCache, upstream: &[DMatrix<f64>]) -> Result<Gradients> {
        let n = self.arch.n_dof;
        if upstream.len() != self.heads.len() || cache.heads.len() != self.heads.len() {
            return Err(Error::Mismatch("upstream gradients do not match the heads".into()));
        }
        for u in upstream {
            if u.nrows() != n || u.ncols() != cache.batch {
                return Err(Error::Mismatch("stale forward cache".into()));
            }
        }
        let act = self.arch.activation;
        let trunk_width = cache
            .trunk
            .last()
            .map(|c| c.pre.nrows())
            .unwrap_or(self.arch.input_dim());
        let mut d_trunk_out = DMatrix::zeros(trunk_width, cache.batch);
        let mut head_grads = Vec::with_capacity(self.heads.len());
        for (h, layers) in self.heads.iter().enumerate() {
            let mut delta = self.decode_backward(&cache.raw[h], &upstream[h]);
            let caches = &cache.heads[h];
            let mut grads = vec![None; layers.len()];
            for i in (0..layers.len()).rev() {
                let c = &caches[i];
                if i + 1 != layers.len() {
                    delta.zip_apply(&c.pre, |d, z| *d *= act.derivative(z));
                }
                grads[i] = Some(Layer {
                    weight: &delta * c.input.transpose(),
                    bias: row_sums(&delta),
                });
                delta = layers[i].weight.transpose() * &delta;
            }
            d_trunk_out += delta;
            head_grads.push(grads.into_iter().map(|g| g.expect("filled")).collect());
        }
        let mut delta = d_trunk_out;
        let mut trunk_grads = vec![None; self.trunk.len()];
        for i in (0..self.trunk.len()).rev() {
            let c = &cache.trunk[i];
            delta.zip_apply(&c.pre, |d, z| *d *= act.derivative(z));
            trunk_grads[i] = Some(Layer {
                weight: &delta * c.input.transpose(),
                bias: row_sums(&delta),
            });
            if i > 0 {
                delta = self.trunk[i].weight.transpose() * &delta;
            }
        }
        Ok(Gradients {
            trunk: trunk_grads.into_iter().map(|g| g.expect("filled")).collect(),
            heads: head_grads,
        })
    }

    fn decode_backward(&self, raw: &DMatrix<f64>, dq: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.arch.n_dof;
        let mut d = DMatrix::zeros(raw.nrows(), raw.ncols());
        for c in 0..raw.ncols() {
            for k in 0..n {
                let span = self.upper[k] - self.lower[k];
                match self.arch.encoding {
                    OutputEncoding::UnitVector => {
                        let (u, v) = (raw[(2 * k, c)], raw[(2 * k + 1, c)]);
                        let r2 = u * u + v * v;
                        if r2 > 0.0 {
                            let g = dq[(k, c)] * span / (2.0 * PI) / r2;
                            d[(2 * k, c)] = -v * g;
                            d[(2 * k + 1, c)] = u * g;
                        }
                    }
                    OutputEncoding::DirectAngle => {
                        let t = raw[(k, c)].tanh();
                        d[(k, c)] = dq[(k, c)] * 0.5 * span * (1.0 - t * t);
                    }
                }
            }
        }
        d
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&FileHeader {
            arch: self.arch.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            meta: self.meta.clone(),
        })?;
        let flat = self.flat();
        let mut out = Vec::with_capacity(32 + header.len() + 8 * flat.len());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptFile(format!("weights file: {m}"));
        let mut r = Reader { bytes, at: 0 };
        if r.take(8).ok_or_else(|| corrupt("truncated header"))? != WEIGHTS_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(r.array().ok_or_else(|| corrupt("truncated header"))?);
        if version != WEIGHTS_VERSION {
            return Err(Error::Mismatch(format!("unsupported weights version {version}")));
        }
        let len = u64::from_le_bytes(r.array().ok_or_else(|| corrupt("truncated header"))?) as usize;
        let header: FileHeader =
            serde_json::from_slice(r.take(len).ok_or_else(|| corrupt("truncated metadata"))?)?;
        let n = u64::from_le_bytes(r.array().ok_or_else(|| corrupt("truncated parameters"))?) as usize;
        let body = r.take(n.checked_mul(8).ok_or_else(|| corrupt("bad length"))?);
        let body = body.ok_or_else(|| corrupt("truncated parameters"))?;
        if r.at != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut params = NetworkParams {
            trunk: Vec::new(),
            heads: Vec::new(),
            lower: header.lower,
            upper: header.upper,
            meta: header.meta,
            arch: header.arch,
        };
        params.arch.validate()?;
        if params.lower.len() != params.arch.n_dof || params.upper.len() != params.arch.n_dof {
            return Err(corrupt("joint limits do not match the architecture"));
        }
        let a = params.arch.clone();
        let mut n_in = a.input_dim();
        for &w in &a.trunk {
            params.trunk.push(Layer::zeros(n_in, w));
            n_in = w;
        }
        let trunk_out = n_in;
        for _ in 0..a.n_heads {
            let mut layers = Vec::new();
            let mut n_in = trunk_out;
            for &w in &a.head {
                layers.push(Layer::zeros(n_in, w));
                n_in = w;
            }
            layers.push(Layer::zeros(n_in, a.output_dim()));
            params.heads.push(layers);
        }
        params.set_flat(&flat).map_err(|_| corrupt("parameter count does not match the architecture"))?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    arch: Architecture,
    lower: Vec<f64>,
    upper: Vec<f64>,
    meta: NetworkMeta,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let s = self.bytes.get(self.at..end)?;
        self.at = end;
        Some(s)
    }

    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|s| s.try_into().expect("length checked"))
    }
}

fn affine(l: &Layer, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &l.weight * x;
    for mut col in z.column_iter_mut() {
        col += &l.bias;
    }
    z
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum())
}

fn flatten<'a>(layers: impl Iterator<Item = &'a Layer>) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weight.as_slice());
        out.extend_from_slice(l.bias.as_slice());
    }
    out
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        flatten(self.trunk.iter().chain(self.heads.iter().flatten()))
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}
