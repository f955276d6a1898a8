use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::noise::GradientNoise;
use super::Bounds;
use crate::error::{Error, Result};
use crate::kin::Dim;

/// Leading bytes of a binary world file.
pub const WORLD_FILE_MAGIC: &[u8; 8] = b"CFIKVOX\0";
const WORLD_FILE_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 5 + 8 * 4;

/// Occupancy grid. Planar grids have `shape[2] == 1`. Voxel `(i, j, k)` is
/// stored at `i + nx * (j + ny * k)` and centered at `origin + (idx + ½)·h`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub dim: Dim,
    pub shape: [usize; 3],
    pub voxel_size: f64,
    pub origin: Vector3<f64>,
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(dim: Dim, shape: [usize; 3], voxel_size: f64, origin: Vector3<f64>) -> Result<Self> {
        let shape = normalize_shape(dim, shape)?;
        if !(voxel_size > 0.0) {
            return Err(Error::InvalidArgument("voxel size must be positive".into()));
        }
        let n = shape.iter().product();
        Ok(VoxelGrid {
            dim,
            shape,
            voxel_size,
            origin,
            occupancy: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.shape[0] * (j + self.shape[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.shape[0];
        let r = idx / self.shape[0];
        [i, r % self.shape[1], r / self.shape[1]]
    }

    pub fn center(&self, idx: usize) -> Vector3<f64> {
        let c = self.coords(idx);
        let mut p = Vector3::zeros();
        for a in 0..self.dim.n() {
            p[a] = self.origin[a] + (c[a] as f64 + 0.5) * self.voxel_size;
        }
        p
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn voxel_at(&self, p: &Vector3<f64>) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..self.dim.n() {
            let u = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            if u < 0.0 || u >= self.shape[a] as f64 {
                return None;
            }
            c[a] = u as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    pub fn bounds(&self) -> Bounds {
        let mut upper = self.origin;
        for a in 0..self.dim.n() {
            upper[a] += self.shape[a] as f64 * self.voxel_size;
        }
        Bounds {
            dim: self.dim,
            lower: self.origin,
            upper,
        }
    }

    /// Length of the grid diagonal; used as the distance sentinel.
    pub fn diagonal(&self) -> f64 {
        (0..self.dim.n())
            .map(|a| (self.shape[a] as f64 * self.voxel_size).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupancy.iter().filter(|&&o| o).count() as f64 / self.len() as f64
    }

    /// Mark every voxel whose center lies in the axis-aligned box as occupied.
    pub fn fill_box(&mut self, lower: Vector3<f64>, upper: Vector3<f64>) {
        self.fill_where(|p| (0..p.len()).all(|a| p[a] >= lower[a] && p[a] <= upper[a]));
    }

    /// Mark every voxel whose center lies within `radius` of `center` as occupied.
    pub fn fill_ball(&mut self, center: Vector3<f64>, radius: f64) {
        self.fill_where(|p| {
            (0..p.len()).map(|a| (p[a] - center[a]).powi(2)).sum::<f64>() <= radius * radius
        });
    }

    fn fill_where(&mut self, pred: impl Fn(&[f64]) -> bool) {
        let d = self.dim.n();
        for idx in 0..self.len() {
            let c = self.center(idx);
            if pred(&c.as_slice()[..d]) {
                self.occupancy[idx] = true;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len().div_ceil(8));
        out.extend_from_slice(WORLD_FILE_MAGIC);
        out.extend_from_slice(&WORLD_FILE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim.n() as u32).to_le_bytes());
        for s in self.shape {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.voxel_size.to_le_bytes());
        for a in 0..3 {
            out.extend_from_slice(&self.origin[a].to_le_bytes());
        }
        let mut bits = vec![0u8; self.len().div_ceil(8)];
        for (i, &o) in self.occupancy.iter().enumerate() {
            if o {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptFile(format!("world file: {m}"));
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..8] != WORLD_FILE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(8) != WORLD_FILE_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let dim = Dim::try_from(u32_at(12) as u8).map_err(|e| corrupt(&e))?;
        let shape = [u32_at(16) as usize, u32_at(20) as usize, u32_at(24) as usize];
        let voxel_size = f64_at(28);
        let origin = Vector3::new(f64_at(36), f64_at(44), f64_at(52));
        let mut grid = VoxelGrid::empty(dim, shape, voxel_size, origin).map_err(|e| corrupt(&e.to_string()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != grid.len().div_ceil(8) {
            return Err(corrupt("occupancy length does not match header"));
        }
        for i in 0..grid.len() {
            grid.occupancy[i] = body[i / 8] >> (i % 8) & 1 == 1;
        }
        Ok(grid)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        VoxelGrid::from_bytes(&buf)
    }
}

fn normalize_shape(dim: Dim, mut shape: [usize; 3]) -> Result<[usize; 3]> {
    if dim == Dim::Planar {
        if shape[2] > 1 {
            return Err(Error::InvalidArgument("planar grids have a single z layer".into()));
        }
        shape[2] = 1;
    }
    if shape.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!("degenerate grid shape {shape:?}")));
    }
    Ok(shape)
}

/// Parameters of a procedural world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldGenParams {
    pub dim: Dim,
    pub shape: [usize; 3],
    pub voxel_size: f64,
    pub origin: [f64; 3],
    /// Lattice cells per meter.
    pub noise_frequency: f64,
    /// Voxels whose noise value, mapped to `[0, 1]`, exceeds this are occupied.
    pub threshold: f64,
    /// A ball kept free of obstacles, usually around the robot base.
    pub clear_center: [f64; 3],
    pub clear_radius: f64,
}

impl WorldGenParams {
    /// 64×64 planar world over `[-1, 1]²` with a free disc around the origin.
    pub fn planar_default() -> Self {
        WorldGenParams {
            dim: Dim::Planar,
            shape: [64, 64, 1],
            voxel_size: 2.0 / 64.0,
            origin: [-1.0, -1.0, 0.0],
            noise_frequency: 2.5,
            threshold: 0.6,
            clear_center: [0.0; 3],
            clear_radius: 0.15,
        }
    }

    /// 64³ spatial world over `[-1, 1]³`.
    pub fn spatial_default() -> Self {
        WorldGenParams {
            dim: Dim::Spatial,
            shape: [64, 64, 64],
            voxel_size: 2.0 / 64.0,
            origin: [-1.0, -1.0, -1.0],
            noise_frequency: 2.5,
            threshold: 0.6,
            clear_center: [0.0, 0.0, 0.1],
            clear_radius: 0.3,
        }
    }
}

/// Procedural occupancy from thresholded gradient noise; deterministic in `seed`.
pub fn generate_world(seed: u64, params: &WorldGenParams) -> Result<VoxelGrid> {
    if !(params.threshold > 0.0 && params.threshold < 1.0) {
        return Err(Error::InvalidArgument("threshold must lie in (0, 1)".into()));
    }
    if !(params.noise_frequency > 0.0) {
        return Err(Error::InvalidArgument("noise frequency must be positive".into()));
    }
    let mut grid = VoxelGrid::empty(
        params.dim,
        params.shape,
        params.voxel_size,
        Vector3::from(params.origin),
    )?;
    let noise = GradientNoise::new(seed);
    // Planar worlds sample an off-lattice slice of the 3D field.
    let z_slice = 0.37;
    let clear = Vector3::from(params.clear_center);
    let d = params.dim.n();
    for idx in 0..grid.len() {
        let c = grid.center(idx);
        let f = params.noise_frequency;
        let z = if d == 3 { c.z * f } else { z_slice };
        let v = 0.5 * (noise.sample(c.x * f, c.y * f, z) + 1.0);
        let dist2: f64 = (0..d).map(|a| (c[a] - clear[a]).powi(2)).sum();
        grid.occupancy[idx] = v > params.threshold && dist2 > params.clear_radius.powi(2);
    }
    Ok(grid)
}

/// Seeds and parameters of a generated world set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSetManifest {
    pub schema_version: u32,
    pub params: WorldGenParams,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    /// SHA-256 of each world file, hex encoded.
    pub digests: Vec<String>,
}
