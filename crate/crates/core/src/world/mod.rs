//! Obstacle worlds: procedural generation, signed distance fields and
//! basis-point-set encoding.

mod bps;
mod grid;
mod noise;
mod sdf;

pub use bps::{encode_world, make_bps, BasisPointSet, WorldFeature};
pub use grid::{generate_world, VoxelGrid, WorldGenParams, WorldSetManifest, WORLD_FILE_MAGIC};
pub use noise::GradientNoise;
pub use sdf::{build_distance_field, DistanceField};

use nalgebra::Vector3;

use crate::kin::Dim;

/// Axis-aligned box in world coordinates. Planar bounds ignore z.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bounds {
    pub dim: Dim,
    pub lower: Vector3<f64>,
    pub upper: Vector3<f64>,
}

impl Bounds {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..self.dim.n()).all(|a| p[a] >= self.lower[a] && p[a] <= self.upper[a])
    }
}
