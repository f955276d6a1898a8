use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sdf::DistanceField;
use super::Bounds;
use crate::error::{Error, Result};

/// Fixed workspace points whose distances encode a world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisPointSet {
    pub points: Vec<Vector3<f64>>,
}

impl BasisPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.points {
            for v in p.iter() {
                h.update(v.to_le_bytes());
            }
        }
        format!("bps{}-{}", self.len(), &hex::encode(h.finalize())[..16])
    }
}

/// Distances from each basis point to the nearest obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldFeature(pub Vec<f64>);

impl WorldFeature {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `n` points drawn uniformly inside `bounds`, deterministic in `seed`.
pub fn make_bps(seed: u64, n: usize, bounds: &Bounds) -> Result<BasisPointSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("basis point set needs at least one point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = bounds.dim.n();
    let points = (0..n)
        .map(|_| {
            let mut p = Vector3::zeros();
            for a in 0..d {
                p[a] = rng.random_range(bounds.lower[a]..=bounds.upper[a]);
            }
            p
        })
        .collect();
    Ok(BasisPointSet { points })
}

pub fn encode_world(field: &DistanceField, bps: &BasisPointSet) -> WorldFeature {
    WorldFeature(bps.points.iter().map(|b| field.distance_at(b)).collect())
}
