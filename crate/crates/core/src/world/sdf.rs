use nalgebra::Vector3;

use super::grid::VoxelGrid;
use crate::kin::Dim;

/// Signed distance field sampled at voxel centers.
///
/// Free voxels hold the distance to the nearest occupied voxel center minus
/// half a voxel; occupied voxels hold the negated distance to the nearest free
/// voxel center minus half a voxel, so the zero level set sits on voxel faces.
#[derive(Clone, Debug)]
pub struct DistanceField {
    pub dim: Dim,
    pub shape: [usize; 3],
    pub voxel_size: f64,
    pub origin: Vector3<f64>,
    pub distance: Vec<f64>,
    /// Per-voxel central-difference gradient, scaled to norm ≤ 1.
    pub gradient: Vec<Vector3<f64>>,
}

const FAR: f64 = 1e20;

/// Squared 1D distance transform of sampled function `f` (Felzenszwalb & Huttenlocher).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        while k >= 0 {
            let p = v[k as usize];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
            } else {
                break;
            }
        }
        if k < 0 {
            k = 0;
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
        } else {
            let p = v[k as usize];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
        }
        z[k as usize + 1] = f64::INFINITY;
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = FAR);
        return;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Squared distance (in voxel units) from every voxel to the nearest voxel with `seed == true`.
fn squared_edt(shape: [usize; 3], seed: impl Fn(usize) -> bool) -> Vec<f64> {
    let n: usize = shape.iter().product();
    let mut g: Vec<f64> = (0..n).map(|i| if seed(i) { 0.0 } else { FAR }).collect();
    let max_len = *shape.iter().max().unwrap();
    let mut f = vec![0.0; max_len];
    let mut out = vec![0.0; max_len];
    let mut v = vec![0usize; max_len];
    let mut z = vec![0.0; max_len + 1];
    let stride = [1, shape[0], shape[0] * shape[1]];
    for axis in 0..3 {
        let len = shape[axis];
        if len == 1 {
            continue;
        }
        let s = stride[axis];
        for start in 0..n {
            // Visit each line once, from its first element.
            if (start / s) % len != 0 {
                continue;
            }
            for i in 0..len {
                f[i] = g[start + i * s];
            }
            edt_1d(&f[..len], &mut out[..len], &mut v, &mut z);
            for i in 0..len {
                g[start + i * s] = out[i];
            }
        }
    }
    g
}

/// Exact Euclidean distance transform of both phases, combined with signs.
/// A world without obstacles maps to the grid diagonal everywhere (negated for
/// a world without free space).
pub fn build_distance_field(grid: &VoxelGrid) -> DistanceField {
    let h = grid.voxel_size;
    let sentinel = grid.diagonal();
    let n = grid.len();
    let any_occ = grid.occupancy.iter().any(|&o| o);
    let any_free = grid.occupancy.iter().any(|&o| !o);
    let distance: Vec<f64> = if !any_occ {
        vec![sentinel; n]
    } else if !any_free {
        vec![-sentinel; n]
    } else {
        let to_occ = squared_edt(grid.shape, |i| grid.occupancy[i]);
        let to_free = squared_edt(grid.shape, |i| !grid.occupancy[i]);
        (0..n)
            .map(|i| {
                if grid.occupancy[i] {
                    -(to_free[i].sqrt() - 0.5) * h
                } else {
                    (to_occ[i].sqrt() - 0.5) * h
                }
            })
            .collect()
    };
    let mut field = DistanceField {
        dim: grid.dim,
        shape: grid.shape,
        voxel_size: h,
        origin: grid.origin,
        distance,
        gradient: Vec::new(),
    };
    field.gradient = (0..n).map(|i| field.voxel_gradient(i)).collect();
    field
}

impl DistanceField {
    #[inline]
    fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.shape[0] * (c[1] + self.shape[1] * c[2])
    }

    fn voxel_gradient(&self, idx: usize) -> Vector3<f64> {
        let mut c = [idx % self.shape[0], (idx / self.shape[0]) % self.shape[1], 0];
        c[2] = idx / (self.shape[0] * self.shape[1]);
        let mut g = Vector3::zeros();
        for a in 0..self.dim.n() {
            if self.shape[a] == 1 {
                continue;
            }
            let (mut lo, mut hi) = (c, c);
            lo[a] = c[a].saturating_sub(1);
            hi[a] = (c[a] + 1).min(self.shape[a] - 1);
            let span = (hi[a] - lo[a]) as f64 * self.voxel_size;
            g[a] = (self.distance[self.index(hi)] - self.distance[self.index(lo)]) / span;
        }
        let norm = g.norm();
        if norm > 1.0 {
            g / norm
        } else {
            g
        }
    }

    pub fn voxel_center(&self, c: [usize; 3]) -> Vector3<f64> {
        let mut p = Vector3::zeros();
        for a in 0..self.dim.n() {
            p[a] = self.origin[a] + (c[a] as f64 + 0.5) * self.voxel_size;
        }
        p
    }

    pub fn value_at_voxel(&self, c: [usize; 3]) -> f64 {
        self.distance[self.index(c)]
    }

    /// Multilinear interpolation between voxel centers with its exact gradient.
    ///
    /// Points beyond the outermost voxel centers take the value at the clamped
    /// point plus their distance to it, with the gradient pointing outward.
    pub fn query(&self, x: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let d = self.dim.n();
        let h = self.voxel_size;
        let mut base = [0usize; 3];
        let mut t = [0.0f64; 3];
        let mut excess = Vector3::zeros();
        let mut live = [false; 3];
        for a in 0..d {
            let u = (x[a] - self.origin[a]) / h - 0.5;
            let max_u = (self.shape[a] - 1) as f64;
            let uc = u.clamp(0.0, max_u);
            excess[a] = (u - uc) * h;
            if self.shape[a] == 1 {
                continue;
            }
            let b = (uc.floor() as usize).min(self.shape[a] - 2);
            base[a] = b;
            t[a] = uc - b as f64;
            live[a] = excess[a] == 0.0;
        }
        let mut value = 0.0;
        let mut dvalue = [0.0f64; 3];
        for corner in 0..(1usize << d) {
            let mut c = base;
            let mut w = 1.0;
            for a in 0..d {
                let hi = corner >> a & 1 == 1;
                if hi && self.shape[a] > 1 {
                    c[a] += 1;
                }
                w *= if hi { t[a] } else { 1.0 - t[a] };
            }
            let v = self.distance[self.index(c)];
            value += w * v;
            for a in 0..d {
                let mut wa = 1.0;
                for b in 0..d {
                    if b == a {
                        continue;
                    }
                    wa *= if corner >> b & 1 == 1 { t[b] } else { 1.0 - t[b] };
                }
                let sign = if corner >> a & 1 == 1 { 1.0 } else { -1.0 };
                dvalue[a] += sign * wa * v;
            }
        }
        let mut grad = Vector3::zeros();
        for a in 0..d {
            if live[a] {
                grad[a] = dvalue[a] / h;
            }
        }
        let out = excess.norm();
        if out > 0.0 {
            value += out;
            for a in 0..d {
                if excess[a] != 0.0 {
                    grad[a] = excess[a] / out;
                }
            }
        }
        (value, grad)
    }

    pub fn distance_at(&self, x: &Vector3<f64>) -> f64 {
        self.query(x).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kin::Dim;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(V²) nearest-voxel scan.
    fn brute_force(grid: &VoxelGrid) -> Vec<f64> {
        let sentinel = grid.diagonal();
        (0..grid.len())
            .map(|i| {
                let ci = grid.center(i);
                let target = !grid.occupancy[i];
                let best = (0..grid.len())
                    .filter(|&j| grid.occupancy[j] == target)
                    .map(|j| (grid.center(j) - ci).norm())
                    .fold(f64::INFINITY, f64::min);
                if best.is_infinite() {
                    if grid.occupancy[i] { -sentinel } else { sentinel }
                } else if grid.occupancy[i] {
                    -best
                } else {
                    best
                }
            })
            .collect()
    }

    fn random_grid(seed: u64, shape: [usize; 3], dim: Dim, p: f64) -> VoxelGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = VoxelGrid::empty(dim, shape, 0.1, Vector3::new(-0.8, -0.8, -0.8)).unwrap();
        for o in g.occupancy.iter_mut() {
            *o = rng.random::<f64>() < p;
        }
        g
    }

    #[test]
    fn matches_brute_force_on_small_grids() {
        for seed in 0..20 {
            let g = random_grid(seed, [16, 16, 1], Dim::Planar, 0.05 + 0.02 * seed as f64);
            let f = build_distance_field(&g);
            let oracle = brute_force(&g);
            for i in 0..g.len() {
                assert!((f.distance[i] - oracle[i]).abs() <= g.voxel_size, "voxel {i}");
                assert_eq!(f.distance[i] < 0.0, g.occupancy[i]);
            }
        }
        let g = random_grid(99, [7, 9, 5], Dim::Spatial, 0.1);
        let f = build_distance_field(&g);
        let oracle = brute_force(&g);
        for i in 0..g.len() {
            assert!((f.distance[i] - oracle[i]).abs() <= g.voxel_size);
        }
    }

    #[test]
    fn single_obstacle_on_axis() {
        let mut g = VoxelGrid::empty(Dim::Planar, [33, 33, 1], 0.05, Vector3::zeros()).unwrap();
        let c = g.index(16, 16, 0);
        g.occupancy[c] = true;
        let f = build_distance_field(&g);
        let q = g.center(g.index(21, 16, 0));
        let d = f.distance_at(&q);
        assert!((d - 5.0 * 0.05).abs() <= 0.05, "{d}");
        assert!(f.distance_at(&g.center(c)) < 0.0);
    }

    #[test]
    fn free_world_holds_sentinel() {
        let g = VoxelGrid::empty(Dim::Planar, [8, 8, 1], 0.1, Vector3::zeros()).unwrap();
        let f = build_distance_field(&g);
        assert!(f.distance.iter().all(|&d| d == g.diagonal()));
    }

    #[test]
    fn interpolation_at_centers_and_midpoints() {
        let g = random_grid(3, [10, 10, 1], Dim::Planar, 0.2);
        let f = build_distance_field(&g);
        for idx in [0, 15, 55, 99] {
            let c = g.center(idx);
            assert!((f.distance_at(&c) - f.distance[idx]).abs() < 1e-12);
        }
        let mut f2 = f.clone();
        f2.distance[f.index([3, 4, 0])] = 0.2;
        f2.distance[f.index([4, 4, 0])] = 0.4;
        let mid = 0.5 * (f2.voxel_center([3, 4, 0]) + f2.voxel_center([4, 4, 0]));
        assert!((f2.distance_at(&mid) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (dim, shape) in [(Dim::Planar, [16, 16, 1]), (Dim::Spatial, [10, 10, 10])] {
            let g = random_grid(rng.random(), shape, dim, 0.1);
            let f = build_distance_field(&g);
            let b = g.bounds();
            for _ in 0..200 {
                let mut x = Vector3::zeros();
                // Includes a margin outside the grid.
                for a in 0..dim.n() {
                    x[a] = rng.random_range(b.lower[a] - 0.2..b.upper[a] + 0.2);
                }
                let (_, grad) = f.query(&x);
                let step = 1e-6;
                for a in 0..dim.n() {
                    let mut xp = x;
                    xp[a] += step;
                    let mut xm = x;
                    xm[a] -= step;
                    let fd = (f.distance_at(&xp) - f.distance_at(&xm)) / (2.0 * step);
                    let tol = 1e-4 * fd.abs().max(grad[a].abs()).max(1e-3);
                    assert!((fd - grad[a]).abs() <= tol, "axis {a}: {fd} vs {}", grad[a]);
                }
            }
        }
    }

    #[test]
    fn stored_gradient_bounded_and_field_lipschitz() {
        let g = random_grid(5, [16, 16, 1], Dim::Planar, 0.15);
        let f = build_distance_field(&g);
        assert!(f.gradient.iter().all(|v| v.norm() <= 1.1));
        for a in 0..g.len() {
            for b in (0..g.len()).step_by(7) {
                let dist = (g.center(a) - g.center(b)).norm();
                assert!((f.distance[a] - f.distance[b]).abs() <= dist + 2.0 * g.voxel_size);
            }
        }
    }

    #[test]
    fn outside_queries_grow_outward() {
        let g = random_grid(6, [12, 12, 1], Dim::Planar, 0.2);
        let f = build_distance_field(&g);
        let b = g.bounds();
        let x = Vector3::new(b.upper.x + 0.5, 0.5 * (b.lower.y + b.upper.y), 0.0);
        let (d, grad) = f.query(&x);
        assert!(grad.x > 0.99);
        let xc = Vector3::new(b.upper.x - 0.5 * g.voxel_size, x.y, 0.0);
        assert!((d - f.distance_at(&xc) - (0.5 + 0.5 * g.voxel_size)).abs() < 1e-9);
    }
}
