use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded lattice gradient noise (improved Perlin construction).
///
/// Values lie roughly in `[-1, 1]` and vanish on integer lattice points.
#[derive(Clone, Debug)]
pub struct GradientNoise {
    perm: [u8; 512],
}

const GRAD3: [[f64; 3]; 16] = [
    [1.0, 1.0, 0.0],
    [-1.0, 1.0, 0.0],
    [1.0, -1.0, 0.0],
    [-1.0, -1.0, 0.0],
    [1.0, 0.0, 1.0],
    [-1.0, 0.0, 1.0],
    [1.0, 0.0, -1.0],
    [-1.0, 0.0, -1.0],
    [0.0, 1.0, 1.0],
    [0.0, -1.0, 1.0],
    [0.0, 1.0, -1.0],
    [0.0, -1.0, -1.0],
    [1.0, 1.0, 0.0],
    [-1.0, 1.0, 0.0],
    [0.0, -1.0, 1.0],
    [0.0, -1.0, -1.0],
];

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(t: f64, a: f64, b: f64) -> f64 {
    a + t * (b - a)
}

impl GradientNoise {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p: Vec<u8> = (0..=255u8).collect();
        p.shuffle(&mut rng);
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = p[i & 255];
        }
        GradientNoise { perm }
    }

    fn hash(&self, x: usize, y: usize, z: usize) -> usize {
        let p = &self.perm;
        p[p[p[x & 255] as usize + (y & 255)] as usize + (z & 255)] as usize
    }

    fn grad(&self, h: usize, x: f64, y: f64, z: f64) -> f64 {
        let g = GRAD3[h & 15];
        g[0] * x + g[1] * y + g[2] * z
    }

    pub fn sample(&self, x: f64, y: f64, z: f64) -> f64 {
        let (fx, fy, fz) = (x.floor(), y.floor(), z.floor());
        let (xi, yi, zi) = (
            fx.rem_euclid(256.0) as usize,
            fy.rem_euclid(256.0) as usize,
            fz.rem_euclid(256.0) as usize,
        );
        let (x, y, z) = (x - fx, y - fy, z - fz);
        let (u, v, w) = (fade(x), fade(y), fade(z));
        let c = |dx: usize, dy: usize, dz: usize| {
            self.grad(
                self.hash(xi + dx, yi + dy, zi + dz),
                x - dx as f64,
                y - dy as f64,
                z - dz as f64,
            )
        };
        lerp(
            w,
            lerp(v, lerp(u, c(0, 0, 0), c(1, 0, 0)), lerp(u, c(0, 1, 0), c(1, 1, 0))),
            lerp(v, lerp(u, c(0, 0, 1), c(1, 0, 1)), lerp(u, c(0, 1, 1), c(1, 1, 1))),
        )
    }
}
