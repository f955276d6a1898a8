use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::net::{Gradients, NetworkParams};

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients, lr: f64) -> Result<()> {
        let g = grads.flat();
        let mut p = params.flat();
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..p.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            p[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
        params.set_flat(&p)
    }
}

/// Piecewise-constant schedule: multiply by `decay` at each milestone fraction.
pub fn scheduled_lr(base: f64, decay: f64, milestones: &[f64], step: usize, total: usize) -> f64 {
    let frac = step as f64 / total.max(1) as f64;
    let passed = milestones.iter().filter(|&&m| frac >= m).count();
    base * decay.powi(passed as i32)
}
