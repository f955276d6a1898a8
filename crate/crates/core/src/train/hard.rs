use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kin::Pose;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardEntry {
    pub world: usize,
    pub target: Pose,
    /// Cost when inserted.
    pub cost: f64,
}

/// Bounded store of samples whose cost far exceeded the recent average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardSet {
    pub capacity: usize,
    pub hard_factor: f64,
    pub window: usize,
    recent: VecDeque<f64>,
    entries: Vec<HardEntry>,
}

impl HardSet {
    pub fn new(capacity: usize, hard_factor: f64, window: usize) -> Self {
        HardSet {
            capacity,
            hard_factor,
            window,
            recent: VecDeque::with_capacity(window),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HardEntry] {
        &self.entries
    }

    /// Mean over the last `window` observed costs; `None` until the window is full.
    pub fn rolling_mean(&self) -> Option<f64> {
        (self.recent.len() >= self.window && self.window > 0)
            .then(|| self.recent.iter().sum::<f64>() / self.recent.len() as f64)
    }

    /// Record a fresh sample's cost; insert it if it exceeds `hard_factor`
    /// times the rolling mean. Returns whether it was inserted.
    pub fn observe(&mut self, world: usize, target: &Pose, cost: f64) -> bool {
        let inserted = match self.rolling_mean() {
            Some(mean) if cost > self.hard_factor * mean && self.capacity > 0 => {
                self.insert(HardEntry {
                    world,
                    target: target.clone(),
                    cost,
                });
                true
            }
            _ => false,
        };
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        if self.window > 0 {
            self.recent.push_back(cost);
        }
        inserted
    }

    fn insert(&mut self, e: HardEntry) {
        self.entries.push(e);
        if self.entries.len() > self.capacity {
            let lowest = self
                .entries
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
                .map(|(i, _)| i)
                .expect("nonempty");
            self.entries.swap_remove(lowest);
        }
    }

    /// `n` entries drawn uniformly with replacement.
    pub fn draw(&self, rng: &mut impl Rng, n: usize) -> Vec<HardEntry> {
        if self.entries.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| self.entries[rng.random_range(0..self.entries.len())].clone())
            .collect()
    }
}
