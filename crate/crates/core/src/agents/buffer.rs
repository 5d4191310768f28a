use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::Action;

/// One environment step as stored for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    /// Reward used for learning. Already includes any collection-time shaping.
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// `next_obs` is absorbing: no bootstrapping past it.
    pub terminal: bool,
    /// Episode was cut by the step limit at `next_obs` (not absorbing).
    pub truncated: bool,
    /// Action the behavior policy executed at `next_obs`, if the episode went on.
    pub next_action: Option<Action>,
}

/// Bounded FIFO ring of transitions with its own seeded sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    /// Slot the next push overwrites once full.
    head: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            head: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `n` uniform draws with replacement.
    pub fn sample(&mut self, n: usize) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        let len = self.items.len();
        let idx: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..len)).collect();
        idx.into_iter().map(|i| &self.items[i]).collect()
    }
}
