use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::evaluator::TrainingSample;

pub const DEFAULT_CAPACITY: usize = 50_000;

/// Bounded first-in-first-out sample store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    samples: VecDeque<TrainingSample>,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends, evicting the oldest samples once full.
    pub fn push(&mut self, sample: TrainingSample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = TrainingSample>) {
        for s in samples {
            self.push(s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingSample> {
        self.samples.iter()
    }

    /// `size` distinct samples drawn uniformly (all of them if fewer are stored).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, size: usize) -> Vec<TrainingSample> {
        let n = self.samples.len();
        rand::seq::index::sample(rng, n, size.min(n))
            .into_iter()
            .map(|i| self.samples[i].clone())
            .collect()
    }

    /// One shuffled pass over the buffer cut into batches of at most `batch`.
    pub fn epoch<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Vec<Vec<TrainingSample>> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(rng);
        order
            .chunks(batch.max(1))
            .map(|c| c.iter().map(|&i| self.samples[i].clone()).collect())
            .collect()
    }
}
