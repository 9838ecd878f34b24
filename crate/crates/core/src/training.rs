//! Shared training-loop settings and helpers.

use l3scan_nn::{AdamConfig, Model};
use rand::seq::SliceRandom;

use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Master seed; weight init, shuffling and augmentation use separate
    /// sub-streams of it.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 4,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Loss of every optimizer step, in order.
    pub step_loss: Vec<f64>,
}

/// Sample order for `epoch`, reproducible from the master seed.
pub(crate) fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split, epoch as u64));
    idx
}

/// Smallest multiple of `m` that is `>= n`.
pub(crate) fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

/// `(before, after)` split of `total` padding, the extra unit going after.
pub(crate) fn split_pad(total: usize) -> (usize, usize) {
    (total / 2, total - total / 2)
}
