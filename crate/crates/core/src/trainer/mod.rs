//! Siamese training: pair construction, contrastive loss, Adam, and the
//! epoch loop.

mod adam;
mod checkpoint;
mod loss;
mod pairs;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use loss::contrastive_loss;
pub use pairs::{build_pairs, Pair, PairSet};
pub use train::{batch_gradient, train_pairs, train_siamese, BatchResult, EpochStats, TrainConfig, TrainHistory};

#[cfg(test)]
mod tests;
