//! Trainable layers with explicit forward and backward passes on dense and
//! block representations, the segmentation loss, Adam, and MAC accounting.

mod adam;
mod conv;
mod features;
pub(crate) mod kernels;
mod loss;
mod macs;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{Conv2d, ConvGrads};
pub use features::Features;
pub use loss::{predict, softmax_cross_entropy, CrossEntropy};
pub use macs::{count_macs_block, count_macs_dense, MacCount};
pub use network::{BlockRun, Layer, NetGrads, Network, Trace};

#[cfg(test)]
mod tests;
