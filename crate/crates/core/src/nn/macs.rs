//! Multiply-accumulate accounting.
//!
//! A `k×k` convolution producing `Cout × Ho × Wo` costs `k²·Cin·Cout·Ho·Wo`
//! MACs. Padding produces no outputs and costs nothing, so per-region block
//! and dense counts coincide; a low-resolution block costs a quarter.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::out_extent;
use super::network::{Layer, Network};
use crate::block::{halved_size, BlockGrid};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MacCount {
    pub per_layer: Vec<u64>,
    pub total: u64,
}

impl MacCount {
    pub fn with_layers(n: usize) -> Self {
        MacCount {
            per_layer: vec![0; n],
            total: 0,
        }
    }

    pub fn gmacs(&self) -> f64 {
        self.total as f64 / 1e9
    }

    fn finish(mut self) -> Self {
        self.total = self.per_layer.iter().sum();
        self
    }
}

/// MACs of dense execution on one `h × w` image.
pub fn count_macs_dense<T: Scalar>(net: &Network<T>, h: usize, w: usize) -> MacCount {
    let mut count = MacCount::with_layers(net.layers().len());
    let (mut h, mut w) = (h, w);
    for (i, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Conv(c) => {
                let p = 2 * c.padding();
                h = out_extent(h + p, c.k, c.stride);
                w = out_extent(w + p, c.k, c.stride);
                count.per_layer[i] = c.macs(h, w);
            }
            Layer::MaxPool2 => {
                h /= 2;
                w /= 2;
            }
            Layer::Upsample2 => {
                h *= 2;
                w *= 2;
            }
            Layer::Relu | Layer::ResidualAdd { .. } => {}
        }
    }
    count.finish()
}

/// MACs of block execution on `grid`: every block at its own resolution.
pub fn count_macs_block<T: Scalar>(net: &Network<T>, grid: &BlockGrid) -> Result<MacCount> {
    let mut count = MacCount::with_layers(net.layers().len());
    let has_low = grid.low_count() > 0;
    let (nh, nl) = (grid.high_count() as u64, grid.low_count() as u64);
    let mut size = grid.block_size();
    for (i, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Conv(c) => {
                let p = 2 * c.padding();
                let next = if c.stride == 2 {
                    halved_size(size, has_low)?
                } else {
                    size
                };
                let hi = out_extent(size + p, c.k, c.stride);
                let lo = out_extent(size / 2 + p, c.k, c.stride);
                debug_assert_eq!(hi, next);
                count.per_layer[i] = nh * c.macs(hi, hi) + if has_low { nl * c.macs(lo, lo) } else { 0 };
                size = next;
            }
            Layer::MaxPool2 => size = halved_size(size, has_low)?,
            Layer::Upsample2 => size *= 2,
            Layer::Relu | Layer::ResidualAdd { .. } => {}
        }
    }
    Ok(count.finish())
}
