//! Mixed-resolution block representation and the three block operations.
//!
//! * [`block_sample`] splits a dense image into the grid and average-pools the
//!   low-resolution blocks.
//! * [`block_pad`] gives every block a 1-pixel border read from its
//!   neighbours so a 3×3 convolution can run per block.
//! * [`block_combine`] upsamples low blocks and reassembles a dense tensor.
//!
//! Every forward operation has an exact adjoint (`*_backward`).

mod combine;
mod pad;
mod sample;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use combine::{block_combine, block_combine_backward};
pub use pad::{block_pad, block_pad_backward, for_each_pad_source};
pub use sample::{block_sample, block_sample_backward};

/// How a block's border is filled from high-resolution neighbours when the
/// block itself is low resolution, or whether neighbours are used at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PadMode {
    /// Mean of the two high-resolution pixels spanned along the border.
    #[default]
    AverageSample,
    /// The lower-index pixel of each spanned pair.
    StridedSample,
    /// Zero padding around every block; no cross-block propagation.
    ZeroPad,
}

impl PadMode {
    pub const ALL: [PadMode; 3] = [PadMode::AverageSample, PadMode::StridedSample, PadMode::ZeroPad];

    pub fn name(self) -> &'static str {
        match self {
            PadMode::AverageSample => "average",
            PadMode::StridedSample => "strided",
            PadMode::ZeroPad => "zero",
        }
    }

    pub fn from_name(s: &str) -> Option<PadMode> {
        PadMode::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Grid geometry plus per-block probabilities and resolution decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    gy: usize,
    gx: usize,
    block_size: usize,
    probs: Vec<f64>,
    actions: Vec<bool>,
    // index of each cell within its resolution's store
    slots: Vec<usize>,
    n_high: usize,
}

impl BlockGrid {
    /// Grid with hard decisions; probabilities mirror the actions.
    pub fn new(gy: usize, gx: usize, block_size: usize, actions: Vec<bool>) -> Result<Self> {
        let probs = actions.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
        Self::with_probs(gy, gx, block_size, probs, actions)
    }

    pub fn with_probs(gy: usize, gx: usize, block_size: usize, probs: Vec<f64>, actions: Vec<bool>) -> Result<Self> {
        if gy == 0 || gx == 0 {
            return Err(Error::Grid(format!("empty grid {gy}x{gx}")));
        }
        if block_size == 0 || !block_size.is_multiple_of(2) {
            return Err(Error::Grid(format!(
                "block size {block_size} must be a positive even integer"
            )));
        }
        let b = gy * gx;
        if actions.len() != b || probs.len() != b {
            return Err(Error::Grid(format!(
                "{} actions / {} probabilities for {b} blocks",
                actions.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Grid(format!("probability {p} outside [0, 1]")));
        }
        let mut slots = Vec::with_capacity(b);
        let (mut nh, mut nl) = (0, 0);
        for &a in &actions {
            if a {
                slots.push(nh);
                nh += 1;
            } else {
                slots.push(nl);
                nl += 1;
            }
        }
        Ok(BlockGrid {
            gy,
            gx,
            block_size,
            probs,
            actions,
            slots,
            n_high: nh,
        })
    }

    pub fn uniform(gy: usize, gx: usize, block_size: usize, high: bool) -> Result<Self> {
        Self::new(gy, gx, block_size, vec![high; gy * gx])
    }

    /// Grid covering an `h`×`w` image with blocks of `block_size`.
    pub fn for_image(h: usize, w: usize, block_size: usize, actions: Vec<bool>) -> Result<Self> {
        if block_size == 0 || !h.is_multiple_of(block_size) || !w.is_multiple_of(block_size) {
            return Err(Error::Grid(format!(
                "{h}x{w} image is not divisible into {block_size}px blocks"
            )));
        }
        Self::new(h / block_size, w / block_size, block_size, actions)
    }

    pub fn rows(&self) -> usize {
        self.gy
    }

    pub fn cols(&self) -> usize {
        self.gx
    }

    pub fn blocks(&self) -> usize {
        self.gy * self.gx
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.gy * self.block_size, self.gx * self.block_size)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn actions(&self) -> &[bool] {
        &self.actions
    }

    #[inline]
    pub fn is_high(&self, b: usize) -> bool {
        self.actions[b]
    }

    pub fn high_count(&self) -> usize {
        self.n_high
    }

    pub fn low_count(&self) -> usize {
        self.blocks() - self.n_high
    }

    /// Realized fraction of high-resolution blocks.
    pub fn high_fraction(&self) -> f64 {
        self.n_high as f64 / self.blocks() as f64
    }

    #[inline]
    pub fn cell(&self, b: usize) -> (usize, usize) {
        (b / self.gx, b % self.gx)
    }

    /// Block index of cell `(by, bx)`, or `None` outside the grid.
    #[inline]
    pub fn neighbor(&self, by: isize, bx: isize) -> Option<usize> {
        if by < 0 || bx < 0 || by >= self.gy as isize || bx >= self.gx as isize {
            None
        } else {
            Some(by as usize * self.gx + bx as usize)
        }
    }

    #[inline]
    pub(crate) fn slot(&self, b: usize) -> usize {
        self.slots[b]
    }
}

/// Packed per-block feature storage with mixed resolutions, for one image.
///
/// High blocks hold `C × e × e` values with `e = size + 2·pad`, low blocks
/// `C × e' × e'` with `e' = size/2 + 2·pad`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTensor<T> {
    grid: Arc<BlockGrid>,
    channels: usize,
    size: usize,
    pad: usize,
    high: Vec<T>,
    low: Vec<T>,
}

impl<T: Scalar> BlockTensor<T> {
    pub fn zeros(grid: Arc<BlockGrid>, channels: usize, size: usize, pad: usize) -> Result<Self> {
        if channels == 0 || size == 0 {
            return Err(Error::Shape(format!(
                "block tensor with {channels} channels and size {size}"
            )));
        }
        if grid.low_count() > 0 && !size.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "odd block size {size} with low-resolution blocks"
            )));
        }
        let he = size + 2 * pad;
        let le = size / 2 + 2 * pad;
        let high = vec![T::zero(); grid.high_count() * channels * he * he];
        let low = vec![T::zero(); grid.low_count() * channels * le * le];
        Ok(BlockTensor {
            grid,
            channels,
            size,
            pad,
            high,
            low,
        })
    }

    /// Same grid, new channel count / size / padding.
    pub fn zeros_with(&self, channels: usize, size: usize, pad: usize) -> Result<Self> {
        Self::zeros(self.grid.clone(), channels, size, pad)
    }

    pub fn zeros_like(&self) -> Self {
        BlockTensor {
            grid: self.grid.clone(),
            channels: self.channels,
            size: self.size,
            pad: self.pad,
            high: vec![T::zero(); self.high.len()],
            low: vec![T::zero(); self.low.len()],
        }
    }

    pub fn grid(&self) -> &Arc<BlockGrid> {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Current (unpadded) high-resolution block size.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Stored spatial extent of block `b`, padding included.
    #[inline]
    pub fn extent(&self, b: usize) -> usize {
        self.extent_of(self.grid.is_high(b))
    }

    #[inline]
    pub fn extent_of(&self, high: bool) -> usize {
        if high {
            self.size + 2 * self.pad
        } else {
            self.size / 2 + 2 * self.pad
        }
    }

    /// All channels of block `b`, `C × e × e` row-major.
    #[inline]
    pub fn block(&self, b: usize) -> &[T] {
        let hi = self.grid.is_high(b);
        let len = self.channels * self.extent_of(hi).pow(2);
        let s = self.grid.slot(b) * len;
        if hi {
            &self.high[s..s + len]
        } else {
            &self.low[s..s + len]
        }
    }

    #[inline]
    pub fn block_mut(&mut self, b: usize) -> &mut [T] {
        let hi = self.grid.is_high(b);
        let len = self.channels * self.extent_of(hi).pow(2);
        let s = self.grid.slot(b) * len;
        if hi {
            &mut self.high[s..s + len]
        } else {
            &mut self.low[s..s + len]
        }
    }

    pub fn high_store(&self) -> &[T] {
        &self.high
    }

    pub fn low_store(&self) -> &[T] {
        &self.low
    }

    /// Both stores, high first. Elementwise operations act on these.
    pub fn stores(&self) -> [&[T]; 2] {
        [&self.high, &self.low]
    }

    pub fn stores_mut(&mut self) -> [&mut [T]; 2] {
        [&mut self.high, &mut self.low]
    }

    pub fn len(&self) -> usize {
        self.high.len() + self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.grid, &other.grid) || self.grid.actions == other.grid.actions)
            && self.grid.gy == other.grid.gy
            && self.channels == other.channels
            && self.size == other.size
            && self.pad == other.pad
    }

    pub(crate) fn check_layout(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: block layouts differ (C {} vs {}, size {} vs {}, pad {} vs {})",
                self.channels, other.channels, self.size, other.size, self.pad, other.pad
            )))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        BlockTensor {
            grid: self.grid.clone(),
            channels: self.channels,
            size: self.size,
            pad: self.pad,
            high: self.high.iter().map(|&v| f(v)).collect(),
            low: self.low.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other, "dot")?;
        Ok(crate::scalar::dot(&self.high, &other.high) + crate::scalar::dot(&self.low, &other.low))
    }

    /// Fills every stored value from `f` in store order (high store first).
    pub fn fill_with(&mut self, mut f: impl FnMut() -> T) {
        for v in self.high.iter_mut().chain(self.low.iter_mut()) {
            *v = f();
        }
    }

    /// Block size after a stride-2 layer. Storage is not touched.
    ///
    /// Fails when a low-resolution block cannot be halved evenly, which means
    /// the base block size is too small for the network's total stride.
    pub fn halve_block_size(&self) -> Result<usize> {
        halved_size(self.size, self.grid.low_count() > 0)
    }
}

/// Size after a stride-2 stage, enforcing the minimum-block-size floor.
pub fn halved_size(size: usize, has_low: bool) -> Result<usize> {
    if has_low {
        let low = size / 2;
        if !size.is_multiple_of(2) || !low.is_multiple_of(2) || low < 2 {
            return Err(Error::BlockFloor { size });
        }
    } else if !size.is_multiple_of(2) || size < 2 {
        return Err(Error::BlockFloor { size });
    }
    Ok(size / 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_slots_follow_actions() {
        let g = BlockGrid::new(2, 2, 4, vec![true, false, false, true]).unwrap();
        assert_eq!(g.high_count(), 2);
        assert_eq!(g.slot(0), 0);
        assert_eq!(g.slot(1), 0);
        assert_eq!(g.slot(2), 1);
        assert_eq!(g.slot(3), 1);
        assert_eq!(g.high_fraction(), 0.5);
        assert_eq!(g.image_size(), (8, 8));
    }

    #[test]
    fn grid_validation() {
        assert!(BlockGrid::new(2, 2, 3, vec![true; 4]).is_err());
        assert!(BlockGrid::new(2, 2, 4, vec![true; 3]).is_err());
        assert!(BlockGrid::with_probs(1, 1, 4, vec![1.5], vec![true]).is_err());
        assert!(BlockGrid::for_image(10, 8, 4, vec![true; 4]).is_err());
    }

    #[test]
    fn tensor_store_sizes() {
        let g = Arc::new(BlockGrid::new(1, 3, 8, vec![true, false, true]).unwrap());
        let t = BlockTensor::<f32>::zeros(g.clone(), 2, 8, 1).unwrap();
        assert_eq!(t.high_store().len(), 2 * 2 * 100);
        assert_eq!(t.low_store().len(), 2 * 36);
        assert_eq!(t.extent(1), 6);
        assert_eq!(t.block(2).len(), 200);
    }

    #[test]
    fn halving() {
        assert_eq!(halved_size(8, true).unwrap(), 4);
        assert!(matches!(halved_size(2, true), Err(Error::BlockFloor { size: 2 })));
        let mut s = 128;
        for _ in 0..5 {
            s = halved_size(s, true).unwrap();
        }
        assert_eq!(s, 4);
        assert_eq!(halved_size(2, false).unwrap(), 1);
    }
}
