//! Block-based dynamic-resolution execution of convolutional networks.
//!
//! An image is split into a grid of square blocks. Each block is processed
//! either at full resolution or average-pooled by 2 (a quarter of the
//! compute). Convolutions run per block; [`block::block_pad`] fills each
//! block's 1-pixel border from its neighbours, adapting resolution where
//! neighbours differ, so features still propagate across block borders.
//! A small policy network picks the high-resolution blocks and is trained
//! with a per-block REINFORCE estimator.
//!
//! The crate is `no_std` (with `alloc`). File formats, configuration, timing
//! and the command line live in the `blockres` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod block;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod tensor;

pub use block::{BlockGrid, BlockTensor, PadMode};
pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{DenseTensor, Dims};
