//! Companion to `blockres-core`: netpbm files, the on-disk synthetic dataset,
//! JSON configuration, checkpoints, the training and evaluation drivers,
//! benchmarks, verification reports and the `blockres` command line.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod netpbm;
pub mod train;
pub mod verify;

pub use config::Config;
pub use error::{Error, Result};
