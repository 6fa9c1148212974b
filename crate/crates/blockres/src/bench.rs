//! Dense versus block execution of a single residual block.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use blockres_core::nn::{count_macs_block, count_macs_dense, Network};
use blockres_core::{BlockGrid, DenseTensor, PadMode, Rng};
use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::error::{io_err, Result};

/// One row of `bench.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub block_size: usize,
    pub high_fraction: f64,
    pub blocks: usize,
    pub high_blocks: usize,
    pub dense_macs: u64,
    pub block_macs: u64,
    /// `block_macs / dense_macs`.
    pub mac_ratio: f64,
    pub dense_median_s: f64,
    pub block_median_s: f64,
    /// `dense_median_s / block_median_s`.
    pub speedup: f64,
}

pub const BENCH_COLUMNS: [&str; 10] = [
    "block_size",
    "high_fraction",
    "blocks",
    "high_blocks",
    "dense_macs",
    "block_macs",
    "mac_ratio",
    "dense_median_s",
    "block_median_s",
    "speedup",
];

pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty(), "median of nothing");
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn timed(f: &mut impl FnMut()) -> f64 {
    let start = Instant::now();
    f();
    start.elapsed().as_secs_f64()
}

/// Median wall time of `f` over `reps` runs after `warmup` untimed ones.
pub fn time_median(warmup: usize, reps: usize, mut f: impl FnMut()) -> f64 {
    for _ in 0..warmup {
        f();
    }
    let mut t: Vec<f64> = (0..reps).map(|_| timed(&mut f)).collect();
    median(&mut t)
}

/// Median wall times of `f` and `g`, alternating runs so that slow drift in
/// machine load hits both alike.
pub fn time_pair(warmup: usize, reps: usize, mut f: impl FnMut(), mut g: impl FnMut()) -> (f64, f64) {
    for _ in 0..warmup {
        f();
        g();
    }
    let (mut tf, mut tg) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for _ in 0..reps {
        tf.push(timed(&mut f));
        tg.push(timed(&mut g));
    }
    (median(&mut tf), median(&mut tg))
}

/// Grid with `round(p · blocks)` high blocks at random positions.
pub fn fraction_grid(size: usize, block: usize, p: f64, rng: &mut Rng) -> Result<BlockGrid> {
    let g = size / block;
    let n = g * g;
    let high = (p * n as f64).round() as usize;
    let mut actions: Vec<bool> = (0..n).map(|i| i < high).collect();
    rng.shuffle(&mut actions);
    Ok(BlockGrid::new(g, g, block, actions)?)
}

/// Runs the sweep. `on_row` sees each row as soon as it is measured.
pub fn run_bench(cfg: &BenchConfig, seed: u64, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    let mut rng = Rng::new(seed);
    let net = Network::<f32>::residual_block(cfg.channels, &mut rng)?;
    let x = DenseTensor::<f32>::rand_uniform((1, cfg.channels, cfg.size, cfg.size), &mut rng, -1.0, 1.0)?;
    let dense_macs = count_macs_dense(&net, cfg.size, cfg.size).total;
    let mut rows = Vec::new();
    for &block in &cfg.block_sizes {
        for &p in &cfg.high_fractions {
            let grid = Arc::new(fraction_grid(cfg.size, block, p, &mut rng)?);
            let block_macs = count_macs_block(&net, &grid)?.total;
            let (dense, blocked) = time_pair(
                cfg.warmup,
                cfg.reps,
                || {
                    std::hint::black_box(net.run_dense(&x).expect("dense run"));
                },
                || {
                    std::hint::black_box(
                        net.run_block(&x, grid.clone(), PadMode::AverageSample)
                            .expect("block run"),
                    );
                },
            );
            let row = BenchRow {
                block_size: block,
                high_fraction: p,
                blocks: grid.blocks(),
                high_blocks: grid.high_count(),
                dense_macs,
                block_macs,
                mac_ratio: block_macs as f64 / dense_macs as f64,
                dense_median_s: dense,
                block_median_s: blocked,
                speedup: dense / blocked,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_bench(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_bench(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<BenchRow>, _>>()?)
}
