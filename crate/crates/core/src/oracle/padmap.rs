//! Padding source map recomputed in global image coordinates.
//!
//! Coordinates are on the current level's high-resolution lattice: block
//! `(by, bx)` covers rows `[by·s, by·s + s)`. A low-resolution pixel covers a
//! 2×2 cell of that lattice. Each padding position of a block is mapped to the
//! lattice cells it stands for, those cells are located in the neighbouring
//! block, and translated to that block's own pixels.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::block::{BlockGrid, PadMode};

/// Sources of one padding position: `(block, row, col, weight)` in the
/// source block's unpadded pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PadEntry {
    pub block: usize,
    /// Position in the padded block, `[0, e + 2)`.
    pub py: usize,
    pub px: usize,
    pub sources: Vec<(usize, usize, usize, f64)>,
}

/// Source map for every padding position of every block at block size `size`.
pub fn pad_source_map(grid: &BlockGrid, size: usize, mode: PadMode) -> Vec<PadEntry> {
    let s = size as isize;
    let (rows, cols) = ((grid.rows() * size) as isize, (grid.cols() * size) as isize);
    let mut out = Vec::new();
    for b in 0..grid.blocks() {
        let high = grid.is_high(b);
        let e = if high { size } else { size / 2 } as isize;
        let (by, bx) = grid.cell(b);
        let (y0, x0) = (by as isize * s, bx as isize * s);
        for py in 0..e + 2 {
            for px in 0..e + 2 {
                let (ly, lx) = (py - 1, px - 1);
                let row_out = ly < 0 || ly >= e;
                let col_out = lx < 0 || lx >= e;
                if !row_out && !col_out {
                    continue;
                }
                let mut entry = PadEntry {
                    block: b,
                    py: py as usize,
                    px: px as usize,
                    sources: Vec::new(),
                };
                if mode != PadMode::ZeroPad {
                    entry.sources = sources_for(
                        grid,
                        size,
                        high,
                        (y0, x0),
                        (ly, lx),
                        row_out && col_out,
                        mode,
                        rows,
                        cols,
                    );
                }
                out.push(entry);
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn sources_for(
    grid: &BlockGrid,
    size: usize,
    high: bool,
    (y0, x0): (isize, isize),
    (ly, lx): (isize, isize),
    corner: bool,
    mode: PadMode,
    rows: isize,
    cols: isize,
) -> Vec<(usize, usize, usize, f64)> {
    let s = size as isize;
    // lattice cells represented by this padding pixel
    let mut cells: Vec<(isize, isize)> = if high {
        alloc::vec![(y0 + ly, x0 + lx)]
    } else {
        let mut v = Vec::new();
        for dy in 0..2 {
            for dx in 0..2 {
                v.push((y0 + 2 * ly + dy, x0 + 2 * lx + dx));
            }
        }
        v
    };
    if cells.iter().any(|&(y, x)| y < 0 || x < 0 || y >= rows || x >= cols) {
        return Vec::new();
    }
    if !corner {
        // only the lattice line touching the block
        cells.retain(|&(y, x)| y == y0 - 1 || y == y0 + s || x == x0 - 1 || x == x0 + s);
    }
    let (ny, nx) = (cells[0].0.div_euclid(s), cells[0].1.div_euclid(s));
    let nb = ny as usize * grid.cols() + nx as usize;
    debug_assert!(cells
        .iter()
        .all(|&(y, x)| y.div_euclid(s) == ny && x.div_euclid(s) == nx));
    let (oy, ox) = (ny * s, nx * s);
    if !grid.is_high(nb) {
        // every cell falls into the same low-resolution pixel
        let (sy, sx) = (((cells[0].0 - oy) / 2) as usize, ((cells[0].1 - ox) / 2) as usize);
        debug_assert!(cells
            .iter()
            .all(|&(y, x)| ((y - oy) / 2) as usize == sy && ((x - ox) / 2) as usize == sx));
        return alloc::vec![(nb, sy, sx, 1.0)];
    }
    if mode == PadMode::StridedSample {
        let &(y, x) = cells.iter().min().unwrap();
        return alloc::vec![(nb, (y - oy) as usize, (x - ox) as usize, 1.0)];
    }
    let w = 1.0 / cells.len() as f64;
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (y, x) in cells {
        *merged.entry(((y - oy) as usize, (x - ox) as usize)).or_insert(0.0) += w;
    }
    merged.into_iter().map(|((y, x), w)| (nb, y, x, w)).collect()
}
