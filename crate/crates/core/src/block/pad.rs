//! Neighbour-aware 1-pixel padding of blocks.
//!
//! For block `b` with stored extent `e`, padded position `(py, px)` in
//! `[0, e + 2)²` is filled from the adjacent block on that side:
//!
//! * same resolution: the neighbour's border pixel, copied;
//! * low neighbour of a high block: the low border pixel, repeated over the
//!   two padding positions it covers;
//! * high neighbour of a low block: the mean (`AverageSample`) or the
//!   lower-index pixel (`StridedSample`) of the two border pixels spanned;
//! * corners read the diagonal neighbour's corner pixel, adapting each axis
//!   independently (a low block reading a high corner spans 2×2 pixels);
//! * outside the image, and everywhere under `ZeroPad`, the padding is zero.

use alloc::format;

use super::{BlockGrid, BlockTensor, PadMode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy)]
enum Axis {
    /// Position `i` along the shared border.
    Along(usize),
    /// Nearest row/column of a side neighbour: first or last (depth 1).
    Near { last: bool },
    /// Corner of a diagonal neighbour: first or last row/column, spanning
    /// two pixels when a low block reads a high one.
    Corner { last: bool },
}

/// Up to two neighbour indices with weights along one axis.
#[derive(Clone, Copy)]
struct Span {
    idx: [usize; 2],
    w: [f64; 2],
    len: usize,
}

impl Span {
    fn one(i: usize) -> Span {
        Span {
            idx: [i, 0],
            w: [1.0, 0.0],
            len: 1,
        }
    }
    fn two(i: usize, j: usize) -> Span {
        Span {
            idx: [i, j],
            w: [0.5, 0.5],
            len: 2,
        }
    }
}

fn span(axis: Axis, own_high: bool, nb_high: bool, nb_extent: usize, mode: PadMode) -> Span {
    let spans_pair = !own_high && nb_high;
    match axis {
        Axis::Along(i) => {
            if own_high == nb_high {
                Span::one(i)
            } else if own_high {
                Span::one(i / 2)
            } else if mode == PadMode::StridedSample {
                Span::one(2 * i)
            } else {
                Span::two(2 * i, 2 * i + 1)
            }
        }
        Axis::Near { last } => Span::one(if last { nb_extent - 1 } else { 0 }),
        Axis::Corner { last } => {
            if !spans_pair {
                return Span::one(if last { nb_extent - 1 } else { 0 });
            }
            let first = if last { nb_extent - 2 } else { 0 };
            if mode == PadMode::StridedSample {
                Span::one(first)
            } else {
                Span::two(first, first + 1)
            }
        }
    }
}

/// Visits every (padding position, source pixel, weight) triple of block `b`.
///
/// `dst` is the offset in `b`'s padded plane (`(e+2)²`); `src` the offset in
/// the unpadded plane of neighbour `nb`. Positions with no source are zero.
/// `size` is the current unpadded high-resolution block size.
pub fn for_each_pad_source(
    grid: &BlockGrid,
    size: usize,
    mode: PadMode,
    b: usize,
    mut visit: impl FnMut(usize, usize, usize, f64),
) {
    if mode == PadMode::ZeroPad {
        return;
    }
    let ext = |high: bool| if high { size } else { size / 2 };
    let own_high = grid.is_high(b);
    let e = ext(own_high);
    let p = e + 2;
    let (by, bx) = grid.cell(b);
    let (by, bx) = (by as isize, bx as isize);

    // (row offset, col offset, row axis, col axis, padded row, padded col) per position.
    let mut emit = |dy: isize, dx: isize, ry: Axis, rx: Axis, py: usize, px: usize| {
        let Some(nb) = grid.neighbor(by + dy, bx + dx) else {
            return;
        };
        let nb_high = grid.is_high(nb);
        let ne = ext(nb_high);
        let sy = span(ry, own_high, nb_high, ne, mode);
        let sx = span(rx, own_high, nb_high, ne, mode);
        for i in 0..sy.len {
            for j in 0..sx.len {
                visit(py * p + px, nb, sy.idx[i] * ne + sx.idx[j], sy.w[i] * sx.w[j]);
            }
        }
    };

    for i in 0..e {
        emit(-1, 0, Axis::Near { last: true }, Axis::Along(i), 0, i + 1);
        emit(1, 0, Axis::Near { last: false }, Axis::Along(i), p - 1, i + 1);
        emit(0, -1, Axis::Along(i), Axis::Near { last: true }, i + 1, 0);
        emit(0, 1, Axis::Along(i), Axis::Near { last: false }, i + 1, p - 1);
    }
    let (first, last) = (Axis::Corner { last: false }, Axis::Corner { last: true });
    emit(-1, -1, last, last, 0, 0);
    emit(-1, 1, last, first, 0, p - 1);
    emit(1, -1, first, last, p - 1, 0);
    emit(1, 1, first, first, p - 1, p - 1);
}

fn check_pad_input<T: Scalar>(x: &BlockTensor<T>, width: usize) -> Result<()> {
    if width != 1 {
        return Err(Error::PadWidth(width));
    }
    if x.pad() != 0 {
        return Err(Error::Shape(format!(
            "block tensor is already padded (pad {})",
            x.pad()
        )));
    }
    if x.size() < 2 {
        return Err(Error::Shape(format!("block size {} too small to pad", x.size())));
    }
    Ok(())
}

/// Pads every block by `width` (must be 1) pixels from its neighbours.
pub fn block_pad<T: Scalar>(x: &BlockTensor<T>, width: usize, mode: PadMode) -> Result<BlockTensor<T>> {
    check_pad_input(x, width)?;
    let grid = x.grid().clone();
    let c = x.channels();
    let mut out = x.zeros_with(c, x.size(), 1)?;
    for b in 0..grid.blocks() {
        let e = x.extent(b);
        let p = e + 2;
        let src = x.block(b);
        let dst = out.block_mut(b);
        for ch in 0..c {
            for y in 0..e {
                let o = ch * p * p + (y + 1) * p + 1;
                dst[o..o + e].copy_from_slice(&src[ch * e * e + y * e..ch * e * e + (y + 1) * e]);
            }
        }
        for_each_pad_source(&grid, x.size(), mode, b, |d, nb, s, w| {
            let ne = x.extent(nb);
            let nsrc = x.block(nb);
            let w = T::of(w);
            for ch in 0..c {
                dst[ch * p * p + d] += w * nsrc[ch * ne * ne + s];
            }
        });
    }
    Ok(out)
}

/// Adjoint of [`block_pad`]: interior gradients pass through, padding
/// gradients accumulate onto the pixels they were read from.
pub fn block_pad_backward<T: Scalar>(g: &BlockTensor<T>, mode: PadMode) -> Result<BlockTensor<T>> {
    if g.pad() != 1 {
        return Err(Error::Shape(format!(
            "block_pad gradient must have pad 1 (got {})",
            g.pad()
        )));
    }
    let grid = g.grid().clone();
    let c = g.channels();
    let mut out = g.zeros_with(c, g.size(), 0)?;
    for b in 0..grid.blocks() {
        let e = out.extent(b);
        let p = e + 2;
        let src = g.block(b);
        let dst = out.block_mut(b);
        for ch in 0..c {
            for y in 0..e {
                let o = ch * p * p + (y + 1) * p + 1;
                for (d, s) in dst[ch * e * e + y * e..ch * e * e + (y + 1) * e]
                    .iter_mut()
                    .zip(&src[o..o + e])
                {
                    *d += *s;
                }
            }
        }
    }
    for b in 0..grid.blocks() {
        let p = g.extent(b);
        for_each_pad_source(&grid, g.size(), mode, b, |d, nb, s, w| {
            let ne = out.extent(nb);
            let w = T::of(w);
            let gsrc = g.block(b);
            let dst = out.block_mut(nb);
            for ch in 0..c {
                dst[ch * ne * ne + s] += w * gsrc[ch * p * p + d];
            }
        });
    }
    Ok(out)
}
