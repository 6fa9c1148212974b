use alloc::format;
use alloc::sync::Arc;

use super::{BlockGrid, BlockTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{avg_pool2_plane, avg_pool2_plane_backward, DenseTensor, Dims};

/// Splits a single image into the grid; low blocks are 2×2 average-pooled.
pub fn block_sample<T: Scalar>(x: &DenseTensor<T>, grid: Arc<BlockGrid>) -> Result<BlockTensor<T>> {
    let d = x.dims();
    let s = grid.block_size();
    if d.n != 1 || (d.h, d.w) != grid.image_size() {
        return Err(Error::Grid(format!(
            "image {d:?} does not match a {}x{} grid of {s}px blocks",
            grid.rows(),
            grid.cols()
        )));
    }
    let mut out = BlockTensor::zeros(grid.clone(), d.c, s, 0)?;
    let mut crop = alloc::vec![T::zero(); s * s];
    for b in 0..grid.blocks() {
        let (by, bx) = grid.cell(b);
        let high = grid.is_high(b);
        let dst = out.block_mut(b);
        for c in 0..d.c {
            let plane = &x.data()[c * d.plane()..(c + 1) * d.plane()];
            if high {
                let o = &mut dst[c * s * s..(c + 1) * s * s];
                for y in 0..s {
                    let src = (by * s + y) * d.w + bx * s;
                    o[y * s..(y + 1) * s].copy_from_slice(&plane[src..src + s]);
                }
            } else {
                for y in 0..s {
                    let src = (by * s + y) * d.w + bx * s;
                    crop[y * s..(y + 1) * s].copy_from_slice(&plane[src..src + s]);
                }
                let l = s / 2;
                avg_pool2_plane(&crop, s, s, &mut dst[c * l * l..(c + 1) * l * l]);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`block_sample`]: high gradients scatter to their crops, each
/// low gradient spreads a quarter of its value over its 2×2 source window.
pub fn block_sample_backward<T: Scalar>(g: &BlockTensor<T>) -> Result<DenseTensor<T>> {
    let grid = g.grid();
    let s = grid.block_size();
    if g.size() != s || g.pad() != 0 {
        return Err(Error::Shape(format!(
            "block_sample gradient must have size {s} and no padding (got size {}, pad {})",
            g.size(),
            g.pad()
        )));
    }
    let (h, w) = grid.image_size();
    let dims = Dims::new(1, g.channels(), h, w);
    let mut out = DenseTensor::zeros(dims)?;
    let mut crop = alloc::vec![T::zero(); s * s];
    for b in 0..grid.blocks() {
        let (by, bx) = grid.cell(b);
        let high = grid.is_high(b);
        let src = g.block(b);
        for c in 0..g.channels() {
            let plane = &mut out.data_mut()[c * h * w..(c + 1) * h * w];
            let rows: &[T] = if high {
                &src[c * s * s..(c + 1) * s * s]
            } else {
                let l = s / 2;
                crop.iter_mut().for_each(|v| *v = T::zero());
                avg_pool2_plane_backward(&src[c * l * l..(c + 1) * l * l], s, s, &mut crop);
                &crop
            };
            for y in 0..s {
                let o = (by * s + y) * w + bx * s;
                plane[o..o + s].copy_from_slice(&rows[y * s..(y + 1) * s]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;
    use alloc::vec::Vec;

    fn grid(gy: usize, gx: usize, s: usize, a: Vec<bool>) -> Arc<BlockGrid> {
        Arc::new(BlockGrid::new(gy, gx, s, a).unwrap())
    }

    #[test]
    fn all_high_blocks_are_crops() {
        let x = DenseTensor::<f32>::rand_uniform((1, 2, 8, 12), &mut Rng::new(1), -1.0, 1.0).unwrap();
        let g = grid(2, 3, 4, vec![true; 6]);
        let bt = block_sample(&x, g).unwrap();
        for b in 0..6 {
            let (by, bx) = (b / 3, b % 3);
            let blk = bt.block(b);
            for c in 0..2 {
                for y in 0..4 {
                    for xx in 0..4 {
                        assert_eq!(blk[(c * 4 + y) * 4 + xx], x.get(0, c, by * 4 + y, bx * 4 + xx));
                    }
                }
            }
        }
    }

    #[test]
    fn low_block_of_constant() {
        let x = DenseTensor::<f32>::full((1, 1, 4, 8), 0.7).unwrap();
        let bt = block_sample(&x, grid(1, 2, 4, vec![false, true])).unwrap();
        assert_eq!(bt.block(0), &[0.7; 4]);
    }

    #[test]
    fn low_block_hand_values() {
        let x = DenseTensor::<f64>::from_vec((1, 1, 4, 4), (1..=16).map(|v| v as f64).collect()).unwrap();
        let bt = block_sample(&x, grid(1, 1, 4, vec![false])).unwrap();
        assert_eq!(bt.block(0), &[3.5, 5.5, 11.5, 13.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let x = DenseTensor::<f32>::zeros((1, 1, 8, 8)).unwrap();
        assert!(block_sample(&x, grid(1, 1, 4, vec![true])).is_err());
        let x = DenseTensor::<f32>::zeros((2, 1, 4, 4)).unwrap();
        assert!(block_sample(&x, grid(1, 1, 4, vec![true])).is_err());
    }

    #[test]
    fn backward_low_element_spreads_quarter() {
        let g = grid(1, 1, 4, vec![false]);
        let mut gt = BlockTensor::<f64>::zeros(g, 1, 4, 0).unwrap();
        gt.block_mut(0)[3] = 1.0;
        let d = block_sample_backward(&gt).unwrap();
        let nz: Vec<_> = d.data().iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nz.len(), 4);
        assert!(nz.iter().all(|(_, v)| **v == 0.25));
        assert_eq!(d.get(0, 0, 2, 2), 0.25);
        assert_eq!(d.get(0, 0, 3, 3), 0.25);
    }

    #[test]
    fn backward_all_high_is_identity() {
        let x = DenseTensor::<f64>::rand_uniform((1, 3, 8, 8), &mut Rng::new(2), -1.0, 1.0).unwrap();
        let bt = block_sample(&x, grid(2, 2, 4, vec![true; 4])).unwrap();
        assert_eq!(block_sample_backward(&bt).unwrap(), x);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = Rng::new(3);
        for trial in 0..10 {
            let acts: Vec<bool> = (0..6).map(|_| rng.bernoulli(0.5)).collect();
            let g = grid(2, 3, 4, acts);
            let x = DenseTensor::<f64>::rand_uniform((1, 2, 8, 12), &mut rng, -1.0, 1.0).unwrap();
            let fx = block_sample(&x, g.clone()).unwrap();
            let mut gy = fx.zeros_like();
            gy.fill_with(|| rng.uniform_range(-1.0, 1.0));
            let lhs = fx.dot(&gy).unwrap();
            let rhs = x.dot(&block_sample_backward(&gy).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "trial {trial}: {lhs} vs {rhs}");
        }
    }
}
