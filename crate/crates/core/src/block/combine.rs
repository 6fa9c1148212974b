use alloc::format;
use alloc::sync::Arc;

use super::{BlockGrid, BlockTensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{sum_pool2_plane, upsample2_plane, DenseTensor, Dims};

/// Reassembles a dense `(1, C, Gy·s, Gx·s)` tensor; low blocks are nearest
/// neighbour upsampled by 2.
pub fn block_combine<T: Scalar>(x: &BlockTensor<T>) -> Result<DenseTensor<T>> {
    if x.pad() != 0 {
        return Err(Error::Shape(format!("cannot combine padded blocks (pad {})", x.pad())));
    }
    let grid = x.grid();
    let s = x.size();
    let (h, w) = (grid.rows() * s, grid.cols() * s);
    let c = x.channels();
    let mut out = DenseTensor::zeros(Dims::new(1, c, h, w))?;
    let mut up = alloc::vec![T::zero(); s * s];
    for b in 0..grid.blocks() {
        let (by, bx) = grid.cell(b);
        let src = x.block(b);
        for ch in 0..c {
            let rows: &[T] = if grid.is_high(b) {
                &src[ch * s * s..(ch + 1) * s * s]
            } else {
                let l = s / 2;
                upsample2_plane(&src[ch * l * l..(ch + 1) * l * l], l, l, &mut up);
                &up
            };
            let plane = &mut out.data_mut()[ch * h * w..(ch + 1) * h * w];
            for y in 0..s {
                let o = (by * s + y) * w + bx * s;
                plane[o..o + s].copy_from_slice(&rows[y * s..(y + 1) * s]);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`block_combine`]: high blocks receive crops of `g`, each low
/// element the sum of the 2×2 patch it was copied to.
pub fn block_combine_backward<T: Scalar>(
    g: &DenseTensor<T>,
    grid: Arc<BlockGrid>,
    size: usize,
) -> Result<BlockTensor<T>> {
    let d = g.dims();
    let (h, w) = (grid.rows() * size, grid.cols() * size);
    if d.n != 1 || d.h != h || d.w != w {
        return Err(Error::Shape(format!(
            "gradient {d:?} does not match combined size {h}x{w}"
        )));
    }
    let c = d.c;
    let mut out = BlockTensor::zeros(grid.clone(), c, size, 0)?;
    let mut crop = alloc::vec![T::zero(); size * size];
    for b in 0..grid.blocks() {
        let (by, bx) = grid.cell(b);
        let high = grid.is_high(b);
        let dst = out.block_mut(b);
        for ch in 0..c {
            let plane = &g.data()[ch * h * w..(ch + 1) * h * w];
            let target: &mut [T] = if high {
                &mut dst[ch * size * size..(ch + 1) * size * size]
            } else {
                &mut crop
            };
            for y in 0..size {
                let o = (by * size + y) * w + bx * size;
                target[y * size..(y + 1) * size].copy_from_slice(&plane[o..o + size]);
            }
            if !high {
                let l = size / 2;
                sum_pool2_plane(&crop, size, size, &mut dst[ch * l * l..(ch + 1) * l * l]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{block_sample, block_sample_backward};
    use crate::rng::Rng;
    use alloc::vec;
    use alloc::vec::Vec;

    fn grid(gy: usize, gx: usize, s: usize, a: Vec<bool>) -> Arc<BlockGrid> {
        Arc::new(BlockGrid::new(gy, gx, s, a).unwrap())
    }

    #[test]
    fn all_high_round_trip_is_exact() {
        let x = DenseTensor::<f32>::rand_uniform((1, 3, 8, 12), &mut Rng::new(8), -1.0, 1.0).unwrap();
        let bt = block_sample(&x, grid(2, 3, 4, vec![true; 6])).unwrap();
        assert_eq!(block_combine(&bt).unwrap(), x);
    }

    #[test]
    fn low_block_quadrants() {
        let g = grid(1, 1, 4, vec![false]);
        let mut t = BlockTensor::<f64>::zeros(g, 1, 4, 0).unwrap();
        t.block_mut(0).copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let d = block_combine(&t).unwrap();
        #[rustfmt::skip]
        let expect = [
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(d.data(), &expect);
    }

    #[test]
    fn constant_stays_constant() {
        let x = DenseTensor::<f64>::full((1, 2, 8, 8), -1.25).unwrap();
        let bt = block_sample(&x, grid(2, 2, 4, vec![true, false, false, false])).unwrap();
        assert!(block_combine(&bt).unwrap().data().iter().all(|&v| v == -1.25));
    }

    #[test]
    fn combine_after_sample_is_pool_then_upsample_on_low_blocks() {
        let x = DenseTensor::<f64>::rand_uniform((1, 1, 4, 8), &mut Rng::new(3), -1.0, 1.0).unwrap();
        let bt = block_sample(&x, grid(1, 2, 4, vec![false, true])).unwrap();
        let d = block_combine(&bt).unwrap();
        let pooled = x.avg_pool2().unwrap().nearest_upsample2();
        for y in 0..4 {
            for xx in 0..8 {
                let expect = if xx < 4 {
                    pooled.get(0, 0, y, xx)
                } else {
                    x.get(0, 0, y, xx)
                };
                assert_eq!(d.get(0, 0, y, xx), expect);
            }
        }
    }

    #[test]
    fn backward_of_ones_sums_four() {
        let g = grid(1, 2, 4, vec![false, true]);
        let ones = DenseTensor::<f64>::full((1, 2, 4, 8), 1.0).unwrap();
        let bt = block_combine_backward(&ones, g, 4).unwrap();
        assert!(bt.low_store().iter().all(|&v| v == 4.0));
        assert!(bt.high_store().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn backward_all_high_equals_sample() {
        let g = grid(2, 2, 4, vec![true; 4]);
        let x = DenseTensor::<f64>::rand_uniform((1, 2, 8, 8), &mut Rng::new(4), -1.0, 1.0).unwrap();
        assert_eq!(
            block_combine_backward(&x, g.clone(), 4).unwrap(),
            block_sample(&x, g).unwrap()
        );
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = Rng::new(9);
        for _ in 0..10 {
            let acts: Vec<bool> = (0..6).map(|_| rng.bernoulli(0.5)).collect();
            let g = grid(3, 2, 4, acts);
            let mut x = BlockTensor::<f64>::zeros(g.clone(), 2, 4, 0).unwrap();
            x.fill_with(|| rng.uniform_range(-1.0, 1.0));
            let fx = block_combine(&x).unwrap();
            let gy = DenseTensor::<f64>::rand_uniform(fx.dims(), &mut rng, -1.0, 1.0).unwrap();
            let lhs = fx.dot(&gy).unwrap();
            let rhs = x.dot(&block_combine_backward(&gy, g, 4).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn sample_backward_shape_errors() {
        let g = grid(1, 1, 4, vec![true]);
        let t = BlockTensor::<f64>::zeros(g, 1, 4, 1).unwrap();
        assert!(block_sample_backward(&t).is_err());
        assert!(block_combine(&t).is_err());
    }
}
