//! Plain dense executor: direct nested-loop convolution with zero padding,
//! no block machinery and no shared kernels.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Layer, Network};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, Dims};

/// Number of templates offered by [`test_architecture`].
pub const TEST_ARCHITECTURES: usize = 3;

/// Randomized networks covering stride-2 convs, max pooling, residual adds
/// and upsampling. Each has total downscale 2 at its deepest point, so block
/// sizes divisible by 4 are accepted for all-high grids.
pub fn test_architecture<T: Scalar>(variant: usize, cin: usize, rng: &mut Rng) -> Result<Network<T>> {
    let w = |rng: &mut Rng| 2 + rng.below(4) as usize;
    let (a, b, k) = (w(rng), w(rng), 2 + rng.below(3) as usize);
    let mut conv = |ci, co, kk, s| -> Result<Layer<T>> {
        let mut c = Conv2d::init(ci, co, kk, s, rng)?;
        for v in &mut c.bias {
            *v = T::of(rng.uniform_range(-0.3, 0.3));
        }
        Ok(Layer::Conv(c))
    };
    let layers = match variant {
        0 => vec![
            conv(cin, a, 3, 1)?,
            Layer::Relu,
            conv(a, b, 3, 2)?,
            Layer::Relu,
            conv(b, b, 3, 1)?,
            Layer::ResidualAdd { skip: 4 },
            Layer::Relu,
            Layer::Upsample2,
            conv(b, k, 1, 1)?,
        ],
        1 => vec![
            conv(cin, a, 3, 1)?,
            Layer::Relu,
            Layer::MaxPool2,
            conv(a, b, 3, 1)?,
            Layer::Relu,
            conv(b, b, 3, 2)?,
            Layer::Relu,
            Layer::Upsample2,
            Layer::Upsample2,
            conv(b, k, 3, 1)?,
        ],
        _ => vec![
            conv(cin, a, 1, 1)?,
            Layer::Relu,
            conv(a, a, 3, 1)?,
            Layer::ResidualAdd { skip: 2 },
            conv(a, b, 3, 2)?,
            Layer::Relu,
            conv(b, b, 3, 2)?,
            Layer::Upsample2,
            conv(b, b, 3, 1)?,
            Layer::ResidualAdd { skip: 6 },
            Layer::Upsample2,
            conv(b, k, 3, 1)?,
        ],
    };
    Network::new(cin, layers)
}

/// Direct convolution, zero padding of `k/2`.
pub fn reference_conv(x: &DenseTensor<f64>, conv: &Conv2d<f64>) -> Result<DenseTensor<f64>> {
    let d = x.dims();
    if d.c != conv.cin {
        return Err(Error::Channels {
            expected: conv.cin,
            got: d.c,
        });
    }
    let pad = (conv.k / 2) as isize;
    let oh = (d.h + 2 * pad as usize - conv.k) / conv.stride + 1;
    let ow = (d.w + 2 * pad as usize - conv.k) / conv.stride + 1;
    let mut y = DenseTensor::zeros(Dims::new(d.n, conv.cout, oh, ow))?;
    for n in 0..d.n {
        for co in 0..conv.cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[co];
                    for ci in 0..conv.cin {
                        for ky in 0..conv.k {
                            for kx in 0..conv.k {
                                let iy = (oy * conv.stride + ky) as isize - pad;
                                let ix = (ox * conv.stride + kx) as isize - pad;
                                if iy < 0 || ix < 0 || iy >= d.h as isize || ix >= d.w as isize {
                                    continue;
                                }
                                let wv = conv.weight[((co * conv.cin + ci) * conv.k + ky) * conv.k + kx];
                                acc += wv * x.get(n, ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    y.set(n, co, oy, ox, acc);
                }
            }
        }
    }
    Ok(y)
}

/// Executes `net` densely with the reference loops.
pub fn run_dense(net: &Network<f64>, x: &DenseTensor<f64>) -> Result<DenseTensor<f64>> {
    let mut acts: Vec<DenseTensor<f64>> = vec![x.clone()];
    for layer in net.layers() {
        let cur = acts.last().unwrap();
        let d = cur.dims();
        let next = match layer {
            Layer::Conv(c) => reference_conv(cur, c)?,
            Layer::Relu => cur.map(|v| if v > 0.0 { v } else { 0.0 }),
            Layer::MaxPool2 => DenseTensor::from_fn(Dims::new(d.n, d.c, d.h / 2, d.w / 2), |n, c, y, xx| {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(cur.get(n, c, 2 * y + dy, 2 * xx + dx));
                    }
                }
                m
            })?,
            Layer::Upsample2 => DenseTensor::from_fn(Dims::new(d.n, d.c, d.h * 2, d.w * 2), |n, c, y, xx| {
                cur.get(n, c, y / 2, xx / 2)
            })?,
            Layer::ResidualAdd { skip } => {
                let other = &acts[*skip];
                if other.dims() != d {
                    return Err(Error::Shape(alloc::format!("residual {:?} + {:?}", d, other.dims())));
                }
                DenseTensor::from_fn(d, |n, c, y, xx| cur.get(n, c, y, xx) + other.get(n, c, y, xx))?
            }
        };
        acts.push(next);
    }
    Ok(acts.pop().unwrap())
}
