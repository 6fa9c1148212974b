//! Layer operations shared by dense and block execution.
//!
//! [`Features`] is implemented for [`DenseTensor`] (every batch item is one
//! group of planes, zero-padded) and for [`BlockTensor`] (every block is one
//! group, padded by [`block_pad`]). The network code is written once against
//! the trait.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{Conv2d, ConvGrads};
use super::kernels::{conv_backward, conv_forward, maxpool2_forward, out_extent};
use crate::block::{block_pad, block_pad_backward, BlockTensor, PadMode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{sum_pool2_plane, upsample2_plane, DenseTensor, Dims};

pub trait Features<T: Scalar>: Clone + Sized {
    fn channels(&self) -> usize;

    /// Input as consumed by a `k×k` convolution: padded by `k/2`.
    fn prepare_conv(&self, k: usize, mode: PadMode) -> Result<Self>;
    /// Adjoint of [`prepare_conv`](Self::prepare_conv).
    fn prepare_conv_backward(&self, k: usize, mode: PadMode) -> Result<Self>;

    /// Valid convolution of a prepared input. Returns the output and its MAC count.
    fn conv(&self, layer: &Conv2d<T>) -> Result<(Self, u64)>;
    /// Gradient with respect to the prepared input; parameter gradients accumulate into `grads`.
    fn conv_backward(&self, layer: &Conv2d<T>, gy: &Self, grads: &mut ConvGrads<T>) -> Result<Self>;

    fn relu(&self) -> Self;
    fn relu_backward(&self, gy: &Self) -> Result<Self>;

    fn maxpool2(&self) -> Result<(Self, Vec<u32>)>;
    fn maxpool2_backward(&self, argmax: &[u32], gy: &Self) -> Result<Self>;

    fn upsample2(&self) -> Result<Self>;
    fn upsample2_backward(&self) -> Result<Self>;

    fn add(&self, other: &Self) -> Result<Self>;
    fn add_assign(&mut self, other: &Self) -> Result<()>;
    fn zeros_like(&self) -> Self;
}

fn relu_grad<T: Scalar>(x: &[T], gy: &[T]) -> Vec<T> {
    x.iter()
        .zip(gy)
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect()
}

fn check_conv_channels<T: Scalar>(layer: &Conv2d<T>, c: usize) -> Result<()> {
    if layer.cin != c {
        return Err(Error::Channels {
            expected: layer.cin,
            got: c,
        });
    }
    Ok(())
}

impl<T: Scalar> Features<T> for DenseTensor<T> {
    fn channels(&self) -> usize {
        self.dims().c
    }

    fn prepare_conv(&self, k: usize, _mode: PadMode) -> Result<Self> {
        Ok(if k == 3 { self.zero_pad(1) } else { self.clone() })
    }

    fn prepare_conv_backward(&self, k: usize, _mode: PadMode) -> Result<Self> {
        if k == 3 {
            self.crop(1)
        } else {
            Ok(self.clone())
        }
    }

    fn conv(&self, layer: &Conv2d<T>) -> Result<(Self, u64)> {
        let d = self.dims();
        check_conv_channels(layer, d.c)?;
        if d.h < layer.k || d.w < layer.k {
            return Err(Error::Shape(format!("input {d:?} smaller than kernel")));
        }
        let (oh, ow) = (
            out_extent(d.h, layer.k, layer.stride),
            out_extent(d.w, layer.k, layer.stride),
        );
        let od = Dims::new(d.n, layer.cout, oh, ow);
        let mut y = DenseTensor::zeros(od)?;
        for n in 0..d.n {
            let (x, yo) = (self.item(n), y.item_mut(n));
            conv_forward(
                x,
                d.h,
                d.w,
                &layer.weight,
                &layer.bias,
                layer.cin,
                layer.cout,
                layer.k,
                layer.stride,
                yo,
            );
        }
        Ok((y, layer.macs(oh, ow) * d.n as u64))
    }

    fn conv_backward(&self, layer: &Conv2d<T>, gy: &Self, grads: &mut ConvGrads<T>) -> Result<Self> {
        let d = self.dims();
        check_conv_channels(layer, d.c)?;
        let (oh, ow) = (
            out_extent(d.h, layer.k, layer.stride),
            out_extent(d.w, layer.k, layer.stride),
        );
        if gy.dims() != Dims::new(d.n, layer.cout, oh, ow) {
            return Err(Error::Shape(format!("conv gradient {:?} for input {d:?}", gy.dims())));
        }
        let mut gx = DenseTensor::zeros(d)?;
        for n in 0..d.n {
            conv_backward(
                self.item(n),
                d.h,
                d.w,
                &layer.weight,
                layer.cin,
                layer.cout,
                layer.k,
                layer.stride,
                gy.item(n),
                gx.item_mut(n),
                &mut grads.weight,
                &mut grads.bias,
            );
        }
        Ok(gx)
    }

    fn relu(&self) -> Self {
        self.map(|v| v.max(T::zero()))
    }

    fn relu_backward(&self, gy: &Self) -> Result<Self> {
        if self.dims() != gy.dims() {
            return Err(Error::Shape(format!(
                "relu gradient {:?} vs {:?}",
                gy.dims(),
                self.dims()
            )));
        }
        DenseTensor::from_vec(self.dims(), relu_grad(self.data(), gy.data()))
    }

    fn maxpool2(&self) -> Result<(Self, Vec<u32>)> {
        let d = self.dims();
        if !d.h.is_multiple_of(2) || !d.w.is_multiple_of(2) {
            return Err(Error::OddSize { h: d.h, w: d.w });
        }
        let od = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
        let mut y = DenseTensor::zeros(od)?;
        let mut arg = vec![0u32; od.len()];
        for ((xp, yp), ap) in self
            .data()
            .chunks_exact(d.plane())
            .zip(y.data_mut().chunks_exact_mut(od.plane()))
            .zip(arg.chunks_exact_mut(od.plane()))
        {
            maxpool2_forward(xp, d.h, d.w, yp, ap);
        }
        Ok((y, arg))
    }

    fn maxpool2_backward(&self, argmax: &[u32], gy: &Self) -> Result<Self> {
        let d = self.dims();
        let od = gy.dims();
        if od != Dims::new(d.n, d.c, d.h / 2, d.w / 2) || argmax.len() != od.len() {
            return Err(Error::Shape(format!("maxpool gradient {od:?} for input {d:?}")));
        }
        let mut gx = DenseTensor::zeros(d)?;
        for ((gxp, gyp), ap) in gx
            .data_mut()
            .chunks_exact_mut(d.plane())
            .zip(gy.data().chunks_exact(od.plane()))
            .zip(argmax.chunks_exact(od.plane()))
        {
            for (&g, &a) in gyp.iter().zip(ap) {
                gxp[a as usize] += g;
            }
        }
        Ok(gx)
    }

    fn upsample2(&self) -> Result<Self> {
        Ok(self.nearest_upsample2())
    }

    fn upsample2_backward(&self) -> Result<Self> {
        self.nearest_upsample2_backward()
    }

    fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!("add {:?} and {:?}", self.dims(), other.dims())));
        }
        for (a, &b) in self.data_mut().iter_mut().zip(other.data()) {
            *a += b;
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        DenseTensor::zeros(self.dims()).expect("dims already validated")
    }
}

impl<T: Scalar> BlockTensor<T> {
    fn zip_stores(&self, other: &Self, f: impl Fn(T, T) -> T, what: &str) -> Result<Self> {
        self.check_layout(other, what)?;
        let mut out = self.zeros_like();
        let [oh, ol] = out.stores_mut();
        let [ah, al] = self.stores();
        let [bh, bl] = other.stores();
        for (o, (a, b)) in oh
            .iter_mut()
            .zip(ah.iter().zip(bh))
            .chain(ol.iter_mut().zip(al.iter().zip(bl)))
        {
            *o = f(*a, *b);
        }
        Ok(out)
    }

    fn spatial_size_after_stride(&self, stride: usize) -> Result<usize> {
        if stride == 1 {
            Ok(self.size())
        } else {
            self.halve_block_size()
        }
    }
}

impl<T: Scalar> Features<T> for BlockTensor<T> {
    fn channels(&self) -> usize {
        BlockTensor::channels(self)
    }

    fn prepare_conv(&self, k: usize, mode: PadMode) -> Result<Self> {
        if k == 3 {
            block_pad(self, 1, mode)
        } else {
            Ok(self.clone())
        }
    }

    fn prepare_conv_backward(&self, k: usize, mode: PadMode) -> Result<Self> {
        if k == 3 {
            block_pad_backward(self, mode)
        } else {
            Ok(self.clone())
        }
    }

    fn conv(&self, layer: &Conv2d<T>) -> Result<(Self, u64)> {
        check_conv_channels(layer, self.channels())?;
        if self.pad() != layer.padding() {
            return Err(Error::Shape(format!(
                "{}x{} conv needs block padding {}, got {}",
                layer.k,
                layer.k,
                layer.padding(),
                self.pad()
            )));
        }
        let size = self.spatial_size_after_stride(layer.stride)?;
        let mut y = self.zeros_with(layer.cout, size, 0)?;
        let mut macs = 0;
        for b in 0..self.grid().blocks() {
            let e = self.extent(b);
            let oe = y.extent(b);
            debug_assert_eq!(out_extent(e, layer.k, layer.stride), oe);
            conv_forward(
                self.block(b),
                e,
                e,
                &layer.weight,
                &layer.bias,
                layer.cin,
                layer.cout,
                layer.k,
                layer.stride,
                y.block_mut(b),
            );
            macs += layer.macs(oe, oe);
        }
        Ok((y, macs))
    }

    fn conv_backward(&self, layer: &Conv2d<T>, gy: &Self, grads: &mut ConvGrads<T>) -> Result<Self> {
        check_conv_channels(layer, self.channels())?;
        let size = self.spatial_size_after_stride(layer.stride)?;
        if gy.size() != size || gy.channels() != layer.cout || gy.pad() != 0 {
            return Err(Error::Shape(format!(
                "conv gradient block layout (size {}, C {})",
                gy.size(),
                gy.channels()
            )));
        }
        let mut gx = self.zeros_like();
        for b in 0..self.grid().blocks() {
            let e = self.extent(b);
            conv_backward(
                self.block(b),
                e,
                e,
                &layer.weight,
                layer.cin,
                layer.cout,
                layer.k,
                layer.stride,
                gy.block(b),
                gx.block_mut(b),
                &mut grads.weight,
                &mut grads.bias,
            );
        }
        Ok(gx)
    }

    fn relu(&self) -> Self {
        self.map(|v| v.max(T::zero()))
    }

    fn relu_backward(&self, gy: &Self) -> Result<Self> {
        self.zip_stores(gy, |x, g| if x > T::zero() { g } else { T::zero() }, "relu backward")
    }

    fn maxpool2(&self) -> Result<(Self, Vec<u32>)> {
        if self.pad() != 0 {
            return Err(Error::Shape("maxpool on padded blocks".into()));
        }
        let size = self.halve_block_size()?;
        let mut y = self.zeros_with(self.channels(), size, 0)?;
        let mut arg = vec![0u32; y.len()];
        let [hs, _] = y.stores();
        let high_len = hs.len();
        let c = self.channels();
        let grid = self.grid().clone();
        for b in 0..grid.blocks() {
            let e = self.extent(b);
            let oe = y.extent(b);
            let base = if grid.is_high(b) { 0 } else { high_len };
            let off = base + grid.slot(b) * c * oe * oe;
            let src = self.block(b);
            let dst = y.block_mut(b);
            for ch in 0..c {
                maxpool2_forward(
                    &src[ch * e * e..(ch + 1) * e * e],
                    e,
                    e,
                    &mut dst[ch * oe * oe..(ch + 1) * oe * oe],
                    &mut arg[off + ch * oe * oe..off + (ch + 1) * oe * oe],
                );
            }
        }
        Ok((y, arg))
    }

    fn maxpool2_backward(&self, argmax: &[u32], gy: &Self) -> Result<Self> {
        if argmax.len() != gy.len() || gy.channels() != self.channels() {
            return Err(Error::Shape("maxpool gradient layout".into()));
        }
        let mut gx = self.zeros_like();
        let c = self.channels();
        let grid = self.grid().clone();
        let high_len = gy.stores()[0].len();
        for b in 0..grid.blocks() {
            let e = self.extent(b);
            let oe = gy.extent(b);
            let base = if grid.is_high(b) { 0 } else { high_len };
            let off = base + grid.slot(b) * c * oe * oe;
            let g = gy.block(b);
            let dst = gx.block_mut(b);
            for ch in 0..c {
                for i in 0..oe * oe {
                    let a = argmax[off + ch * oe * oe + i] as usize;
                    dst[ch * e * e + a] += g[ch * oe * oe + i];
                }
            }
        }
        Ok(gx)
    }

    fn upsample2(&self) -> Result<Self> {
        if self.pad() != 0 {
            return Err(Error::Shape("upsample on padded blocks".into()));
        }
        let mut y = self.zeros_with(self.channels(), self.size() * 2, 0)?;
        let c = self.channels();
        for b in 0..self.grid().blocks() {
            let e = self.extent(b);
            let oe = 2 * e;
            let src = self.block(b);
            let dst = y.block_mut(b);
            for ch in 0..c {
                upsample2_plane(
                    &src[ch * e * e..(ch + 1) * e * e],
                    e,
                    e,
                    &mut dst[ch * oe * oe..(ch + 1) * oe * oe],
                );
            }
        }
        Ok(y)
    }

    fn upsample2_backward(&self) -> Result<Self> {
        if !self.size().is_multiple_of(2) {
            return Err(Error::Shape("upsample gradient with odd block size".into()));
        }
        let mut gx = self.zeros_with(self.channels(), self.size() / 2, 0)?;
        let c = self.channels();
        for b in 0..self.grid().blocks() {
            let e = self.extent(b);
            let oe = gx.extent(b);
            let src = self.block(b);
            let dst = gx.block_mut(b);
            for ch in 0..c {
                sum_pool2_plane(
                    &src[ch * e * e..(ch + 1) * e * e],
                    e,
                    e,
                    &mut dst[ch * oe * oe..(ch + 1) * oe * oe],
                );
            }
        }
        Ok(gx)
    }

    fn add(&self, other: &Self) -> Result<Self> {
        self.zip_stores(other, |a, b| a + b, "residual add")
    }

    fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_layout(other, "add")?;
        let [ah, al] = self.stores_mut();
        let [bh, bl] = other.stores();
        for (a, b) in ah.iter_mut().zip(bh).chain(al.iter_mut().zip(bl)) {
            *a += *b;
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        BlockTensor::zeros_like(self)
    }
}
