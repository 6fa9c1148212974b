//! Dense 4-D feature maps in row-major (N, C, H, W) order.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Tensor dimensions `(batch, channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Element count, rejecting zero dimensions and overflow.
    pub fn checked_len(&self) -> Result<usize> {
        let a = self.as_array();
        if a.contains(&0) {
            return Err(Error::ZeroDim(a));
        }
        a.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::Overflow(a))
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }
}

impl From<(usize, usize, usize, usize)> for Dims {
    fn from((n, c, h, w): (usize, usize, usize, usize)) -> Self {
        Dims::new(n, c, h, w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    pub fn zeros(dims: impl Into<Dims>) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: impl Into<Dims>, value: T) -> Result<Self> {
        let dims = dims.into();
        let len = dims.checked_len()?;
        Ok(DenseTensor {
            dims,
            data: vec![value; len],
        })
    }

    pub fn from_vec(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        let len = dims.checked_len()?;
        if data.len() != len {
            return Err(Error::DataLength {
                expected: len,
                got: data.len(),
            });
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Result<Self> {
        let dims = dims.into();
        let len = dims.checked_len()?;
        let mut data = Vec::with_capacity(len);
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Ok(DenseTensor { dims, data })
    }

    /// I.i.d. uniform draws in `[lo, hi)`.
    pub fn rand_uniform(dims: impl Into<Dims>, rng: &mut Rng, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Range { lo, hi });
        }
        let dims = dims.into();
        let len = dims.checked_len()?;
        let data = (0..len).map(|_| T::of(rng.uniform_range(lo, hi))).collect();
        Ok(DenseTensor { dims, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.dims.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.dims.index(n, c, y, x);
        self.data[i] = v;
    }

    /// Slice holding all channels of batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.dims.item();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.dims.item();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        DenseTensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape(alloc::format!(
                "dot of {:?} and {:?}",
                self.dims,
                other.dims
            )));
        }
        Ok(crate::scalar::dot(&self.data, &other.data))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape(alloc::format!(
                "compare {:?} with {:?}",
                self.dims,
                other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    /// Mean over non-overlapping 2×2 windows.
    pub fn avg_pool2(&self) -> Result<Self> {
        let d = self.dims;
        if !d.h.is_multiple_of(2) || !d.w.is_multiple_of(2) {
            return Err(Error::OddSize { h: d.h, w: d.w });
        }
        let out = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
        let mut data = vec![T::zero(); out.len()];
        for (src, dst) in self
            .data
            .chunks_exact(d.plane())
            .zip(data.chunks_exact_mut(out.plane()))
        {
            avg_pool2_plane(src, d.h, d.w, dst);
        }
        Ok(DenseTensor { dims: out, data })
    }

    /// Each pixel duplicated into a 2×2 patch.
    pub fn nearest_upsample2(&self) -> Self {
        let d = self.dims;
        let out = Dims::new(d.n, d.c, d.h * 2, d.w * 2);
        let mut data = vec![T::zero(); out.len()];
        for (src, dst) in self
            .data
            .chunks_exact(d.plane())
            .zip(data.chunks_exact_mut(out.plane()))
        {
            upsample2_plane(src, d.h, d.w, dst);
        }
        DenseTensor { dims: out, data }
    }

    /// Adjoint of [`nearest_upsample2`](Self::nearest_upsample2): sums each 2×2 patch.
    pub fn nearest_upsample2_backward(&self) -> Result<Self> {
        let d = self.dims;
        if !d.h.is_multiple_of(2) || !d.w.is_multiple_of(2) {
            return Err(Error::OddSize { h: d.h, w: d.w });
        }
        let out = Dims::new(d.n, d.c, d.h / 2, d.w / 2);
        let mut data = vec![T::zero(); out.len()];
        for (src, dst) in self
            .data
            .chunks_exact(d.plane())
            .zip(data.chunks_exact_mut(out.plane()))
        {
            sum_pool2_plane(src, d.h, d.w, dst);
        }
        Ok(DenseTensor { dims: out, data })
    }

    /// Zero padding of `p` pixels on every spatial side.
    pub fn zero_pad(&self, p: usize) -> Self {
        let d = self.dims;
        let out = Dims::new(d.n, d.c, d.h + 2 * p, d.w + 2 * p);
        let mut data = vec![T::zero(); out.len()];
        for (src, dst) in self
            .data
            .chunks_exact(d.plane())
            .zip(data.chunks_exact_mut(out.plane()))
        {
            for y in 0..d.h {
                let o = (y + p) * out.w + p;
                dst[o..o + d.w].copy_from_slice(&src[y * d.w..(y + 1) * d.w]);
            }
        }
        DenseTensor { dims: out, data }
    }

    /// Removes `p` pixels from every spatial side (adjoint of [`zero_pad`](Self::zero_pad)).
    pub fn crop(&self, p: usize) -> Result<Self> {
        let d = self.dims;
        if d.h <= 2 * p || d.w <= 2 * p {
            return Err(Error::Shape(alloc::format!("cannot crop {p} from {d:?}")));
        }
        let out = Dims::new(d.n, d.c, d.h - 2 * p, d.w - 2 * p);
        let mut data = Vec::with_capacity(out.len());
        for src in self.data.chunks_exact(d.plane()) {
            for y in 0..out.h {
                let o = (y + p) * d.w + p;
                data.extend_from_slice(&src[o..o + out.w]);
            }
        }
        Ok(DenseTensor { dims: out, data })
    }
}

pub(crate) fn avg_pool2_plane<T: Scalar>(src: &[T], h: usize, w: usize, dst: &mut [T]) {
    let ow = w / 2;
    let q = T::quarter();
    for oy in 0..h / 2 {
        let r0 = &src[2 * oy * w..][..w];
        let r1 = &src[(2 * oy + 1) * w..][..w];
        for ox in 0..ow {
            dst[oy * ow + ox] = (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * q;
        }
    }
}

pub(crate) fn avg_pool2_plane_backward<T: Scalar>(g: &[T], h: usize, w: usize, dst: &mut [T]) {
    let ow = w / 2;
    let q = T::quarter();
    for y in 0..h {
        for x in 0..w {
            dst[y * w + x] += g[(y / 2) * ow + x / 2] * q;
        }
    }
}

pub(crate) fn upsample2_plane<T: Scalar>(src: &[T], h: usize, w: usize, dst: &mut [T]) {
    let ow = 2 * w;
    for y in 0..2 * h {
        let row = &src[(y / 2) * w..][..w];
        let out = &mut dst[y * ow..][..ow];
        for (x, o) in out.iter_mut().enumerate() {
            *o = row[x / 2];
        }
    }
}

pub(crate) fn sum_pool2_plane<T: Scalar>(src: &[T], h: usize, w: usize, dst: &mut [T]) {
    let ow = w / 2;
    for y in 0..h {
        for x in 0..w {
            dst[(y / 2) * ow + x / 2] += src[y * w + x];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn zeros_small() {
        let t = DenseTensor::<f32>::zeros((1, 1, 2, 2)).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = DenseTensor::<f64>::zeros((2, 3, 4, 4)).unwrap();
        assert_eq!(t.data().len(), 96);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeros_rejects_zero_dim() {
        assert!(matches!(
            DenseTensor::<f32>::zeros((1, 0, 4, 4)),
            Err(Error::ZeroDim(_))
        ));
    }

    #[test]
    fn zeros_rejects_overflow() {
        let huge = usize::MAX / 2;
        assert!(matches!(
            DenseTensor::<f32>::zeros((huge, 4, 1, 1)),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn avg_pool2_single_window() {
        let t = DenseTensor::<f64>::from_vec((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.avg_pool2().unwrap().data(), &[2.5]);
    }

    #[test]
    fn avg_pool2_odd_rejected() {
        let t = DenseTensor::<f64>::zeros((1, 1, 3, 4)).unwrap();
        assert!(matches!(t.avg_pool2(), Err(Error::OddSize { .. })));
    }

    #[test]
    fn avg_pool2_matches_window_loop() {
        let mut rng = Rng::new(11);
        let t = DenseTensor::<f64>::rand_uniform((2, 3, 4, 6), &mut rng, -1.0, 1.0).unwrap();
        let p = t.avg_pool2().unwrap();
        for n in 0..2 {
            for c in 0..3 {
                for oy in 0..2 {
                    for ox in 0..3 {
                        let mut s = 0.0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                s += t.get(n, c, 2 * oy + dy, 2 * ox + dx);
                            }
                        }
                        assert!((p.get(n, c, oy, ox) - s / 4.0).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn pooling_twice_gives_quarter_resolution() {
        let t = DenseTensor::<f32>::zeros((1, 3, 256, 256)).unwrap();
        let p = t.avg_pool2().unwrap().avg_pool2().unwrap();
        assert_eq!(p.dims(), Dims::new(1, 3, 64, 64));
    }

    #[test]
    fn rand_uniform_deterministic() {
        let a = DenseTensor::<f32>::rand_uniform((1, 2, 3, 4), &mut Rng::new(9), 0.0, 1.0).unwrap();
        let b = DenseTensor::<f32>::rand_uniform((1, 2, 3, 4), &mut Rng::new(9), 0.0, 1.0).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn rand_uniform_rejects_empty_range() {
        let r = DenseTensor::<f32>::rand_uniform((1, 1, 1, 1), &mut Rng::new(0), 0.0, 0.0);
        assert!(matches!(r, Err(Error::Range { .. })));
    }

    #[test]
    fn rand_uniform_mean() {
        let t = DenseTensor::<f64>::rand_uniform((1, 1, 1000, 1000), &mut Rng::new(1), 0.0, 1.0).unwrap();
        let mean = t.data().iter().sum::<f64>() / 1e6;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn upsample_then_pool_is_identity() {
        let t = DenseTensor::<f64>::rand_uniform((1, 2, 3, 5), &mut Rng::new(2), -1.0, 1.0).unwrap();
        assert_eq!(t.nearest_upsample2().avg_pool2().unwrap(), t);
    }

    #[test]
    fn pad_crop_round_trip() {
        let t = DenseTensor::<f64>::rand_uniform((2, 2, 3, 4), &mut Rng::new(4), -1.0, 1.0).unwrap();
        let p = t.zero_pad(1);
        assert_eq!(p.dims(), Dims::new(2, 2, 5, 6));
        assert_eq!(p.get(1, 1, 0, 0), 0.0);
        assert_eq!(p.get(1, 1, 1, 1), t.get(1, 1, 0, 0));
        assert_eq!(p.crop(1).unwrap(), t);
    }

    proptest! {
        #[test]
        fn avg_pool2_of_constant_is_exact(c in -1e3f64..1e3, h in 1usize..6, w in 1usize..6, ch in 1usize..4) {
            let t = DenseTensor::<f64>::full((1, ch, 2 * h, 2 * w), c).unwrap();
            let p = t.avg_pool2().unwrap();
            prop_assert!(p.data().iter().all(|&v| v == c));
        }

        #[test]
        fn avg_pool2_commutes_with_channel_permutation(seed in any::<u64>(), swap in 0usize..3) {
            let mut rng = Rng::new(seed);
            let t = DenseTensor::<f64>::rand_uniform((1, 3, 4, 4), &mut rng, -1.0, 1.0).unwrap();
            let perm = |t: &DenseTensor<f64>| {
                let d = t.dims();
                DenseTensor::from_fn(d, |n, c, y, x| {
                    let c2 = if c == swap { (swap + 1) % 3 } else if c == (swap + 1) % 3 { swap } else { c };
                    t.get(n, c2, y, x)
                }).unwrap()
            };
            prop_assert_eq!(perm(&t).avg_pool2().unwrap(), perm(&t.avg_pool2().unwrap()));
        }
    }
}
