use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// 2-D convolution with a square `k × k` kernel (`k` ∈ {1, 3}) and stride 1 or 2.
///
/// A 3×3 layer consumes an input padded by one pixel; a 1×1 layer an unpadded one.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    /// `(cout, cin, k, k)` row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(cin: usize, cout: usize, k: usize, stride: usize) -> Result<Self> {
        if cin == 0 || cout == 0 {
            return Err(Error::Network(alloc::format!("conv with {cin} -> {cout} channels")));
        }
        if k != 1 && k != 3 {
            return Err(Error::Network(alloc::format!("unsupported kernel size {k}")));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::Network(alloc::format!("unsupported stride {stride}")));
        }
        Ok(Conv2d {
            cin,
            cout,
            k,
            stride,
            weight: vec![T::zero(); cout * cin * k * k],
            bias: vec![T::zero(); cout],
        })
    }

    /// Weights uniform in ±sqrt(1 / (k²·cin)), zero bias.
    pub fn init(cin: usize, cout: usize, k: usize, stride: usize, rng: &mut Rng) -> Result<Self> {
        let mut c = Self::zeros(cin, cout, k, stride)?;
        let bound = libm_sqrt(1.0 / (k * k * cin) as f64);
        for w in c.weight.iter_mut() {
            *w = T::of(rng.uniform_range(-bound, bound));
        }
        Ok(c)
    }

    pub fn padding(&self) -> usize {
        self.k / 2
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Multiply-accumulates for an `oh × ow` output.
    pub fn macs(&self, oh: usize, ow: usize) -> u64 {
        (self.k * self.k * self.cin * self.cout) as u64 * (oh * ow) as u64
    }
}

fn libm_sqrt(v: f64) -> f64 {
    num_traits::Float::sqrt(v)
}

/// Weight and bias gradients of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrads<T> {
    pub fn zeros_for(conv: &Conv2d<T>) -> Self {
        ConvGrads {
            weight: vec![T::zero(); conv.weight.len()],
            bias: vec![T::zero(); conv.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += *b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += *b;
        }
    }
}
