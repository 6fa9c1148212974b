use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::block::PadMode;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Layer, NetGrads, Network, Trace};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, Dims};

/// Per-block resolution policy: a stack of stride-2 3×3 convolutions on the
/// 4× downsampled image, a 1×1 convolution to two channels, and a softmax
/// over those channels. Channel 1 is the probability of high resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    body: Network<T>,
    grid: (usize, usize),
}

/// Forward state of the policy for one image.
#[derive(Debug, Clone)]
pub struct PolicyOutput<T> {
    /// Unclamped `s_b` per block.
    pub probs: Vec<f64>,
    trace: Trace<DenseTensor<T>>,
}

/// Probability clamp applied before taking logs.
pub const PROB_CLAMP: f64 = 1e-6;

impl<T: Scalar> PolicyNet<T> {
    /// Policy for `h × w` images split into `block_size` blocks.
    pub fn new(in_channels: usize, h: usize, w: usize, block_size: usize, width: usize, rng: &mut Rng) -> Result<Self> {
        let (gy, gx) = grid_dims(h, w, block_size)?;
        let stages = stride_stages(h, w, gy, gx)?;
        let mut layers = Vec::new();
        let mut c = in_channels;
        for _ in 0..stages {
            layers.push(Layer::Conv(Conv2d::init(c, width, 3, 2, rng)?));
            layers.push(Layer::Relu);
            c = width;
        }
        layers.push(Layer::Conv(Conv2d::init(c, 2, 1, 1, rng)?));
        Ok(PolicyNet {
            body: Network::new(in_channels, layers)?,
            grid: (gy, gx),
        })
    }

    pub fn from_network(body: Network<T>, grid: (usize, usize)) -> Result<Self> {
        if body.out_channels() != 2 {
            return Err(Error::Network("policy network must end in 2 channels".into()));
        }
        Ok(PolicyNet { body, grid })
    }

    pub fn network(&self) -> &Network<T> {
        &self.body
    }

    pub fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.body
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        self.grid
    }

    /// The 4× average-pooled image the policy sees.
    pub fn input(image: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        image.avg_pool2()?.avg_pool2()
    }

    pub fn forward(&self, image: &DenseTensor<T>) -> Result<PolicyOutput<T>> {
        if image.dims().n != 1 {
            return Err(Error::Shape("policy runs on one image at a time".into()));
        }
        let trace = self.body.forward(Self::input(image)?, PadMode::ZeroPad)?;
        let logits = trace.output();
        let d = logits.dims();
        if (d.h, d.w) != self.grid {
            return Err(Error::PolicyGeometry {
                input: d.h,
                input_w: d.w,
                gy: self.grid.0,
                gx: self.grid.1,
            });
        }
        let plane = d.plane();
        let z = logits.data();
        let probs = (0..plane)
            .map(|b| {
                let (z0, z1) = (z[b].as_f64(), z[plane + b].as_f64());
                1.0 / (1.0 + (z0 - z1).exp())
            })
            .collect();
        Ok(PolicyOutput { probs, trace })
    }

    /// Backpropagates `dL/dlogp_b` (`coeff`) for the taken actions to the parameters.
    pub fn backward_logp(&self, out: &PolicyOutput<T>, actions: &[bool], coeff: &[f64]) -> Result<NetGrads<T>> {
        let b = out.probs.len();
        if actions.len() != b || coeff.len() != b {
            return Err(Error::Shape(alloc::format!(
                "{} actions / {} coefficients for {b} blocks",
                actions.len(),
                coeff.len()
            )));
        }
        let gz1: Vec<f64> = (0..b).map(|i| coeff[i] * dlogp_dz1(out.probs[i], actions[i])).collect();
        self.backward_logits(out, &gz1)
    }

    /// Backpropagates a gradient on the high-channel logit `z1` of each block.
    /// The two-way softmax only sees `z1 − z0`, so `z0` receives the negation.
    pub fn backward_logits(&self, out: &PolicyOutput<T>, gz1: &[f64]) -> Result<NetGrads<T>> {
        let b = out.probs.len();
        if gz1.len() != b {
            return Err(Error::Shape(alloc::format!(
                "{} logit gradients for {b} blocks",
                gz1.len()
            )));
        }
        let d = out.trace.output().dims();
        let mut g = vec![T::zero(); 2 * b];
        for i in 0..b {
            g[b + i] = T::of(gz1[i]);
            g[i] = T::of(-gz1[i]);
        }
        let gy = DenseTensor::from_vec(Dims::new(1, 2, d.h, d.w), g)?;
        let mut grads = self.body.zero_grads();
        self.body.backward(&out.trace, gy, PadMode::ZeroPad, &mut grads)?;
        Ok(grads)
    }
}

/// `∂ log p(a) / ∂ z1` for a block with high probability `s`; zero where
/// the clamp is active.
pub fn dlogp_dz1(s: f64, high: bool) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&s) {
        0.0
    } else if high {
        1.0 - s
    } else {
        -s
    }
}

pub fn grid_dims(h: usize, w: usize, block_size: usize) -> Result<(usize, usize)> {
    if block_size == 0 || !h.is_multiple_of(block_size) || !w.is_multiple_of(block_size) {
        return Err(Error::Grid(alloc::format!(
            "{h}x{w} image not divisible into {block_size}px blocks"
        )));
    }
    Ok((h / block_size, w / block_size))
}

fn stride_stages(h: usize, w: usize, gy: usize, gx: usize) -> Result<u32> {
    let err = Error::PolicyGeometry {
        input: h / 4,
        input_w: w / 4,
        gy,
        gx,
    };
    if !h.is_multiple_of(4) || !w.is_multiple_of(4) {
        return Err(err);
    }
    let (ph, pw) = (h / 4, w / 4);
    if ph % gy != 0 || pw % gx != 0 || ph / gy != pw / gx || !(ph / gy).is_power_of_two() {
        return Err(err);
    }
    Ok((ph / gy).trailing_zeros())
}
