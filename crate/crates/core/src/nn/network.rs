use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{Conv2d, ConvGrads};
use super::features::Features;
use super::macs::MacCount;
use crate::block::{block_combine, block_combine_backward, block_sample, block_sample_backward, BlockGrid, PadMode};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Relu,
    MaxPool2,
    Upsample2,
    /// Adds activation `skip` (0 = network input, `i` = output of layer `i-1`).
    ResidualAdd {
        skip: usize,
    },
}

impl<T> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2 => "maxpool2",
            Layer::Upsample2 => "upsample2",
            Layer::ResidualAdd { .. } => "residual_add",
        }
    }
}

/// A feed-forward layer stack with optional skip connections.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    in_channels: usize,
    layers: Vec<Layer<T>>,
    // (channels, log2 downscale) of every activation
    shapes: Vec<(usize, i32)>,
}

/// Activations retained by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace<F> {
    pub acts: Vec<F>,
    prepared: Vec<Option<F>>,
    argmax: Vec<Option<Vec<u32>>>,
    pub macs: MacCount,
}

impl<F> Trace<F> {
    pub fn output(&self) -> &F {
        self.acts.last().expect("trace holds the input")
    }
}

/// Parameter gradients, one entry per layer (`None` for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads<T> {
    pub layers: Vec<Option<ConvGrads<T>>>,
}

impl<T: Scalar> NetGrads<T> {
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.add_assign(b);
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.layers.iter_mut().flatten() {
            g.weight.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| *v == T::zero()))
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(in_channels: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        if in_channels == 0 {
            return Err(Error::Network("zero input channels".into()));
        }
        let mut shapes = vec![(in_channels, 0i32)];
        for (i, layer) in layers.iter().enumerate() {
            let (c, scale) = shapes[i];
            let next = match layer {
                Layer::Conv(conv) => {
                    if conv.cin != c {
                        return Err(Error::Network(format!(
                            "layer {i}: conv expects {} channels, receives {c}",
                            conv.cin
                        )));
                    }
                    (conv.cout, scale + (conv.stride == 2) as i32)
                }
                Layer::Relu => (c, scale),
                Layer::MaxPool2 => (c, scale + 1),
                Layer::Upsample2 => (c, scale - 1),
                Layer::ResidualAdd { skip } => {
                    if *skip > i {
                        return Err(Error::Network(format!("layer {i}: skip {skip} refers forward")));
                    }
                    if shapes[*skip] != (c, scale) {
                        return Err(Error::Network(format!(
                            "layer {i}: skip activation {skip} has shape {:?}, main path {:?}",
                            shapes[*skip],
                            (c, scale)
                        )));
                    }
                    (c, scale)
                }
            };
            if next.1 < 0 {
                return Err(Error::Network(format!("layer {i}: upsampled above input resolution")));
            }
            shapes.push(next);
        }
        Ok(Network {
            in_channels,
            layers,
            shapes,
        })
    }

    /// Desk-scale segmentation network: conv3×3(3→16) / ReLU / conv3×3(16→32, stride 2) /
    /// ReLU / residual block of two conv3×3(32→32) / upsample ×2 / conv1×1(32→classes).
    pub fn segnet(in_channels: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        Self::segnet_with_width(in_channels, 16, 32, classes, rng)
    }

    pub fn segnet_with_width(in_channels: usize, c1: usize, c2: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        let layers = vec![
            Layer::Conv(Conv2d::init(in_channels, c1, 3, 1, rng)?),
            Layer::Relu,
            Layer::Conv(Conv2d::init(c1, c2, 3, 2, rng)?),
            Layer::Relu,
            Layer::Conv(Conv2d::init(c2, c2, 3, 1, rng)?),
            Layer::Relu,
            Layer::Conv(Conv2d::init(c2, c2, 3, 1, rng)?),
            Layer::ResidualAdd { skip: 4 },
            Layer::Relu,
            Layer::Upsample2,
            Layer::Conv(Conv2d::init(c2, classes, 1, 1, rng)?),
        ];
        Self::new(in_channels, layers)
    }

    /// One residual block: conv3×3 / ReLU / conv3×3 / add input / ReLU.
    pub fn residual_block(channels: usize, rng: &mut Rng) -> Result<Self> {
        let layers = vec![
            Layer::Conv(Conv2d::init(channels, channels, 3, 1, rng)?),
            Layer::Relu,
            Layer::Conv(Conv2d::init(channels, channels, 3, 1, rng)?),
            Layer::ResidualAdd { skip: 0 },
            Layer::Relu,
        ];
        Self::new(channels, layers)
    }

    /// Same network with parameters converted to `U`.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(Conv2d {
                    cin: c.cin,
                    cout: c.cout,
                    k: c.k,
                    stride: c.stride,
                    weight: c.weight.iter().map(|v| U::of(v.as_f64())).collect(),
                    bias: c.bias.iter().map(|v| U::of(v.as_f64())).collect(),
                }),
                Layer::Relu => Layer::Relu,
                Layer::MaxPool2 => Layer::MaxPool2,
                Layer::Upsample2 => Layer::Upsample2,
                Layer::ResidualAdd { skip } => Layer::ResidualAdd { skip: *skip },
            })
            .collect();
        Network {
            in_channels: self.in_channels,
            layers,
            shapes: self.shapes.clone(),
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.layers.iter_mut()
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.shapes.last().unwrap().0
    }

    /// Largest downscale factor reached by any activation (as log2).
    pub fn max_downscale(&self) -> u32 {
        self.shapes.iter().map(|s| s.1).max().unwrap_or(0) as u32
    }

    /// Downscale of the output relative to the input (as log2).
    pub fn output_downscale(&self) -> i32 {
        self.shapes.last().unwrap().1
    }

    pub fn convs(&self) -> impl Iterator<Item = &Conv2d<T>> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.convs().map(|c| c.param_count()).sum()
    }

    /// Parameter tensors in declaration order (weight then bias per conv).
    pub fn param_slices(&self) -> Vec<&[T]> {
        self.convs()
            .flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(c),
                _ => None,
            })
            .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
            .collect()
    }

    pub fn params_to_vec(&self) -> Vec<T> {
        self.param_slices().concat()
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DataLength {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> NetGrads<T> {
        NetGrads {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv(c) => Some(ConvGrads::zeros_for(c)),
                    _ => None,
                })
                .collect(),
        }
    }

    /// Forward pass on either representation, retaining activations.
    pub fn forward<F: Features<T>>(&self, x: F, mode: PadMode) -> Result<Trace<F>> {
        if x.channels() != self.in_channels {
            return Err(Error::Channels {
                expected: self.in_channels,
                got: x.channels(),
            });
        }
        let n = self.layers.len();
        let mut acts = Vec::with_capacity(n + 1);
        let mut prepared = Vec::with_capacity(n);
        let mut argmax = Vec::with_capacity(n);
        let mut macs = MacCount::with_layers(n);
        acts.push(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &acts[i];
            let (y, prep, arg) = match layer {
                Layer::Conv(conv) => {
                    if conv.k == 3 {
                        let p = x.prepare_conv(3, mode)?;
                        let (y, m) = p.conv(conv)?;
                        macs.per_layer[i] = m;
                        (y, Some(p), None)
                    } else {
                        let (y, m) = x.conv(conv)?;
                        macs.per_layer[i] = m;
                        (y, None, None)
                    }
                }
                Layer::Relu => (x.relu(), None, None),
                Layer::MaxPool2 => {
                    let (y, a) = x.maxpool2()?;
                    (y, None, Some(a))
                }
                Layer::Upsample2 => (x.upsample2()?, None, None),
                Layer::ResidualAdd { skip } => (x.add(&acts[*skip])?, None, None),
            };
            acts.push(y);
            prepared.push(prep);
            argmax.push(arg);
        }
        macs.total = macs.per_layer.iter().sum();
        Ok(Trace {
            acts,
            prepared,
            argmax,
            macs,
        })
    }

    /// Backpropagates `gy` (gradient of the output). Parameter gradients
    /// accumulate into `grads`; returns the gradient of the input.
    pub fn backward<F: Features<T>>(
        &self,
        trace: &Trace<F>,
        gy: F,
        mode: PadMode,
        grads: &mut NetGrads<T>,
    ) -> Result<F> {
        let n = self.layers.len();
        if trace.acts.len() != n + 1 {
            return Err(Error::Network("trace does not belong to this network".into()));
        }
        let mut g: Vec<Option<F>> = (0..=n).map(|_| None).collect();
        g[n] = Some(gy);
        for i in (0..n).rev() {
            let Some(gout) = g[i + 1].take() else {
                continue;
            };
            let x = &trace.acts[i];
            let gin = match &self.layers[i] {
                Layer::Conv(conv) => {
                    let cg = grads.layers[i]
                        .as_mut()
                        .ok_or_else(|| Error::Network("gradient slot missing".into()))?;
                    if conv.k == 3 {
                        let p = trace.prepared[i]
                            .as_ref()
                            .ok_or_else(|| Error::Network("missing activation".into()))?;
                        p.conv_backward(conv, &gout, cg)?.prepare_conv_backward(3, mode)?
                    } else {
                        x.conv_backward(conv, &gout, cg)?
                    }
                }
                Layer::Relu => x.relu_backward(&gout)?,
                Layer::MaxPool2 => {
                    let a = trace.argmax[i]
                        .as_ref()
                        .ok_or_else(|| Error::Network("missing argmax".into()))?;
                    x.maxpool2_backward(a, &gout)?
                }
                Layer::Upsample2 => gout.upsample2_backward()?,
                Layer::ResidualAdd { skip } => {
                    accumulate(&mut g[*skip], &gout)?;
                    gout
                }
            };
            accumulate(&mut g[i], &gin)?;
        }
        g[0].take()
            .ok_or_else(|| Error::Network("no gradient reached the input".into()))
    }

    /// Dense execution of a batch.
    pub fn run_dense(&self, x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        Ok(self.forward(x.clone(), PadMode::ZeroPad)?.acts.pop().unwrap())
    }

    /// Block execution of one image: sample → layers → combine.
    pub fn run_block(
        &self,
        x: &DenseTensor<T>,
        grid: alloc::sync::Arc<BlockGrid>,
        mode: PadMode,
    ) -> Result<BlockRun<T>> {
        let bx = block_sample(x, grid)?;
        let trace = self.forward(bx, mode)?;
        let out = block_combine(trace.output())?;
        Ok(BlockRun { trace, output: out })
    }

    /// Backpropagates a dense output gradient through a [`BlockRun`],
    /// returning the gradient of the dense input image.
    pub fn run_block_backward(
        &self,
        run: &BlockRun<T>,
        gy: &DenseTensor<T>,
        mode: PadMode,
        grads: &mut NetGrads<T>,
    ) -> Result<DenseTensor<T>> {
        let last = run.trace.output();
        let g = block_combine_backward(gy, last.grid().clone(), last.size())?;
        let gx = self.backward(&run.trace, g, mode, grads)?;
        block_sample_backward(&gx)
    }
}

fn accumulate<T: Scalar, F: Features<T>>(slot: &mut Option<F>, g: &F) -> Result<()> {
    match slot {
        Some(s) => s.add_assign(g),
        None => {
            *slot = Some(g.clone());
            Ok(())
        }
    }
}

/// Output and retained activations of a block-mode run.
#[derive(Debug, Clone)]
pub struct BlockRun<T> {
    pub trace: Trace<crate::block::BlockTensor<T>>,
    pub output: DenseTensor<T>,
}
