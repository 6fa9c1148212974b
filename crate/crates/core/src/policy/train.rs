use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::net::PolicyNet;
use super::reinforce::{policy_loss, policy_loss_coeffs, sample_actions, threshold_actions, ActionSample, Estimator};
use super::reward::RewardBundle;
use crate::block::{BlockGrid, PadMode};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, count_macs_block, count_macs_dense, predict, softmax_cross_entropy, AdamConfig, AdamState, BlockRun,
    CrossEntropy, NetGrads, Network,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    /// Target high-resolution fraction.
    pub tau: f64,
    /// Weight of the complexity reward.
    pub gamma: f64,
    /// Weight of the policy loss.
    pub beta: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub block_size: usize,
    pub eval_threshold: f64,
    pub estimator: Estimator,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            tau: 0.5,
            gamma: 1.0,
            beta: 0.05,
            adam: AdamConfig::default(),
            batch_size: 8,
            epochs: 30,
            block_size: 32,
            eval_threshold: 0.5,
            estimator: Estimator::PerBlock,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if !(self.gamma >= 0.0) || !(self.beta >= 0.0) {
            return bad("gamma and beta must be non-negative");
        }
        if !(self.adam.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.block_size < 2 || !self.block_size.is_multiple_of(2) {
            return bad("block size must be even and at least 2");
        }
        Ok(())
    }
}

/// How block resolutions are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resolution {
    /// From the policy.
    #[default]
    Dynamic,
    AllHigh,
    AllLow,
}

impl Resolution {
    fn fixed(self, blocks: usize) -> Option<Vec<bool>> {
        match self {
            Resolution::Dynamic => None,
            Resolution::AllHigh => Some(vec![true; blocks]),
            Resolution::AllLow => Some(vec![false; blocks]),
        }
    }
}

/// Segmentation network, policy and their optimizer states.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub seg: Network<T>,
    pub policy: PolicyNet<T>,
    pub seg_adam: AdamState<T>,
    pub policy_adam: AdamState<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(seg: Network<T>, policy: PolicyNet<T>) -> Self {
        let seg_adam = AdamState::new(&seg.param_slices());
        let policy_adam = AdamState::new(&policy.network().param_slices());
        Model {
            seg,
            policy,
            seg_adam,
            policy_adam,
        }
    }

    /// Default pair for `channels × h × w` images and `classes` labels.
    pub fn init(
        channels: usize,
        classes: usize,
        h: usize,
        w: usize,
        block_size: usize,
        policy_width: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let seg = Network::segnet(channels, classes, rng)?;
        let policy = PolicyNet::new(channels, h, w, block_size, policy_width, rng)?;
        Ok(Model::new(seg, policy))
    }
}

/// Everything the block pipeline produces for one image and action vector.
#[derive(Debug, Clone)]
pub struct PipelineOutput<T> {
    pub run: BlockRun<T>,
    pub ce: CrossEntropy<T>,
    pub rewards: RewardBundle,
}

/// Block-samples `image` under `grid`, runs the segmentation network and
/// scores the result. `L_task` is the image's mean loss.
pub fn run_pipeline<T: Scalar>(
    seg: &Network<T>,
    image: &DenseTensor<T>,
    labels: &[u8],
    grid: Arc<BlockGrid>,
    hyper: &Hyper,
    mode: PadMode,
) -> Result<PipelineOutput<T>> {
    let run = seg.run_block(image, grid.clone(), mode)?;
    let ce = softmax_cross_entropy(&run.output, labels)?;
    let rewards = RewardBundle::new(&ce.map, &grid, ce.loss, hyper.gamma, hyper.tau)?;
    Ok(PipelineOutput { run, ce, rewards })
}

/// Per-image gradients before batch averaging.
#[derive(Debug, Clone)]
pub struct ImageGrads<T> {
    pub seg: NetGrads<T>,
    /// `None` when the policy does not take part.
    pub policy: Option<NetGrads<T>>,
    pub loss: f64,
    pub policy_loss: f64,
    pub sigma: f64,
    pub mean_reward: f64,
    pub macs: u64,
}

/// Forward and backward pass of both networks on one image.
pub fn image_grads<T: Scalar>(
    model: &Model<T>,
    image: &DenseTensor<T>,
    labels: &[u8],
    hyper: &Hyper,
    mode: PadMode,
    resolution: Resolution,
    rng: &mut Rng,
) -> Result<ImageGrads<T>> {
    let d = image.dims();
    let (gy, gx) = model.policy.grid_dims();
    let (sample, out) = match resolution.fixed(gy * gx) {
        Some(actions) => (ActionSample::from_actions(&vec![0.5; actions.len()], actions), None),
        None => {
            let out = model.policy.forward(image)?;
            (sample_actions(&out.probs, rng), Some(out))
        }
    };
    let grid = Arc::new(BlockGrid::with_probs(
        gy,
        gx,
        d.h / gy,
        sample.probs.clone(),
        sample.actions.clone(),
    )?);
    let p = run_pipeline(&model.seg, image, labels, grid, hyper, mode)?;
    let mut seg = model.seg.zero_grads();
    model.seg.run_block_backward(&p.run, &p.ce.grad, mode, &mut seg)?;
    let policy = match out {
        Some(out) if hyper.beta != 0.0 => {
            let weights = hyper.estimator.weights(&p.rewards.combined);
            let coeff = policy_loss_coeffs(&weights, hyper.beta, 1);
            Some(model.policy.backward_logp(&out, &sample.actions, &coeff)?)
        }
        _ => None,
    };
    Ok(ImageGrads {
        seg,
        policy,
        loss: p.ce.loss,
        policy_loss: policy_loss(&sample.logp, &p.rewards.combined, hyper.beta, 1),
        sigma: p.rewards.sigma,
        mean_reward: p.rewards.mean(),
        macs: p.run.trace.macs.total,
    })
}

/// Batch means reported by [`train_step`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub sigma: f64,
    pub mean_reward: f64,
    pub macs: f64,
}

/// Averages per-image gradients in order and applies one Adam step to each
/// network. The policy is left untouched when no image produced a policy
/// gradient.
pub fn apply_grads<T: Scalar>(model: &mut Model<T>, per_image: &[ImageGrads<T>], hyper: &Hyper) -> Result<StepStats> {
    let n = per_image.len();
    if n == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    let inv = T::of(1.0 / n as f64);
    let mut seg = model.seg.zero_grads();
    let mut policy: Option<NetGrads<T>> = None;
    let mut stats = StepStats::default();
    for g in per_image {
        seg.add_assign(&g.seg);
        if let Some(pg) = &g.policy {
            match &mut policy {
                Some(acc) => acc.add_assign(pg),
                None => policy = Some(pg.clone()),
            }
        }
        stats.loss += g.loss;
        stats.policy_loss += g.policy_loss;
        stats.sigma += g.sigma;
        stats.mean_reward += g.mean_reward;
        stats.macs += g.macs as f64;
    }
    seg.scale(inv);
    adam_step(
        &mut model.seg.param_slices_mut(),
        &seg.slices(),
        &mut model.seg_adam,
        &hyper.adam,
    )?;
    if let Some(mut pg) = policy {
        pg.scale(inv);
        adam_step(
            &mut model.policy.network_mut().param_slices_mut(),
            &pg.slices(),
            &mut model.policy_adam,
            &hyper.adam,
        )?;
    }
    let k = 1.0 / n as f64;
    stats.loss *= k;
    stats.policy_loss *= k;
    stats.sigma *= k;
    stats.mean_reward *= k;
    stats.macs *= k;
    Ok(stats)
}

/// Random stream for image `i` of a step whose seed is `step_seed`.
pub fn image_rng(step_seed: u64, i: usize) -> Rng {
    Rng::new(step_seed).fork(i as u64)
}

/// One joint update on a batch of `(image, labels)` pairs.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    batch: &[(&DenseTensor<T>, &[u8])],
    hyper: &Hyper,
    mode: PadMode,
    resolution: Resolution,
    rng: &mut Rng,
) -> Result<StepStats> {
    let step_seed = rng.next_u64();
    let grads = batch
        .iter()
        .enumerate()
        .map(|(i, (x, y))| image_grads(model, x, y, hyper, mode, resolution, &mut image_rng(step_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    apply_grads(model, &grads, hyper)
}

/// Inference result for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalImage {
    pub probs: Vec<f64>,
    pub actions: Vec<bool>,
    pub sigma: f64,
    pub correct: usize,
    pub pixels: usize,
    pub block_macs: u64,
    pub dense_macs: u64,
    /// Pixels per class.
    pub class_pixels: Vec<usize>,
    /// Pixels per class that fall in high-resolution blocks.
    pub class_high: Vec<usize>,
}

impl EvalImage {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.pixels as f64
    }
}

/// Thresholded inference on one image.
pub fn evaluate_image<T: Scalar>(
    model: &Model<T>,
    image: &DenseTensor<T>,
    labels: &[u8],
    threshold: f64,
    mode: PadMode,
    resolution: Resolution,
) -> Result<EvalImage> {
    let d = image.dims();
    let (gy, gx) = model.policy.grid_dims();
    let probs = match resolution {
        Resolution::Dynamic => model.policy.forward(image)?.probs,
        _ => vec![0.5; gy * gx],
    };
    let actions = resolution
        .fixed(gy * gx)
        .unwrap_or_else(|| threshold_actions(&probs, threshold));
    let grid = Arc::new(BlockGrid::with_probs(gy, gx, d.h / gy, probs.clone(), actions.clone())?);
    let run = model.seg.run_block(image, grid.clone(), mode)?;
    let pred = predict(&run.output);
    if pred.len() != labels.len() {
        return Err(Error::Shape(alloc::format!(
            "{} labels for {} pixels",
            labels.len(),
            pred.len()
        )));
    }
    let classes = model.seg.out_channels();
    let mut class_pixels = vec![0; classes];
    let mut class_high = vec![0; classes];
    let s = grid.block_size();
    let mut correct = 0;
    for (i, (&p, &l)) in pred.iter().zip(labels).enumerate() {
        let c = l as usize;
        if c >= classes {
            return Err(Error::Label { label: c, classes });
        }
        correct += usize::from(p == l);
        class_pixels[c] += 1;
        let (y, x) = (i / d.w, i % d.w);
        if actions[(y / s) * gx + x / s] {
            class_high[c] += 1;
        }
    }
    Ok(EvalImage {
        sigma: grid.high_fraction(),
        probs,
        actions,
        correct,
        pixels: pred.len(),
        block_macs: count_macs_block(&model.seg, &grid)?.total,
        dense_macs: count_macs_dense(&model.seg, d.h, d.w).total,
        class_pixels,
        class_high,
    })
}
