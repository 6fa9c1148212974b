//! Finite-difference and adjoint suite over every layer kind and block op.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::fd::{finite_diff, finite_diff_sided, GradReport};
use crate::block::{
    block_combine, block_combine_backward, block_pad, block_pad_backward, block_sample, block_sample_backward,
    BlockGrid, BlockTensor, PadMode,
};
use crate::error::Result;
use crate::nn::{softmax_cross_entropy, Conv2d, Features, Layer, Network};
use crate::policy::{log_prob, PolicyNet};
use crate::rng::Rng;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub grids: usize,
    pub seed: u64,
    pub eps: f64,
    pub tol: f64,
    pub adjoint_tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            grids: 20,
            seed: 0,
            eps: 1e-6,
            tol: 1e-4,
            adjoint_tol: 1e-10,
        }
    }
}

/// `⟨F x, g⟩` against `⟨x, Fᵀ g⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / max(1, |lhs|, |rhs|)`.
    pub err: f64,
    pub tol: f64,
}

impl AdjointReport {
    pub fn new(name: String, lhs: f64, rhs: f64, tol: f64) -> Self {
        let err = (lhs - rhs).abs() / 1f64.max(lhs.abs()).max(rhs.abs());
        AdjointReport {
            name,
            lhs,
            rhs,
            err,
            tol,
        }
    }

    pub fn passed(&self) -> bool {
        self.err <= self.tol
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub grads: Vec<GradReport>,
    pub adjoints: Vec<AdjointReport>,
    pub grids: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.grads.iter().all(GradReport::passed) && self.adjoints.iter().all(AdjointReport::passed)
    }

    pub fn max_grad_rel(&self) -> f64 {
        self.grads.iter().map(|r| r.max_rel).fold(0.0, f64::max)
    }

    pub fn max_adjoint_err(&self) -> f64 {
        self.adjoints.iter().map(|r| r.err).fold(0.0, f64::max)
    }
}

/// Random grid with at least one high and one low block.
pub fn random_mixed_grid(rng: &mut Rng, block_size: usize) -> Result<BlockGrid> {
    let gy = 1 + rng.below(3) as usize;
    let gx = if gy == 1 {
        2 + rng.below(2) as usize
    } else {
        1 + rng.below(3) as usize
    };
    let n = gy * gx;
    let mut a: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
    if a.iter().all(|&h| h) || a.iter().all(|&h| !h) {
        let i = rng.below(n as u64) as usize;
        a[i] = !a[i];
    }
    BlockGrid::new(gy, gx, block_size, a)
}

fn rand_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
}

fn block_to_vec(x: &BlockTensor<f64>) -> Vec<f64> {
    let [h, l] = x.stores();
    h.iter().chain(l).copied().collect()
}

fn block_set(x: &mut BlockTensor<f64>, v: &[f64]) {
    let [h, l] = x.stores_mut();
    let n = h.len();
    h.copy_from_slice(&v[..n]);
    l.copy_from_slice(&v[n..]);
}

fn random_block(rng: &mut Rng, grid: &Arc<BlockGrid>, c: usize, size: usize, pad: usize) -> Result<BlockTensor<f64>> {
    let mut x = BlockTensor::zeros(grid.clone(), c, size, pad)?;
    x.fill_with(|| rng.uniform_range(-1.0, 1.0));
    Ok(x)
}

/// Small networks, one per layer kind, plus a miniature segmentation net.
pub fn layer_cases(c: usize, rng: &mut Rng) -> Result<Vec<(&'static str, Network<f64>)>> {
    let conv = |cin, cout, k, s, rng: &mut Rng| -> Result<Layer<f64>> {
        let mut l = Conv2d::init(cin, cout, k, s, rng)?;
        // non-zero biases so their gradients are exercised
        for b in &mut l.bias {
            *b = rng.uniform_range(-0.5, 0.5);
        }
        Ok(Layer::Conv(l))
    };
    Ok(vec![
        ("conv3x3", Network::new(c, vec![conv(c, 3, 3, 1, rng)?])?),
        ("conv3x3_stride2", Network::new(c, vec![conv(c, 3, 3, 2, rng)?])?),
        ("conv1x1", Network::new(c, vec![conv(c, 3, 1, 1, rng)?])?),
        ("relu", Network::new(c, vec![conv(c, 3, 3, 1, rng)?, Layer::Relu])?),
        (
            "maxpool2",
            Network::new(c, vec![conv(c, 2, 3, 1, rng)?, Layer::MaxPool2])?,
        ),
        (
            "upsample2",
            Network::new(c, vec![conv(c, 2, 3, 2, rng)?, Layer::Upsample2])?,
        ),
        (
            "residual_add",
            Network::new(c, vec![conv(c, c, 3, 1, rng)?, Layer::ResidualAdd { skip: 0 }])?,
        ),
        ("segnet", Network::segnet_with_width(c, 3, 4, 3, rng)?),
    ])
}

/// Gradient checks of a network in block mode: parameters and input image.
pub fn check_network_block(
    name: &str,
    net: &Network<f64>,
    grid: &Arc<BlockGrid>,
    mode: PadMode,
    cfg: &SuiteConfig,
    rng: &mut Rng,
) -> Result<[GradReport; 2]> {
    let (h, w) = grid.image_size();
    let x = DenseTensor::from_vec((1, net.in_channels(), h, w), rand_vec(rng, net.in_channels() * h * w))?;
    let run = net.run_block(&x, grid.clone(), mode)?;
    let r = DenseTensor::from_vec(run.output.dims(), rand_vec(rng, run.output.dims().len()))?;
    let mut grads = net.zero_grads();
    let gx = net.run_block_backward(&run, &r, mode, &mut grads)?;

    let objective = |net: &Network<f64>, x: &DenseTensor<f64>| -> f64 {
        net.run_block(x, grid.clone(), mode)
            .and_then(|o| o.output.dot(&r))
            .unwrap_or(f64::NAN)
    };
    let theta = net.params_to_vec();
    let mut probe = net.clone();
    let fd_theta = finite_diff_sided(
        |p| {
            probe.set_params(p).expect("parameter count is fixed");
            objective(&probe, &x)
        },
        &theta,
        cfg.eps,
    );
    let fd_x = finite_diff_sided(
        |v| objective(net, &DenseTensor::from_vec(x.dims(), v.to_vec()).expect("fixed dims")),
        x.data(),
        cfg.eps,
    );
    let tag = format!("{name}/{}", mode.name());
    Ok([
        GradReport::compare_sided(&format!("{tag}/params"), &grads.to_vec(), &fd_theta, cfg.tol),
        GradReport::compare_sided(&format!("{tag}/input"), gx.data(), &fd_x, cfg.tol),
    ])
}

/// Gradient checks of a network in dense mode.
pub fn check_network_dense(
    name: &str,
    net: &Network<f64>,
    h: usize,
    w: usize,
    cfg: &SuiteConfig,
    rng: &mut Rng,
) -> Result<[GradReport; 2]> {
    let x = DenseTensor::from_vec((1, net.in_channels(), h, w), rand_vec(rng, net.in_channels() * h * w))?;
    let trace = net.forward(x.clone(), PadMode::ZeroPad)?;
    let out = trace.output();
    let r = DenseTensor::from_vec(out.dims(), rand_vec(rng, out.dims().len()))?;
    let mut grads = net.zero_grads();
    let gx = net.backward(&trace, r.clone(), PadMode::ZeroPad, &mut grads)?;
    let objective =
        |net: &Network<f64>, x: &DenseTensor<f64>| net.run_dense(x).and_then(|o| o.dot(&r)).unwrap_or(f64::NAN);
    let mut probe = net.clone();
    let fd_theta = finite_diff_sided(
        |p| {
            probe.set_params(p).expect("parameter count is fixed");
            objective(&probe, &x)
        },
        &net.params_to_vec(),
        cfg.eps,
    );
    let fd_x = finite_diff_sided(
        |v| objective(net, &DenseTensor::from_vec(x.dims(), v.to_vec()).expect("fixed dims")),
        x.data(),
        cfg.eps,
    );
    Ok([
        GradReport::compare_sided(&format!("{name}/dense/params"), &grads.to_vec(), &fd_theta, cfg.tol),
        GradReport::compare_sided(&format!("{name}/dense/input"), gx.data(), &fd_x, cfg.tol),
    ])
}

/// Finite-difference and adjoint checks of the three block ops on one grid.
pub fn check_block_ops(grid: &Arc<BlockGrid>, cfg: &SuiteConfig, rng: &mut Rng, out: &mut SuiteReport) -> Result<()> {
    let c = 2;
    let s = grid.block_size();
    let (h, w) = grid.image_size();

    // sample
    let x = DenseTensor::from_vec((1, c, h, w), rand_vec(rng, c * h * w))?;
    let g = random_block(rng, grid, c, s, 0)?;
    let lhs = block_sample(&x, grid.clone())?.dot(&g)?;
    let back = block_sample_backward(&g)?;
    out.adjoints.push(AdjointReport::new(
        "block_sample".into(),
        lhs,
        x.dot(&back)?,
        cfg.adjoint_tol,
    ));
    let fd = finite_diff(
        |v| {
            let x = DenseTensor::from_vec((1, c, h, w), v.to_vec()).expect("fixed dims");
            block_sample(&x, grid.clone())
                .and_then(|b| b.dot(&g))
                .unwrap_or(f64::NAN)
        },
        x.data(),
        cfg.eps,
    );
    out.grads
        .push(GradReport::compare("block_sample/input", back.data(), &fd, cfg.tol));

    // pad, every mode
    for mode in PadMode::ALL {
        let x = random_block(rng, grid, c, s, 0)?;
        let g = random_block(rng, grid, c, s, 1)?;
        let lhs = block_pad(&x, 1, mode)?.dot(&g)?;
        let back = block_pad_backward(&g, mode)?;
        out.adjoints.push(AdjointReport::new(
            format!("block_pad/{}", mode.name()),
            lhs,
            x.dot(&back)?,
            cfg.adjoint_tol,
        ));
        let mut probe = x.clone();
        let fd = finite_diff(
            |v| {
                block_set(&mut probe, v);
                block_pad(&probe, 1, mode).and_then(|p| p.dot(&g)).unwrap_or(f64::NAN)
            },
            &block_to_vec(&x),
            cfg.eps,
        );
        out.grads.push(GradReport::compare(
            &format!("block_pad/{}/input", mode.name()),
            &block_to_vec(&back),
            &fd,
            cfg.tol,
        ));
    }

    // combine
    let x = random_block(rng, grid, c, s, 0)?;
    let g = DenseTensor::from_vec((1, c, h, w), rand_vec(rng, c * h * w))?;
    let lhs = block_combine(&x)?.dot(&g)?;
    let back = block_combine_backward(&g, grid.clone(), s)?;
    out.adjoints.push(AdjointReport::new(
        "block_combine".into(),
        lhs,
        x.dot(&back)?,
        cfg.adjoint_tol,
    ));
    let mut probe = x.clone();
    let fd = finite_diff(
        |v| {
            block_set(&mut probe, v);
            block_combine(&probe).and_then(|d| d.dot(&g)).unwrap_or(f64::NAN)
        },
        &block_to_vec(&x),
        cfg.eps,
    );
    out.grads.push(GradReport::compare(
        "block_combine/input",
        &block_to_vec(&back),
        &fd,
        cfg.tol,
    ));

    // layer-level adjoints in block form
    let x = random_block(rng, grid, c, s, 0)?;
    let up = x.upsample2()?;
    let g = random_block(rng, grid, c, up.size(), 0)?;
    out.adjoints.push(AdjointReport::new(
        "upsample2/block".into(),
        up.dot(&g)?,
        x.dot(&g.upsample2_backward()?)?,
        cfg.adjoint_tol,
    ));
    let (pooled, argmax) = x.maxpool2()?;
    let g = random_block(rng, grid, c, pooled.size(), 0)?;
    let back = x.maxpool2_backward(&argmax, &g)?;
    out.adjoints.push(AdjointReport::new(
        "maxpool2/block".into(),
        pooled.dot(&g)?,
        x.dot(&back)?,
        cfg.adjoint_tol,
    ));
    Ok(())
}

/// Softmax cross-entropy: analytic logit gradient against differences.
pub fn check_cross_entropy(cfg: &SuiteConfig, rng: &mut Rng) -> Result<GradReport> {
    let (k, h, w) = (4, 3, 5);
    let z = DenseTensor::from_vec((1, k, h, w), rand_vec(rng, k * h * w))?;
    let labels: Vec<u8> = (0..h * w).map(|_| rng.below(k as u64) as u8).collect();
    let ce = softmax_cross_entropy(&z, &labels)?;
    let fd = finite_diff(
        |v| {
            let z = DenseTensor::from_vec((1, k, h, w), v.to_vec()).expect("fixed dims");
            softmax_cross_entropy(&z, &labels).map(|c| c.loss).unwrap_or(f64::NAN)
        },
        z.data(),
        cfg.eps,
    );
    Ok(GradReport::compare(
        "softmax_cross_entropy",
        ce.grad.data(),
        &fd,
        cfg.tol,
    ))
}

/// Policy score: `Σ_b c_b log p_b` for fixed actions.
pub fn check_policy_score(cfg: &SuiteConfig, rng: &mut Rng) -> Result<GradReport> {
    let mut policy = PolicyNet::<f64>::new(3, 32, 32, 8, 3, rng)?;
    let theta = rand_vec(rng, policy.network().param_count());
    policy.network_mut().set_params(&theta)?;
    let image = DenseTensor::from_vec((1, 3, 32, 32), rand_vec(rng, 3 * 32 * 32))?;
    let out = policy.forward(&image)?;
    let b = out.probs.len();
    let actions: Vec<bool> = (0..b).map(|_| rng.bernoulli(0.5)).collect();
    let coeff = rand_vec(rng, b);
    let analytic = policy.backward_logp(&out, &actions, &coeff)?.to_vec();
    let mut probe = policy.clone();
    let fd = finite_diff(
        |p| {
            probe.network_mut().set_params(p).expect("parameter count is fixed");
            match probe.forward(&image) {
                Ok(o) => o
                    .probs
                    .iter()
                    .zip(&actions)
                    .zip(&coeff)
                    .map(|((&s, &a), c)| c * log_prob(s, a))
                    .sum(),
                Err(_) => f64::NAN,
            }
        },
        &theta,
        cfg.eps,
    );
    Ok(GradReport::compare("policy/logp", &analytic, &fd, cfg.tol))
}

/// Runs the full suite on `cfg.grids` random mixed-resolution grids,
/// alternating between the two sampling pad modes.
pub fn gradcheck_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut rng = Rng::new(cfg.seed);
    let mut report = SuiteReport {
        grids: cfg.grids,
        ..SuiteReport::default()
    };
    report.grads.push(check_cross_entropy(cfg, &mut rng)?);
    report.grads.push(check_policy_score(cfg, &mut rng)?);
    for i in 0..cfg.grids {
        let mode = if i % 2 == 0 {
            PadMode::AverageSample
        } else {
            PadMode::StridedSample
        };
        let grid = Arc::new(random_mixed_grid(&mut rng, 8)?);
        check_block_ops(&grid, cfg, &mut rng, &mut report)?;
        let c = 1 + rng.below(2) as usize;
        for (name, net) in layer_cases(c, &mut rng)? {
            report
                .grads
                .extend(check_network_block(name, &net, &grid, mode, cfg, &mut rng)?);
            if i < 2 {
                report
                    .grads
                    .extend(check_network_dense(name, &net, 8, 12, cfg, &mut rng)?);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_grids_are_mixed() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let g = random_mixed_grid(&mut rng, 8).unwrap();
            assert!(g.high_count() > 0 && g.low_count() > 0);
        }
    }

    #[test]
    fn small_suite_passes() {
        let cfg = SuiteConfig {
            grids: 2,
            seed: 1,
            ..SuiteConfig::default()
        };
        let r = gradcheck_suite(&cfg).unwrap();
        for g in &r.grads {
            assert!(g.passed(), "{} max rel {}", g.name, g.max_rel);
        }
        for a in &r.adjoints {
            assert!(a.passed(), "{} err {}", a.name, a.err);
        }
        assert!(r.grads.iter().any(|g| g.name.starts_with("segnet/strided")));
    }

    #[test]
    fn detects_wrong_gradient() {
        let r = GradReport::compare("x", &[1.0, 2.0], &[1.0, -2.0], 1e-4);
        assert!(!r.passed());
    }
}
