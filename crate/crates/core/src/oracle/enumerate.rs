//! Brute-force expectation over every action vector.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::fd::finite_diff;
use crate::block::{BlockGrid, PadMode};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::policy::{dlogp_dz1, log_prob, run_pipeline, Estimator, Hyper, PolicyNet};
use crate::rng::Rng;
use crate::tensor::DenseTensor;

/// Largest block count accepted for enumeration.
pub const MAX_ENUM_BLOCKS: usize = 16;

/// Per-block rewards `R_b(a)` for all `2^B` action vectors. Bit `b` of the
/// index is `a_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    blocks: usize,
    rewards: Vec<Vec<f64>>,
}

pub fn actions_of(index: usize, blocks: usize) -> Vec<bool> {
    (0..blocks).map(|b| index >> b & 1 == 1).collect()
}

fn check_blocks(blocks: usize) -> Result<()> {
    if blocks == 0 || blocks > MAX_ENUM_BLOCKS {
        return Err(Error::TooManyBlocks {
            blocks,
            limit: MAX_ENUM_BLOCKS,
        });
    }
    Ok(())
}

impl RewardTable {
    pub fn from_fn(blocks: usize, mut f: impl FnMut(&[bool]) -> Vec<f64>) -> Result<Self> {
        check_blocks(blocks)?;
        let rewards = (0..1usize << blocks)
            .map(|i| {
                let r = f(&actions_of(i, blocks));
                if r.len() == blocks {
                    Ok(r)
                } else {
                    Err(Error::Shape(alloc::format!("{} rewards for {blocks} blocks", r.len())))
                }
            })
            .collect::<Result<_>>()?;
        Ok(RewardTable { blocks, rewards })
    }

    /// Rewards from running the block pipeline once per action vector.
    pub fn from_pipeline(
        seg: &Network<f64>,
        image: &DenseTensor<f64>,
        labels: &[u8],
        grid: (usize, usize),
        hyper: &Hyper,
        mode: PadMode,
    ) -> Result<Self> {
        let (gy, gx) = grid;
        let blocks = gy * gx;
        check_blocks(blocks)?;
        let size = image.dims().h / gy;
        let mut err = None;
        let table = RewardTable::from_fn(blocks, |a| {
            let run = BlockGrid::new(gy, gx, size, a.to_vec())
                .and_then(|g| run_pipeline(seg, image, labels, Arc::new(g), hyper, mode));
            match run {
                Ok(p) => p.rewards.combined,
                Err(e) => {
                    err.get_or_insert(e);
                    vec![0.0; blocks]
                }
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(table),
        }
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn per_block(&self, index: usize) -> &[f64] {
        &self.rewards[index]
    }

    pub fn total(&self, index: usize) -> f64 {
        self.rewards[index].iter().sum()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `π(a)` for every index, from clamped block probabilities.
pub fn action_probs(probs: &[f64]) -> Vec<f64> {
    (0..1usize << probs.len())
        .map(|i| {
            probs
                .iter()
                .enumerate()
                .map(|(b, &s)| log_prob(s, i >> b & 1 == 1))
                .sum::<f64>()
                .exp()
        })
        .collect()
}

/// `J = Σ_a π(a) R(a)` for block probabilities `probs`.
pub fn expected_reward(probs: &[f64], table: &RewardTable) -> Result<f64> {
    if probs.len() != table.blocks {
        return Err(Error::Shape(alloc::format!(
            "{} probabilities for {} blocks",
            probs.len(),
            table.blocks
        )));
    }
    Ok(action_probs(probs)
        .iter()
        .enumerate()
        .map(|(i, p)| p * table.total(i))
        .sum())
}

/// Exact `J(θ)` for the policy's current parameters.
pub fn enumerate_j(policy: &PolicyNet<f64>, image: &DenseTensor<f64>, table: &RewardTable) -> Result<f64> {
    expected_reward(&policy.forward(image)?.probs, table)
}

/// `∇θ J` by central differences over every policy parameter.
pub fn exact_policy_grad(
    policy: &PolicyNet<f64>,
    image: &DenseTensor<f64>,
    table: &RewardTable,
    eps: f64,
) -> Result<Vec<f64>> {
    let mut p = policy.clone();
    let theta = p.network().params_to_vec();
    let mut err = None;
    let g = finite_diff(
        |x| {
            let r = p
                .network_mut()
                .set_params(x)
                .and_then(|_| enumerate_j(&p, image, table));
            r.unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        },
        &theta,
        eps,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(g),
    }
}

/// Jacobian of the high logits: column `b` is `∂ (z1_b − z0_b) / ∂θ`, as
/// the softmax sees it. Stored row-major as `params × blocks`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitJacobian {
    pub probs: Vec<f64>,
    pub params: usize,
    pub blocks: usize,
    data: Vec<f64>,
}

impl LogitJacobian {
    pub fn new(policy: &PolicyNet<f64>, image: &DenseTensor<f64>) -> Result<Self> {
        let out = policy.forward(image)?;
        let blocks = out.probs.len();
        let params = policy.network().param_count();
        let mut data = vec![0.0; params * blocks];
        let mut unit = vec![0.0; blocks];
        for b in 0..blocks {
            unit[b] = 1.0;
            // +1 into z1 and −1 into z0 gives d(z1 − z0)/dθ
            let g = policy.backward_logits(&out, &unit)?.to_vec();
            unit[b] = 0.0;
            for (j, v) in g.into_iter().enumerate() {
                data[j * blocks + b] = v;
            }
        }
        Ok(LogitJacobian {
            probs: out.probs,
            params,
            blocks,
            data,
        })
    }

    /// `Σ_b M[:, b] · v_b` where `v_b` is a per-block logit gradient on `z1 − z0`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.blocks)
            .map(|row| row.iter().zip(v).map(|(m, x)| m * x).sum())
            .collect()
    }

    /// Score weights on `z1 − z0` for action vector `a` and reward weights `w`.
    fn score(&self, a: &[bool], w: &[f64]) -> Vec<f64> {
        // d log p / d (z1 − z0) equals d log p / d z1 at fixed z0
        self.probs
            .iter()
            .zip(a)
            .zip(w)
            .map(|((&s, &h), &wb)| wb * dlogp_dz1(s, h))
            .collect()
    }
}

/// `Σ_a π(a) Σ_b w_b(a) ∇ log p_b(a_b)` with `w` chosen by `estimator`.
pub fn enumerated_score_grad(
    policy: &PolicyNet<f64>,
    image: &DenseTensor<f64>,
    table: &RewardTable,
    estimator: Estimator,
) -> Result<Vec<f64>> {
    let jac = LogitJacobian::new(policy, image)?;
    if jac.blocks != table.blocks {
        return Err(Error::Shape(alloc::format!(
            "policy has {} blocks, table {}",
            jac.blocks,
            table.blocks
        )));
    }
    let pi = action_probs(&jac.probs);
    let mut v = vec![0.0; jac.blocks];
    for (i, &p) in pi.iter().enumerate() {
        let a = actions_of(i, jac.blocks);
        let s = jac.score(&a, &estimator.weights(table.per_block(i)));
        for (acc, x) in v.iter_mut().zip(s) {
            *acc += p * x;
        }
    }
    Ok(jac.apply(&v))
}

/// Monte-Carlo gradient estimate with its per-component standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub samples: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl McEstimate {
    /// Largest `|mean − target| / stderr`; components with zero spread must
    /// match to `1e-12`.
    pub fn max_z(&self, target: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.stderr)
            .zip(target)
            .map(|((m, se), t)| {
                let d = (m - t).abs();
                if *se > 0.0 {
                    d / se
                } else if d <= 1e-12 * (1.0 + t.abs()) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// REINFORCE estimate from `samples` independent action draws.
pub fn mc_policy_grad(
    policy: &PolicyNet<f64>,
    image: &DenseTensor<f64>,
    table: &RewardTable,
    estimator: Estimator,
    samples: usize,
    rng: &mut Rng,
) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::Config("need at least two samples".into()));
    }
    let jac = LogitJacobian::new(policy, image)?;
    if jac.blocks != table.blocks {
        return Err(Error::Shape(alloc::format!(
            "policy has {} blocks, table {}",
            jac.blocks,
            table.blocks
        )));
    }
    let mut sum = vec![0.0; jac.params];
    let mut sq = vec![0.0; jac.params];
    for _ in 0..samples {
        let a: Vec<bool> = jac.probs.iter().map(|&s| rng.bernoulli(s)).collect();
        let idx = a
            .iter()
            .enumerate()
            .fold(0usize, |acc, (b, &h)| acc | (usize::from(h) << b));
        let g = jac.apply(&jac.score(&a, &estimator.weights(table.per_block(idx))));
        for ((s, q), x) in sum.iter_mut().zip(&mut sq).zip(g) {
            *s += x;
            *q += x * x;
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    Ok(McEstimate { samples, mean, stderr })
}

/// `‖a − b‖∞ / (‖b‖∞ + 1e-12)`.
pub fn rel_inf_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let norm = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    diff / (norm + 1e-12)
}
