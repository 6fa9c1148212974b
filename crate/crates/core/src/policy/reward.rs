//! Per-block rewards.
//!
//! `R_b = R_task,b + γ·R_complexity,b`. The complexity term pushes the
//! realized high-resolution fraction `σ` towards the target `τ`; the task
//! term rewards high resolution where the block's loss exceeds the image's.

use alloc::format;
use alloc::vec::Vec;

use crate::block::BlockGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Realized fraction of high-resolution blocks.
pub fn sigma(actions: &[bool]) -> f64 {
    actions.iter().filter(|&&a| a).count() as f64 / actions.len() as f64
}

pub fn complexity_reward(actions: &[bool], tau: f64) -> Vec<f64> {
    let d = sigma(actions) - tau;
    actions.iter().map(|&a| if a { -d } else { d }).collect()
}

/// Mean loss of each block's pixel region.
pub fn block_losses<T: Scalar>(loss_map: &[T], grid: &BlockGrid) -> Result<Vec<f64>> {
    let (h, w) = grid.image_size();
    if loss_map.len() != h * w {
        return Err(Error::Grid(format!(
            "loss map of {} pixels for a {h}x{w} grid",
            loss_map.len()
        )));
    }
    let s = grid.block_size();
    let inv = 1.0 / (s * s) as f64;
    Ok((0..grid.blocks())
        .map(|b| {
            let (by, bx) = grid.cell(b);
            let mut acc = 0.0;
            for y in by * s..(by + 1) * s {
                acc += loss_map[y * w + bx * s..y * w + (bx + 1) * s]
                    .iter()
                    .map(|v| v.as_f64())
                    .sum::<f64>();
            }
            acc * inv
        })
        .collect())
}

/// `(L_b − L_task)` for high blocks, its negation for low ones.
pub fn task_reward<T: Scalar>(loss_map: &[T], grid: &BlockGrid, actions: &[bool], l_task: f64) -> Result<Vec<f64>> {
    if actions.len() != grid.blocks() {
        return Err(Error::Grid(format!(
            "{} actions for {} blocks",
            actions.len(),
            grid.blocks()
        )));
    }
    let lb = block_losses(loss_map, grid)?;
    Ok(lb
        .iter()
        .zip(actions)
        .map(|(&l, &a)| if a { l - l_task } else { l_task - l })
        .collect())
}

pub fn combine_rewards(task: &[f64], complexity: &[f64], gamma: f64) -> Vec<f64> {
    task.iter().zip(complexity).map(|(t, c)| t + gamma * c).collect()
}

/// Rewards of one image, with their parts.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBundle {
    pub task: Vec<f64>,
    pub complexity: Vec<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub sigma: f64,
    pub combined: Vec<f64>,
}

impl RewardBundle {
    pub fn new<T: Scalar>(loss_map: &[T], grid: &BlockGrid, l_task: f64, gamma: f64, tau: f64) -> Result<Self> {
        let actions = grid.actions();
        let task = task_reward(loss_map, grid, actions, l_task)?;
        let complexity = complexity_reward(actions, tau);
        let combined = combine_rewards(&task, &complexity, gamma);
        Ok(RewardBundle {
            task,
            complexity,
            gamma,
            tau,
            sigma: sigma(actions),
            combined,
        })
    }

    pub fn total(&self) -> f64 {
        self.combined.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.total() / self.combined.len() as f64
    }
}
