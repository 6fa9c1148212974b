use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::net::PROB_CLAMP;
use crate::rng::Rng;

/// Actions drawn from the policy together with their log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub probs: Vec<f64>,
    pub actions: Vec<bool>,
    pub logp: Vec<f64>,
}

impl ActionSample {
    pub fn from_actions(probs: &[f64], actions: Vec<bool>) -> Self {
        let logp = probs.iter().zip(&actions).map(|(&s, &a)| log_prob(s, a)).collect();
        ActionSample {
            probs: probs.to_vec(),
            actions,
            logp,
        }
    }

    pub fn joint_logp(&self) -> f64 {
        self.logp.iter().sum()
    }
}

pub fn clamp_prob(s: f64) -> f64 {
    s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub fn log_prob(s: f64, high: bool) -> f64 {
    let s = clamp_prob(s);
    if high {
        s.ln()
    } else {
        (1.0 - s).ln()
    }
}

/// Independent Bernoulli draws, one per block.
pub fn sample_actions(probs: &[f64], rng: &mut Rng) -> ActionSample {
    let actions = probs.iter().map(|&s| rng.bernoulli(s)).collect();
    ActionSample::from_actions(probs, actions)
}

pub fn threshold_actions(probs: &[f64], threshold: f64) -> Vec<bool> {
    probs.iter().map(|&s| s >= threshold).collect()
}

/// Which reward multiplies each block's score `∇ log p_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// The block's own reward `R_b(a)`.
    #[default]
    PerBlock,
    /// The image total `R(a)` for every block.
    FullScore,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::PerBlock => "per_block",
            Estimator::FullScore => "full_score",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "per_block" => Some(Estimator::PerBlock),
            "full_score" => Some(Estimator::FullScore),
            _ => None,
        }
    }

    /// Score weights for per-block rewards `r`.
    pub fn weights(self, r: &[f64]) -> Vec<f64> {
        match self {
            Estimator::PerBlock => r.to_vec(),
            Estimator::FullScore => alloc::vec![r.iter().sum(); r.len()],
        }
    }
}

/// `−(β/N) Σ_b R_b log p_b` for one image of a batch of `n`.
pub fn policy_loss(logp: &[f64], rewards: &[f64], beta: f64, n: usize) -> f64 {
    -beta / n as f64 * logp.iter().zip(rewards).map(|(l, r)| l * r).sum::<f64>()
}

/// `∂ loss / ∂ log p_b` matching [`policy_loss`].
pub fn policy_loss_coeffs(rewards: &[f64], beta: f64, n: usize) -> Vec<f64> {
    let k = -beta / n as f64;
    rewards.iter().map(|r| k * r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn clamped_logs_are_finite() {
        assert!(log_prob(0.0, true).is_finite());
        assert!(log_prob(1.0, false).is_finite());
        assert!((log_prob(0.0, true) - (1e-6f64).ln()).abs() < 1e-12);
        assert!((log_prob(0.25, false) - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn extremes_sample_deterministically() {
        let mut rng = Rng::new(3);
        for _ in 0..100 {
            let a = sample_actions(&[0.0, 1.0], &mut rng);
            assert_eq!(a.actions, vec![false, true]);
        }
    }

    #[test]
    fn sample_frequency() {
        let mut rng = Rng::new(11);
        let n = 200_000;
        let hits = (0..n).filter(|_| sample_actions(&[0.3], &mut rng).actions[0]).count();
        let f = hits as f64 / n as f64;
        // 5 standard errors
        assert!((f - 0.3).abs() < 5.0 * (0.21f64 / n as f64).sqrt());
    }

    #[test]
    fn threshold_boundary() {
        assert_eq!(threshold_actions(&[0.5, 0.4999, 0.9], 0.5), vec![true, false, true]);
    }

    #[test]
    fn loss_sign_and_scale() {
        let logp = [-0.5, -1.0];
        let r = [1.0, -2.0];
        // -(0.1/2)(-0.5 + 2.0) = -0.075
        assert!((policy_loss(&logp, &r, 0.1, 2) + 0.075).abs() < 1e-15);
        assert_eq!(policy_loss(&logp, &r, 0.0, 2), 0.0);
        assert_eq!(policy_loss_coeffs(&r, 0.1, 2), vec![-0.05, 0.1]);
    }

    #[test]
    fn estimator_weights() {
        assert_eq!(Estimator::PerBlock.weights(&[1.0, -3.0]), vec![1.0, -3.0]);
        assert_eq!(Estimator::FullScore.weights(&[1.0, -3.0]), vec![-2.0, -2.0]);
        assert_eq!(Estimator::from_name("full_score"), Some(Estimator::FullScore));
    }
}
