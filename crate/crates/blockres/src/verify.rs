//! Gradient, adjoint and estimator checks as fixed-column text and JSON.

use std::fmt::Write as _;

use blockres_core::nn::Network;
use blockres_core::oracle::{
    enumerated_score_grad, exact_policy_grad, gradcheck_suite, mc_policy_grad, rel_inf_error, RewardTable, SuiteConfig,
    SuiteReport,
};
use blockres_core::policy::{Estimator, Hyper, PolicyNet};
use blockres_core::{DenseTensor, PadMode, Rng};
use serde::{Deserialize, Serialize};

use crate::config::VerifyConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub name: String,
    pub checked: usize,
    pub max_rel: f64,
    pub mean_rel: f64,
    pub failing: usize,
    /// Components checked one-sided because the stencil crossed a kink.
    pub kinks: usize,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub err: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub passed: bool,
    pub grids: usize,
    pub max_grad_rel: f64,
    pub max_adjoint_err: f64,
    pub grads: Vec<GradRow>,
    pub adjoints: Vec<AdjointRow>,
}

impl From<&SuiteReport> for GradcheckReport {
    fn from(r: &SuiteReport) -> Self {
        GradcheckReport {
            passed: r.passed(),
            grids: r.grids,
            max_grad_rel: r.max_grad_rel(),
            max_adjoint_err: r.max_adjoint_err(),
            grads: r
                .grads
                .iter()
                .map(|g| GradRow {
                    name: g.name.clone(),
                    checked: g.checked,
                    max_rel: g.max_rel,
                    mean_rel: g.mean_rel,
                    failing: g.failing.len(),
                    kinks: g.kinks,
                    tol: g.tol,
                    passed: g.passed(),
                })
                .collect(),
            adjoints: r
                .adjoints
                .iter()
                .map(|a| AdjointRow {
                    name: a.name.clone(),
                    lhs: a.lhs,
                    rhs: a.rhs,
                    err: a.err,
                    tol: a.tol,
                    passed: a.passed(),
                })
                .collect(),
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

impl GradcheckReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<48} {:>7} {:>11} {:>11} {:>5} {:>5}",
            "gradient", "checked", "max_rel", "mean_rel", "kinks", ""
        );
        for g in &self.grads {
            let _ = writeln!(
                s,
                "{:<48} {:>7} {:>11.3e} {:>11.3e} {:>5} {:>5}",
                g.name,
                g.checked,
                g.max_rel,
                g.mean_rel,
                g.kinks,
                verdict(g.passed)
            );
        }
        let _ = writeln!(
            s,
            "{:<48} {:>11} {:>11} {:>11} {:>5}",
            "adjoint", "lhs", "rhs", "err", ""
        );
        for a in &self.adjoints {
            let _ = writeln!(
                s,
                "{:<48} {:>11.4e} {:>11.4e} {:>11.3e} {:>5}",
                a.name,
                a.lhs,
                a.rhs,
                a.err,
                verdict(a.passed)
            );
        }
        let _ = writeln!(
            s,
            "grids {}  gradients {}  adjoints {}  max_rel {:.3e}  max_adjoint_err {:.3e}  {}",
            self.grids,
            self.grads.len(),
            self.adjoints.len(),
            self.max_grad_rel,
            self.max_adjoint_err,
            if self.passed { "PASS" } else { "FAIL" }
        );
        s
    }
}

pub fn suite_config(v: &VerifyConfig, seed: u64) -> SuiteConfig {
    SuiteConfig {
        grids: v.grids,
        seed,
        eps: v.fd_eps,
        tol: v.fd_tol,
        adjoint_tol: v.adjoint_tol,
    }
}

pub fn run_gradcheck(v: &VerifyConfig, seed: u64) -> Result<GradcheckReport> {
    Ok(GradcheckReport::from(&gradcheck_suite(&suite_config(v, seed))?))
}

/// Results for one block count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasedCase {
    pub blocks: usize,
    pub params: usize,
    /// Relative error of the enumerated score-function gradient against finite differences of J.
    pub enumerated_vs_fd: f64,
    pub mc_samples: usize,
    /// Largest componentwise `|MC − enumerated| / SE`.
    pub mc_max_z: f64,
    /// Relative error of the per-block estimator's expectation against finite differences of J.
    pub per_block_vs_fd: f64,
    /// Largest gradient component under an all-zero reward table.
    pub zero_reward_max: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasedReport {
    pub tol: f64,
    pub mc_z: f64,
    pub cases: Vec<UnbiasedCase>,
    pub passed: bool,
}

impl UnbiasedReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>6} {:>6} {:>14} {:>9} {:>9} {:>14} {:>10} {:>5}",
            "blocks", "params", "enum_vs_fd", "samples", "mc_max_z", "per_block_fd", "zero_max", ""
        );
        for c in &self.cases {
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>14.3e} {:>9} {:>9.3} {:>14.3e} {:>10.1e} {:>5}",
                c.blocks,
                c.params,
                c.enumerated_vs_fd,
                c.mc_samples,
                c.mc_max_z,
                c.per_block_vs_fd,
                c.zero_reward_max,
                verdict(c.passed)
            );
        }
        let _ = writeln!(
            s,
            "tolerance {:.0e}  MC bound {} SE  {}",
            self.tol,
            self.mc_z,
            if self.passed { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Small random pipeline with `blocks` blocks of 8 pixels: a 2-row grid
/// (1 row for a single block) feeding a narrow segmentation network.
pub struct EstimatorInstance {
    pub policy: PolicyNet<f64>,
    pub image: DenseTensor<f64>,
    pub table: RewardTable,
}

pub fn estimator_instance(blocks: usize, seed: u64) -> Result<EstimatorInstance> {
    let gy = if blocks >= 2 { 2 } else { 1 };
    if blocks == 0 || !blocks.is_multiple_of(gy) {
        return Err(Error::Config(format!("cannot lay out {blocks} blocks on a 2-row grid")));
    }
    let (h, w) = (8 * gy, 8 * (blocks / gy));
    let mut rng = Rng::new(seed);
    let seg = Network::segnet_with_width(3, 4, 4, 3, &mut rng)?;
    let mut policy = PolicyNet::new(3, h, w, 8, 1, &mut rng)?;
    // spread probabilities away from 0.5
    let theta: Vec<f64> = (0..policy.network().param_count())
        .map(|_| rng.uniform_range(-1.5, 1.5))
        .collect();
    policy.network_mut().set_params(&theta)?;
    let image = DenseTensor::rand_uniform((1, 3, h, w), &mut rng, 0.0, 1.0)?;
    let labels: Vec<u8> = (0..h * w).map(|_| rng.below(3) as u8).collect();
    let hyper = Hyper {
        tau: 0.4,
        gamma: 0.5,
        ..Hyper::default()
    };
    let table = RewardTable::from_pipeline(
        &seg,
        &image,
        &labels,
        policy.grid_dims(),
        &hyper,
        PadMode::AverageSample,
    )?;
    Ok(EstimatorInstance { policy, image, table })
}

pub fn unbiased_case(blocks: usize, v: &VerifyConfig, seed: u64) -> Result<UnbiasedCase> {
    let inst = estimator_instance(blocks, seed)?;
    let (p, x, t) = (&inst.policy, &inst.image, &inst.table);
    let fd = exact_policy_grad(p, x, t, v.fd_eps)?;
    let full = enumerated_score_grad(p, x, t, Estimator::FullScore)?;
    let per_block = enumerated_score_grad(p, x, t, Estimator::PerBlock)?;
    let mc = mc_policy_grad(p, x, t, Estimator::FullScore, v.mc_samples, &mut Rng::new(seed).fork(1))?;
    let zeros = RewardTable::from_fn(blocks, |_| vec![0.0; blocks])?;
    let zero = enumerated_score_grad(p, x, &zeros, Estimator::FullScore)?;
    let zero_reward_max = zero.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let enumerated_vs_fd = rel_inf_error(&full, &fd);
    let mc_max_z = mc.max_z(&full);
    Ok(UnbiasedCase {
        blocks,
        params: fd.len(),
        enumerated_vs_fd,
        mc_samples: v.mc_samples,
        mc_max_z,
        per_block_vs_fd: rel_inf_error(&per_block, &fd),
        zero_reward_max,
        passed: enumerated_vs_fd < v.unbiased_tol && mc_max_z <= v.mc_z && zero_reward_max == 0.0,
    })
}

pub fn run_unbiased(v: &VerifyConfig, seed: u64) -> Result<UnbiasedReport> {
    let cases = v
        .unbiased_blocks
        .iter()
        .map(|&b| unbiased_case(b, v, seed.wrapping_add(b as u64)))
        .collect::<Result<Vec<_>>>()?;
    let passed = cases.iter().all(|c| c.passed);
    Ok(UnbiasedReport {
        tol: v.unbiased_tol,
        mc_z: v.mc_z,
        cases,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use blockres_core::oracle::GradReport;

    #[test]
    fn text_and_json_agree() {
        let v = VerifyConfig {
            grids: 1,
            ..VerifyConfig::default()
        };
        let r = run_gradcheck(&v, 3).unwrap();
        assert!(r.passed, "{}", r.to_text());
        let back: GradcheckReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let text = r.to_text();
        assert_eq!(text.lines().count(), r.grads.len() + r.adjoints.len() + 3);
        for g in &r.grads {
            assert!(text.contains(&g.name));
        }
        assert!(text.trim_end().ends_with("PASS"));
    }

    #[test]
    fn sign_flipped_gradient_is_reported() {
        let analytic = [0.5, -1.0, 2.0];
        let flipped: Vec<f64> = analytic.iter().map(|g| -g).collect();
        let suite = SuiteReport {
            grads: vec![GradReport::compare("conv.weight", &flipped, &analytic, 1e-4)],
            adjoints: vec![],
            grids: 1,
        };
        let r = GradcheckReport::from(&suite);
        assert!(!r.passed);
        assert_eq!(r.grads[0].failing, 3);
        assert!(r.to_text().contains("FAIL"));
    }

    #[test]
    fn four_block_estimator_is_unbiased() {
        let v = VerifyConfig {
            mc_samples: 20_000,
            ..VerifyConfig::default()
        };
        let c = unbiased_case(4, &v, 5).unwrap();
        assert!(c.enumerated_vs_fd < 1e-3, "{c:?}");
        assert!(c.mc_max_z < 4.0, "{c:?}");
        assert_eq!(c.zero_reward_max, 0.0);
    }

    #[test]
    fn instance_layout() {
        assert_eq!(estimator_instance(8, 0).unwrap().policy.grid_dims(), (2, 4));
        assert_eq!(estimator_instance(1, 0).unwrap().policy.grid_dims(), (1, 1));
        assert!(estimator_instance(5, 0).is_err());
    }
}
