//! JSON experiment configuration. Missing keys take their defaults and
//! unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use blockres_core::nn::AdamConfig;
use blockres_core::policy::{Estimator, Hyper, Resolution};
use blockres_core::scene::SceneSpec;
use blockres_core::PadMode;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// The committed default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    /// Dataset directory holding `manifest.json`.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Worker threads for per-image training and evaluation work.
    pub threads: usize,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub train: usize,
    pub val: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub textured_classes: usize,
    pub region_cell: usize,
    pub textured_fraction: [f64; 2],
    pub noise: f64,
    pub texture_levels: [u8; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadName {
    Average,
    Strided,
    Zero,
}

impl From<PadName> for PadMode {
    fn from(p: PadName) -> Self {
        match p {
            PadName::Average => PadMode::AverageSample,
            PadName::Strided => PadMode::StridedSample,
            PadName::Zero => PadMode::ZeroPad,
        }
    }
}

impl From<PadMode> for PadName {
    fn from(p: PadMode) -> Self {
        match p {
            PadMode::AverageSample => PadName::Average,
            PadMode::StridedSample => PadName::Strided,
            PadMode::ZeroPad => PadName::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    PerBlock,
    FullScore,
}

impl From<EstimatorName> for Estimator {
    fn from(e: EstimatorName) -> Self {
        match e {
            EstimatorName::PerBlock => Estimator::PerBlock,
            EstimatorName::FullScore => Estimator::FullScore,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionName {
    Dynamic,
    AllHigh,
    AllLow,
}

impl From<ResolutionName> for Resolution {
    fn from(r: ResolutionName) -> Self {
        match r {
            ResolutionName::Dynamic => Resolution::Dynamic,
            ResolutionName::AllHigh => Resolution::AllHigh,
            ResolutionName::AllLow => Resolution::AllLow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub tau: f64,
    pub gamma: f64,
    pub beta: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub block_size: usize,
    pub estimator: EstimatorName,
    pub pad_mode: PadName,
    /// How blocks are chosen during training; `all_low` trains the static low-resolution baseline.
    pub resolution: ResolutionName,
    /// Channels of the policy network's hidden stages.
    pub policy_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Blocks with `s ≥ threshold` run at high resolution.
    pub threshold: f64,
    pub hist_bins: usize,
    pub decision_maps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub block_sizes: Vec<usize>,
    pub high_fractions: Vec<f64>,
    pub channels: usize,
    pub size: usize,
    pub warmup: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub grids: usize,
    pub fd_eps: f64,
    pub fd_tol: f64,
    pub adjoint_tol: f64,
    /// Block counts of the exhaustive estimator check.
    pub unbiased_blocks: Vec<usize>,
    pub unbiased_tol: f64,
    pub mc_samples: usize,
    /// Componentwise Monte-Carlo bound in standard errors.
    pub mc_z: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            data_dir: "data".into(),
            out_dir: "runs/default".into(),
            threads: 1,
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let s = SceneSpec::default();
        DatasetConfig {
            train: 80,
            val: 20,
            height: s.height,
            width: s.width,
            classes: s.classes,
            textured_classes: s.textured_classes,
            region_cell: s.region_cell,
            textured_fraction: [s.textured_fraction.0, s.textured_fraction.1],
            noise: s.noise,
            texture_levels: [s.texture_levels.0, s.texture_levels.1],
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = Hyper::default();
        TrainConfig {
            tau: h.tau,
            gamma: h.gamma,
            beta: h.beta,
            lr: h.adam.lr,
            adam_beta1: h.adam.beta1,
            adam_beta2: h.adam.beta2,
            adam_eps: h.adam.eps,
            batch_size: h.batch_size,
            epochs: h.epochs,
            block_size: h.block_size,
            estimator: EstimatorName::PerBlock,
            pad_mode: PadName::Average,
            resolution: ResolutionName::Dynamic,
            policy_width: 8,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: 0.5,
            hist_bins: 10,
            decision_maps: true,
        }
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            block_sizes: vec![4, 8, 16, 32, 64],
            high_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            channels: 16,
            size: 256,
            warmup: 5,
            reps: 50,
        }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            grids: 20,
            fd_eps: 1e-6,
            fd_tol: 1e-4,
            adjoint_tol: 1e-10,
            unbiased_blocks: vec![4, 8],
            unbiased_tol: 1e-3,
            mc_samples: 100_000,
            mc_z: 3.0,
        }
    }
}

impl DatasetConfig {
    pub fn spec(&self) -> SceneSpec {
        SceneSpec {
            height: self.height,
            width: self.width,
            classes: self.classes,
            textured_classes: self.textured_classes,
            region_cell: self.region_cell,
            textured_fraction: (self.textured_fraction[0], self.textured_fraction[1]),
            noise: self.noise,
            texture_levels: (self.texture_levels[0], self.texture_levels[1]),
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self, eval_threshold: f64) -> Hyper {
        Hyper {
            tau: self.tau,
            gamma: self.gamma,
            beta: self.beta,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                eps: self.adam_eps,
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            block_size: self.block_size,
            eval_threshold,
            estimator: self.estimator.into(),
        }
    }

    pub fn pad(&self) -> PadMode {
        self.pad_mode.into()
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hyper(&self) -> Hyper {
        self.train.hyper(self.eval.threshold)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.dataset;
        d.spec().validate()?;
        self.hyper().validate()?;
        let t = &self.train;
        if !d.height.is_multiple_of(t.block_size) || !d.width.is_multiple_of(t.block_size) {
            return bad(format!(
                "block size {} does not tile {}x{}",
                t.block_size, d.height, d.width
            ));
        }
        blockres_core::policy::grid_dims(d.height, d.width, t.block_size)?;
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if t.policy_width == 0 {
            return bad("policy_width must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return bad(format!("eval threshold {}", self.eval.threshold));
        }
        if self.eval.hist_bins == 0 {
            return bad("hist_bins must be positive".into());
        }
        let b = &self.bench;
        if b.block_sizes
            .iter()
            .any(|&s| s < 2 || s % 2 != 0 || !b.size.is_multiple_of(s))
        {
            return bad(format!(
                "bench block sizes {:?} must be even and tile {}",
                b.block_sizes, b.size
            ));
        }
        if b.high_fractions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad(format!("bench fractions {:?} must lie in [0, 1]", b.high_fractions));
        }
        if b.channels == 0 || b.reps == 0 {
            return bad("bench channels and reps must be positive".into());
        }
        let v = &self.verify;
        if v.grids == 0 || !(v.fd_eps > 0.0) || v.mc_samples < 2 {
            return bad("verify needs grids > 0, fd_eps > 0 and mc_samples ≥ 2".into());
        }
        if v.unbiased_blocks
            .iter()
            .any(|&b| b == 0 || b > blockres_core::oracle::MAX_ENUM_BLOCKS)
        {
            return bad(format!("unbiased block counts {:?}", v.unbiased_blocks));
        }
        Ok(())
    }
}
