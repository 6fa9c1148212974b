//! Subcommands `gen`, `train`, `eval`, `bench`, `gradcheck` and `unbiased`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::{Config, DEFAULT_CONFIG};

#[derive(Debug, Parser)]
#[command(
    name = "blockres",
    version,
    about = "Block-based dynamic-resolution segmentation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; the committed default when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (the dataset directory for `gen`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Model checkpoint for `eval`.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset and its manifest.
    Gen,
    /// Train the segmentation and policy networks jointly.
    Train,
    /// Evaluate a checkpoint on the validation split.
    Eval,
    /// Time dense against block execution of one residual block.
    Bench,
    /// Finite-difference and adjoint checks of every layer and block op.
    Gradcheck,
    /// Exhaustive and Monte-Carlo checks of the policy-gradient estimator.
    Unbiased,
}

pub fn load_config(common: &Common) -> anyhow::Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::from_json(DEFAULT_CONFIG)?,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli, mut log: impl Write) -> anyhow::Result<bool> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::Gen => {
            let dir = out.unwrap_or_else(|| cfg.data_dir.clone());
            let m = crate::dataset::generate(&cfg.dataset.spec(), cfg.dataset.train, cfg.dataset.val, cfg.seed, &dir)?;
            writeln!(log, "wrote {} samples to {}", m.samples.len(), dir.display())?;
        }
        Command::Train => {
            let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            let o = crate::train::run_train(&cfg, &dir, &mut log)?;
            writeln!(
                log,
                "final: accuracy {:.4}  sigma {:.3}  MAC ratio {:.3}",
                o.final_eval.accuracy,
                o.final_eval.mean_sigma,
                o.final_eval.mac_ratio()
            )?;
            writeln!(log, "wrote {}", dir.display())?;
        }
        Command::Eval => {
            let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            let ckpt = cli.common.checkpoint.clone().unwrap_or_else(|| dir.join("model.bin"));
            let model = crate::checkpoint::load::<f32>(&ckpt)?;
            let r = crate::eval::run_eval(&cfg, &model, &dir)?;
            for (name, s) in [
                ("dynamic", &r.dynamic),
                ("all_high", &r.all_high),
                ("all_low", &r.all_low),
            ] {
                writeln!(
                    log,
                    "{name:<9} accuracy {:.4}  sigma {:.3}  MAC ratio {:.3}",
                    s.accuracy,
                    s.mean_sigma,
                    s.mac_ratio()
                )?;
            }
            let spec = cfg.dataset.spec();
            for (k, pct) in r.dynamic.class_high_pct().iter().enumerate() {
                let kind = if spec.is_textured(k) { "textured" } else { "flat" };
                writeln!(log, "class {k} ({kind:<8}) high-res pixels {pct:6.2}%")?;
            }
            if let Some(t) = r.textured_high_share {
                writeln!(log, "textured share of high-res pixels {t:.3}")?;
            }
        }
        Command::Bench => {
            let dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            fs::create_dir_all(&dir)?;
            writeln!(
                log,
                "{:>5} {:>5} {:>9} {:>11} {:>11} {:>8}",
                "block", "p", "mac_ratio", "dense_s", "block_s", "speedup"
            )?;
            let rows = crate::bench::run_bench(&cfg.bench, cfg.seed, |r| {
                let _ = writeln!(
                    log,
                    "{:>5} {:>5.2} {:>9.4} {:>11.3e} {:>11.3e} {:>8.3}",
                    r.block_size, r.high_fraction, r.mac_ratio, r.dense_median_s, r.block_median_s, r.speedup
                );
            })?;
            crate::bench::write_bench(&rows, &dir.join("bench.csv"))?;
        }
        Command::Gradcheck => {
            let r = crate::verify::run_gradcheck(&cfg.verify, cfg.seed)?;
            let text = r.to_text();
            write!(log, "{text}")?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_text(&dir.join("gradcheck.txt"), &text)?;
                write_text(&dir.join("gradcheck.json"), &(serde_json::to_string_pretty(&r)? + "\n"))?;
            }
            return Ok(r.passed);
        }
        Command::Unbiased => {
            let r = crate::verify::run_unbiased(&cfg.verify, cfg.seed)?;
            let text = r.to_text();
            write!(log, "{text}")?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_text(&dir.join("unbiased.txt"), &text)?;
                write_text(&dir.join("unbiased.json"), &(serde_json::to_string_pretty(&r)? + "\n"))?;
            }
            return Ok(r.passed);
        }
    }
    Ok(true)
}

pub fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if !run(cli, io::stdout().lock())? {
        bail!("checks failed");
    }
    Ok(())
}
