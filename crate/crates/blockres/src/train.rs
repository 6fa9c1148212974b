//! Epoch loop over an in-memory dataset with per-epoch validation metrics.

use std::fs;
use std::io::Write;
use std::path::Path;

use blockres_core::policy::{apply_grads, image_grads, image_rng, Hyper, ImageGrads, Model, Resolution, StepStats};
use blockres_core::scene::Sample;
use blockres_core::{DenseTensor, PadMode, Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dataset::Dataset;
use crate::error::{io_err, Error, Result};
use crate::eval::{evaluate, EvalSummary};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch.
    pub l_task: f64,
    /// Validation pixel accuracy under the training resolution rule.
    pub val_acc_dynamic: f64,
    pub val_acc_high: f64,
    /// Mean realized high-resolution fraction on the validation set.
    pub mean_sigma: f64,
    /// Mean block-execution GMACs per validation image.
    pub block_gmacs: f64,
    pub dense_gmacs: f64,
}

pub const METRICS_COLUMNS: [&str; 7] = [
    "epoch",
    "l_task",
    "val_acc_dynamic",
    "val_acc_high",
    "mean_sigma",
    "block_gmacs",
    "dense_gmacs",
];

/// Per-image work runs on `pool` when given; results are reduced in image order.
pub struct Runner {
    pool: Option<rayon::ThreadPool>,
}

impl Runner {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = if threads > 1 {
            let p = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Some(p)
        } else {
            None
        };
        Ok(Runner { pool })
    }

    pub fn map<I: Sync, O: Send>(&self, items: &[I], f: impl Fn(usize, &I) -> O + Sync + Send) -> Vec<O> {
        match &self.pool {
            Some(p) => p.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect()),
            None => items.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
        }
    }
}

/// Same update as the core's sequential `train_step`, with per-image gradients on the runner.
pub fn train_step(
    model: &mut Model<f32>,
    batch: &[(&DenseTensor<f32>, &[u8])],
    hyper: &Hyper,
    mode: PadMode,
    resolution: Resolution,
    rng: &mut Rng,
    runner: &Runner,
) -> Result<StepStats> {
    let step_seed = rng.next_u64();
    let m: &Model<f32> = model;
    let grads = runner
        .map(batch, |i, (x, y)| {
            image_grads(m, x, y, hyper, mode, resolution, &mut image_rng(step_seed, i))
        })
        .into_iter()
        .collect::<blockres_core::Result<Vec<ImageGrads<f32>>>>()?;
    Ok(apply_grads(model, &grads, hyper)?)
}

/// Settings of one training run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub seed: u64,
    pub hyper: Hyper,
    pub mode: PadMode,
    pub resolution: Resolution,
    pub policy_width: usize,
    pub classes: usize,
    pub threads: usize,
}

impl RunSpec {
    pub fn from_config(cfg: &Config) -> Self {
        RunSpec {
            seed: cfg.seed,
            hyper: cfg.hyper(),
            mode: cfg.train.pad(),
            resolution: cfg.train.resolution.into(),
            policy_width: cfg.train.policy_width,
            classes: cfg.dataset.classes,
            threads: cfg.threads,
        }
    }
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub metrics: Vec<EpochMetrics>,
    /// Validation summary of the final model under the training resolution rule.
    pub final_eval: EvalSummary,
}

/// Trains from scratch, calling `on_epoch` after each epoch's validation.
pub fn train(run: &RunSpec, data: &Dataset<f32>, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    run.hyper.validate()?;
    let first = data
        .train
        .first()
        .ok_or_else(|| Error::Dataset("empty training split".into()))?;
    if data.val.is_empty() {
        return Err(Error::Dataset("empty validation split".into()));
    }
    let d = first.image.dims();
    let root = Rng::new(run.seed);
    let mut model = Model::init(
        d.c,
        run.classes,
        d.h,
        d.w,
        run.hyper.block_size,
        run.policy_width,
        &mut root.fork(0),
    )?;
    let mut rng = root.fork(1);
    let runner = Runner::new(run.threads)?;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut metrics = Vec::with_capacity(run.hyper.epochs);
    let mut final_eval = None;
    for epoch in 1..=run.hyper.epochs {
        rng.shuffle(&mut order);
        let (mut loss, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(run.hyper.batch_size) {
            let batch: Vec<(&DenseTensor<f32>, &[u8])> = chunk
                .iter()
                .map(|&i| (&data.train[i].image, &data.train[i].labels[..]))
                .collect();
            let st = train_step(
                &mut model,
                &batch,
                &run.hyper,
                run.mode,
                run.resolution,
                &mut rng,
                &runner,
            )?;
            loss += st.loss;
            batches += 1;
        }
        let thr = run.hyper.eval_threshold;
        let dynamic = evaluate(&model, &data.val, thr, run.mode, run.resolution, &runner)?.0;
        let high = evaluate(&model, &data.val, thr, run.mode, Resolution::AllHigh, &runner)?.0;
        let m = EpochMetrics {
            epoch,
            l_task: loss / batches as f64,
            val_acc_dynamic: dynamic.accuracy,
            val_acc_high: high.accuracy,
            mean_sigma: dynamic.mean_sigma,
            block_gmacs: dynamic.mean_block_macs / 1e9,
            dense_gmacs: dynamic.mean_dense_macs / 1e9,
        };
        on_epoch(&m);
        metrics.push(m);
        final_eval = Some(dynamic);
    }
    let final_eval = match final_eval {
        Some(e) => e,
        None => {
            evaluate(
                &model,
                &data.val,
                run.hyper.eval_threshold,
                run.mode,
                run.resolution,
                &runner,
            )?
            .0
        }
    };
    Ok(TrainOutcome {
        model,
        metrics,
        final_eval,
    })
}

/// Writes `metrics.csv` with the fixed header.
pub fn write_metrics(rows: &[EpochMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<EpochMetrics>, _>>()?;
    Ok(rows)
}

/// `cmd_train`: trains on `cfg.data_dir`, writes `metrics.csv`, `model.bin` and `config.json` to `out`.
pub fn run_train(cfg: &Config, out: &Path, mut log: impl Write) -> Result<TrainOutcome> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let data = crate::dataset::load::<f32>(&cfg.data_dir, cfg.dataset.classes)?;
    check_geometry(cfg, data.train.iter().chain(&data.val))?;
    fs::write(out.join("config.json"), cfg.to_json() + "\n").map_err(io_err(out))?;
    let outcome = train(&RunSpec::from_config(cfg), &data, |m| {
        let _ = writeln!(
            log,
            "epoch {:3}  loss {:.4}  acc {:.4}  acc(high) {:.4}  sigma {:.3}  GMACs {:.3}/{:.3}",
            m.epoch, m.l_task, m.val_acc_dynamic, m.val_acc_high, m.mean_sigma, m.block_gmacs, m.dense_gmacs
        );
    })?;
    write_metrics(&outcome.metrics, &out.join("metrics.csv"))?;
    crate::checkpoint::save(&outcome.model, &out.join("model.bin"))?;
    Ok(outcome)
}

pub(crate) fn check_geometry<'a>(cfg: &Config, samples: impl Iterator<Item = &'a Sample<f32>>) -> Result<()> {
    for s in samples {
        let d = s.image.dims();
        if (d.h, d.w) != (cfg.dataset.height, cfg.dataset.width) || d.c != 3 {
            return Err(Error::Dataset(format!(
                "sample {} is {}x{}x{}, config expects 3x{}x{}",
                s.id, d.c, d.h, d.w, cfg.dataset.height, cfg.dataset.width
            )));
        }
    }
    Ok(())
}
