//! Thresholded validation: accuracy, compute, σ histogram, per-class
//! high-resolution shares and decision maps.

use std::fs;
use std::path::Path;

use blockres_core::policy::{evaluate_image, EvalImage, Model, Resolution};
use blockres_core::scene::{Sample, SceneSpec};
use blockres_core::{BlockGrid, PadMode};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{io_err, Result};
use crate::netpbm::{decision_map, write_pgm};
use crate::train::Runner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub images: usize,
    /// Pixel accuracy over all images.
    pub accuracy: f64,
    pub mean_sigma: f64,
    pub mean_block_macs: f64,
    pub mean_dense_macs: f64,
    pub class_pixels: Vec<usize>,
    pub class_high: Vec<usize>,
}

impl EvalSummary {
    pub fn from_images(images: &[EvalImage]) -> Self {
        let n = images.len().max(1) as f64;
        let classes = images.first().map_or(0, |e| e.class_pixels.len());
        let mut class_pixels = vec![0; classes];
        let mut class_high = vec![0; classes];
        for e in images {
            for k in 0..classes {
                class_pixels[k] += e.class_pixels[k];
                class_high[k] += e.class_high[k];
            }
        }
        let pixels: usize = images.iter().map(|e| e.pixels).sum();
        let correct: usize = images.iter().map(|e| e.correct).sum();
        EvalSummary {
            images: images.len(),
            accuracy: if pixels > 0 {
                correct as f64 / pixels as f64
            } else {
                0.0
            },
            mean_sigma: images.iter().map(|e| e.sigma).sum::<f64>() / n,
            mean_block_macs: images.iter().map(|e| e.block_macs as f64).sum::<f64>() / n,
            mean_dense_macs: images.iter().map(|e| e.dense_macs as f64).sum::<f64>() / n,
            class_pixels,
            class_high,
        }
    }

    pub fn mac_ratio(&self) -> f64 {
        self.mean_block_macs / self.mean_dense_macs
    }

    /// Share of high-resolution pixels that belong to `is_textured` classes.
    pub fn textured_high_share(&self, is_textured: impl Fn(usize) -> bool) -> Option<f64> {
        let total: usize = self.class_high.iter().sum();
        let tex: usize = self
            .class_high
            .iter()
            .enumerate()
            .filter(|(k, _)| is_textured(*k))
            .map(|(_, v)| v)
            .sum();
        (total > 0).then(|| tex as f64 / total as f64)
    }

    /// Percentage of each class's pixels processed at high resolution.
    pub fn class_high_pct(&self) -> Vec<f64> {
        self.class_high
            .iter()
            .zip(&self.class_pixels)
            .map(|(&h, &p)| if p > 0 { 100.0 * h as f64 / p as f64 } else { 0.0 })
            .collect()
    }
}

/// Evaluates every sample; per-image results are in sample order.
pub fn evaluate(
    model: &Model<f32>,
    samples: &[Sample<f32>],
    threshold: f64,
    mode: PadMode,
    resolution: Resolution,
    runner: &Runner,
) -> Result<(EvalSummary, Vec<EvalImage>)> {
    let images = runner
        .map(samples, |_, s| {
            evaluate_image(model, &s.image, &s.labels, threshold, mode, resolution)
        })
        .into_iter()
        .collect::<blockres_core::Result<Vec<_>>>()?;
    Ok((EvalSummary::from_images(&images), images))
}

/// Counts of per-image σ in `bins` equal-width bins over `[0, 1]`; σ = 1 lands in the last bin.
pub fn sigma_histogram(sigmas: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins];
    for &s in sigmas {
        let b = ((s * bins as f64) as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

#[derive(Debug, Clone, Serialize)]
struct HistRow {
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ClassRow {
    class: usize,
    textured: bool,
    pixels: usize,
    high_pixels: usize,
    high_pct: f64,
}

/// Everything `cmd_eval` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dynamic: EvalSummary,
    pub all_high: EvalSummary,
    pub all_low: EvalSummary,
    pub textured_high_share: Option<f64>,
    pub sigma_hist: Vec<usize>,
}

/// `cmd_eval`: evaluates `model` on the validation split and writes
/// `eval.json`, `sigma_hist.csv`, `class_high.csv` and `decision_<id>.pgm` to `out`.
pub fn run_eval(cfg: &Config, model: &Model<f32>, out: &Path) -> Result<EvalReport> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let data = crate::dataset::load::<f32>(&cfg.data_dir, cfg.dataset.classes)?;
    crate::train::check_geometry(cfg, data.val.iter())?;
    let runner = Runner::new(cfg.threads)?;
    let (thr, mode) = (cfg.eval.threshold, cfg.train.pad());
    let (dynamic, images) = evaluate(model, &data.val, thr, mode, Resolution::Dynamic, &runner)?;
    let all_high = evaluate(model, &data.val, thr, mode, Resolution::AllHigh, &runner)?.0;
    let all_low = evaluate(model, &data.val, thr, mode, Resolution::AllLow, &runner)?.0;
    let spec: SceneSpec = cfg.dataset.spec();
    let sigmas: Vec<f64> = images.iter().map(|e| e.sigma).collect();
    let report = EvalReport {
        textured_high_share: dynamic.textured_high_share(|k| spec.is_textured(k)),
        sigma_hist: sigma_histogram(&sigmas, cfg.eval.hist_bins),
        dynamic,
        all_high,
        all_low,
    };

    let mut w = csv::Writer::from_path(out.join("sigma_hist.csv"))?;
    let bins = cfg.eval.hist_bins as f64;
    for (i, &count) in report.sigma_hist.iter().enumerate() {
        w.serialize(HistRow {
            bin_lo: i as f64 / bins,
            bin_hi: (i + 1) as f64 / bins,
            count,
        })?;
    }
    w.flush().map_err(io_err(out))?;

    let mut w = csv::Writer::from_path(out.join("class_high.csv"))?;
    let pct = report.dynamic.class_high_pct();
    for k in 0..report.dynamic.class_pixels.len() {
        w.serialize(ClassRow {
            class: k,
            textured: spec.is_textured(k),
            pixels: report.dynamic.class_pixels[k],
            high_pixels: report.dynamic.class_high[k],
            high_pct: pct[k],
        })?;
    }
    w.flush().map_err(io_err(out))?;

    if cfg.eval.decision_maps {
        let d = data.val.first().map(|s| s.image.dims());
        for (s, e) in data.val.iter().zip(&images) {
            let d = d.expect("non-empty");
            let grid = BlockGrid::for_image(d.h, d.w, cfg.train.block_size, e.actions.clone())?;
            write_pgm(&decision_map(&grid), &out.join(format!("decision_{}.pgm", s.id)))?;
        }
    }
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(out.join("eval.json"), json + "\n").map_err(io_err(out))?;
    Ok(report)
}
