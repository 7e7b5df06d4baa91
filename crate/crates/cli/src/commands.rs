//! The experiment commands. Each one validates its configuration, runs,
//! and writes its outputs into the configured directory.

use std::path::Path;

use bwinr_core::diagnostics::{build_dyadic_gram, build_relu_gram, log_log_slope, variation_norm_deep};
use bwinr_core::io::save_image;
use bwinr_core::network::save_checkpoint;
use bwinr_core::operators::{downsample, make_task, Operator};
use bwinr_core::training::{evaluate, train};
use bwinr_core::{psnr, Error, ImageGrid, NetworkParams, Result, TaskKind, TrainLog};

use crate::experiment::{ensure_dir, ExperimentConfig, Method};
use crate::report::{
    sweep_extremes, variation_rows, write_rows, DyadicRow, ReluGramRow, RunSummary, SweepRow,
};

pub const RECONSTRUCTION: &str = "reconstruction.pgm";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const VARIATION: &str = "variation.csv";
pub const CHECKPOINT: &str = "checkpoint.txt";
pub const SUMMARY: &str = "summary.csv";
pub const SINOGRAM: &str = "sinogram.csv";
pub const LOW_RES: &str = "lowres.pgm";
pub const TARGET: &str = "target.pgm";
pub const DYADIC_GRAM: &str = "dyadic_gram.csv";
pub const RELU_GRAM: &str = "relu_gram.csv";
pub const SWEEP: &str = "vnorm_sweep.csv";

/// Result of one training run, kept in memory for callers.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub summary: RunSummary,
    pub params: NetworkParams,
    pub log: TrainLog,
    pub reconstruction: ImageGrid,
}

/// Trains on the configured task without writing anything.
pub fn run_training(cfg: &ExperimentConfig) -> Result<(FitResult, ImageGrid)> {
    cfg.validate()?;
    let image = cfg.image.load()?;
    let task = make_task(cfg.task, &image, cfg.task_params)?;
    let train_cfg = cfg.train_config(image.height, image.width)?;
    let outcome = train(&train_cfg, &task)?;
    let values = evaluate(&outcome.params, &task.coords, cfg.chunk)?;
    let reconstruction = ImageGrid::new(image.height, image.width, values)?;
    let psnr_db = psnr(&image, &reconstruction.clamped())?;
    let vnorm_total = match variation_norm_deep(&outcome.params) {
        Ok(r) => Some(r.total),
        Err(Error::UnsupportedKind(_)) => None,
        Err(e) => return Err(e),
    };
    let summary = RunSummary {
        task: cfg.task.name().into(),
        act: cfg.method.name().into(),
        scale: cfg.method.has_scale().then_some(cfg.scale),
        width: cfg.width,
        layers: cfg.hidden_layers,
        epochs: cfg.epochs,
        steps: outcome.steps,
        final_loss: outcome.final_loss,
        psnr: Some(psnr_db),
        vnorm_total,
        reached_target: outcome.reached_target,
    };
    Ok((
        FitResult {
            summary,
            params: outcome.params,
            log: outcome.log,
            reconstruction,
        },
        image,
    ))
}

fn write_sinogram(path: &Path, geom_angles: &[f64], detectors: usize, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["angle".to_string()];
    header.extend((0..detectors).map(|d| format!("d{d}")));
    w.write_record(&header)?;
    for (a, angle) in geom_angles.iter().enumerate() {
        let mut rec = vec![angle.to_string()];
        rec.extend(values[a * detectors..(a + 1) * detectors].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `fit` / `ct` / `superres`: train, then write the reconstruction, the
/// training log, the variation norm, a checkpoint and a one-row summary,
/// plus the task's measurements.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<FitResult> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let (result, image) = run_training(cfg)?;
    save_image(&result.reconstruction, &cfg.output_path(RECONSTRUCTION))?;
    save_image(&image, &cfg.output_path(TARGET))?;
    result.log.save(&cfg.output_path(TRAIN_LOG))?;
    save_checkpoint(&result.params, &cfg.output_path(CHECKPOINT))?;
    match variation_norm_deep(&result.params) {
        Ok(report) => write_rows(&variation_rows(&report), &cfg.output_path(VARIATION))?,
        Err(Error::UnsupportedKind(_)) => {}
        Err(e) => return Err(e),
    }
    write_rows(std::slice::from_ref(&result.summary), &cfg.output_path(SUMMARY))?;
    match cfg.task {
        TaskKind::ComputedTomography => {
            let task = make_task(cfg.task, &image, cfg.task_params)?;
            if let Operator::Radon(geom) = &task.operator {
                write_sinogram(&cfg.output_path(SINOGRAM), &geom.angles, geom.detectors, &task.target)?;
            }
        }
        TaskKind::SuperResolution => {
            let low = downsample(&image, cfg.task_params.superres_factor)?;
            save_image(&low, &cfg.output_path(LOW_RES))?;
        }
        TaskKind::SignalRepresentation => {}
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningResult {
    pub dyadic: Vec<DyadicRow>,
    pub relu: Vec<ReluGramRow>,
    /// Least-squares exponent of `κ(G_σ)` against `K`.
    pub relu_slope: f64,
}

/// Spectra of the dyadic wavelet Gram for `J = 1..=j_max` and of the evenly
/// spaced ReLU Gram for each `K`.
pub fn conditioning(j_max: u32, k_list: &[usize]) -> Result<ConditioningResult> {
    if j_max == 0 || k_list.is_empty() {
        return Err(Error::Config("need J_max >= 1 and at least one K".into()));
    }
    let dyadic = (1..=j_max)
        .map(|j| {
            let g = build_dyadic_gram(j)?;
            let (lo, hi) = g.gershgorin_hull();
            Ok(DyadicRow {
                scales: j,
                neurons: g.dim(),
                lambda_min: g.spectrum.min(),
                lambda_max: g.spectrum.max(),
                kappa: g.condition.value,
                floored: g.condition.floored,
                gershgorin_lo: lo,
                gershgorin_hi: hi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let relu = k_list
        .iter()
        .map(|&k| {
            let g = build_relu_gram(k)?;
            Ok(ReluGramRow {
                neurons: k,
                lambda_min: g.spectrum.min(),
                lambda_max: g.spectrum.max(),
                kappa: g.condition.value,
                floored: g.condition.floored,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ks: Vec<f64> = relu.iter().map(|r| r.neurons as f64).collect();
    let kappas: Vec<f64> = relu.iter().map(|r| r.kappa).collect();
    let relu_slope = if relu.len() >= 2 { log_log_slope(&ks, &kappas) } else { f64::NAN };
    Ok(ConditioningResult { dyadic, relu, relu_slope })
}

pub fn cmd_conditioning(j_max: u32, k_list: &[usize], out: &Path) -> Result<ConditioningResult> {
    let result = conditioning(j_max, k_list)?;
    ensure_dir(out)?;
    write_rows(&result.dyadic, &out.join(DYADIC_GRAM))?;
    write_rows(&result.relu, &out.join(RELU_GRAM))?;
    Ok(result)
}

/// Trains one BW-ReLU network per scale `c` (optionally with its own
/// learning rate), each stopped at the configured target loss, and records
/// PSNR and the summed layer variation norm.
pub fn vnorm_sweep(cfg: &ExperimentConfig, c_list: &[f64], lr_list: Option<&[f64]>) -> Result<Vec<SweepRow>> {
    if cfg.method != Method::BwRelu {
        return Err(Error::Config("the variation-norm sweep needs --act bwrelu".into()));
    }
    if c_list.is_empty() {
        return Err(Error::Config("empty list of scales".into()));
    }
    if let Some(lrs) = lr_list {
        if lrs.len() != c_list.len() {
            return Err(Error::Config(format!(
                "{} learning rates for {} scales",
                lrs.len(),
                c_list.len()
            )));
        }
    }
    c_list
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut run = cfg.clone();
            run.scale = c;
            if let Some(lrs) = lr_list {
                run.lr = lrs[i];
            }
            let (fit, _) = run_training(&run)?;
            Ok(SweepRow {
                c,
                lr: run.lr,
                seed: run.seed,
                steps: fit.summary.steps,
                final_loss: fit.summary.final_loss,
                reached_target: fit.summary.reached_target,
                psnr: fit.summary.psnr.unwrap_or(f64::NAN),
                vnorm_total: fit.summary.vnorm_total.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

pub fn cmd_vnorm_sweep(cfg: &ExperimentConfig, c_list: &[f64], lr_list: Option<&[f64]>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    ensure_dir(&cfg.out)?;
    let rows = vnorm_sweep(cfg, c_list, lr_list)?;
    write_rows(&rows, &cfg.output_path(SWEEP))?;
    Ok(rows)
}

pub fn print_sweep(rows: &[SweepRow], mut out: impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "{:>6} {:>10} {:>8} {:>12} {:>9} {:>12}", "c", "lr", "steps", "loss", "psnr", "vnorm")?;
    for r in rows {
        writeln!(
            out,
            "{:>6} {:>10.2e} {:>8} {:>12.4e} {:>9.2} {:>12.4e}",
            r.c, r.lr, r.steps, r.final_loss, r.psnr, r.vnorm_total
        )?;
    }
    if let Some((best, lowest)) = sweep_extremes(rows) {
        writeln!(
            out,
            "best PSNR at c = {}, lowest variation norm at c = {}",
            rows[best].c, rows[lowest].c
        )?;
    }
    Ok(())
}

pub fn print_summary(s: &RunSummary, mut out: impl std::io::Write) -> std::io::Result<()> {
    let scale = s.scale.map(|c| format!("({c})")).unwrap_or_default();
    write!(
        out,
        "{} {}{}: {} steps, loss {:.4e}",
        s.task, s.act, scale, s.steps, s.final_loss
    )?;
    if let Some(p) = s.psnr {
        write!(out, ", PSNR {p:.2} dB")?;
    }
    if let Some(v) = s.vnorm_total {
        write!(out, ", variation norm {v:.4e}")?;
    }
    writeln!(out)
}
