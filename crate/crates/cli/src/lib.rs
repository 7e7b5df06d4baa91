//! Command-line experiments for BW-ReLU implicit neural representations.
//!
//! ```text
//! bwinr fit          --task sigrep --act bwrelu --c 3 --epochs 1000 --out out/sigrep
//! bwinr ct           --act relu-pe --epochs 2000 --out out/ct
//! bwinr superres     --image butterfly.pgm --out out/sr
//! bwinr conditioning --j-max 8 --k-list 8,16,32,64,128,256 --out out/cond
//! bwinr vnorm-sweep  --c-list 1,2,3,5 --target-loss 1e-3 --out out/sweep
//! bwinr image        --kind phantom --size 128 --out phantom128.pgm
//! ```
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical failure.

pub mod commands;
pub mod experiment;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use bwinr_core::io::save_image;
use bwinr_core::{Error, Result, TaskKind};

use crate::experiment::{Builtin, ExperimentConfig, ImageSource, Method};

#[derive(Debug, Parser)]
#[command(name = "bwinr", version, about = "B-spline wavelet ReLU implicit neural representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an image (signal representation by default).
    #[command(allow_negative_numbers = true)]
    Fit(TrainArgs),
    /// Reconstruct an image from its sinogram.
    #[command(allow_negative_numbers = true)]
    Ct(TrainArgs),
    /// Reconstruct an image from a block-downsampled copy.
    #[command(allow_negative_numbers = true)]
    Superres(TrainArgs),
    /// Gram-matrix spectra of the dyadic wavelet and evenly spaced ReLU systems.
    Conditioning(ConditioningArgs),
    /// Train BW-ReLU networks over several scales to equal loss and compare
    /// PSNR with the summed variation norm.
    #[command(allow_negative_numbers = true)]
    VnormSweep(SweepArgs),
    /// Write one of the built-in test images as PGM.
    Image(ImageArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// sigrep, superres or ct.
    #[arg(long)]
    pub task: Option<String>,
    /// 8-bit binary PGM; a built-in image is used when absent.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Built-in image (phantom or pattern) used when --image is absent.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Side length of the built-in image.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// relu, bwrelu, sine, gauss or relu-pe.
    #[arg(long, default_value = "bwrelu")]
    pub act: String,
    /// Activation scale: c, ω₀ or σ₀.
    #[arg(long)]
    pub c: Option<f64>,
    /// Positional-encoding levels for relu-pe.
    #[arg(long)]
    pub pe_levels: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Hidden layers.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning-rate decay r over the whole run.
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Weight decay λ on weights (biases are not regularised).
    #[arg(long, default_value_t = 0.0)]
    pub wd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Diagnostic period in epochs (default: epochs / 100).
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Stop once the training loss reaches this value.
    #[arg(long)]
    pub target_loss: Option<f64>,
    /// Log the feature-Gram condition number of the last hidden layer.
    #[arg(long)]
    pub track_condition: bool,
    /// Evaluate at most this many pixels at a time.
    #[arg(long)]
    pub chunk: Option<usize>,
    /// Super-resolution factor.
    #[arg(long)]
    pub factor: Option<usize>,
    /// Number of CT projection angles.
    #[arg(long)]
    pub angles: Option<usize>,
    /// Number of CT detectors (default: image diagonal).
    #[arg(long)]
    pub detectors: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConditioningArgs {
    #[arg(long, default_value_t = 8)]
    pub j_max: u32,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256")]
    pub k_list: Vec<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,5")]
    pub c_list: Vec<f64>,
    /// One learning rate per scale.
    #[arg(long, value_delimiter = ',')]
    pub lr_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct ImageArgs {
    /// phantom or pattern.
    #[arg(long, default_value = "phantom")]
    pub kind: String,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    /// Merges the flags over the defaults for `task`. `forced` is the task
    /// implied by the subcommand, if any.
    pub fn to_config(&self, forced: Option<TaskKind>, default: TaskKind) -> Result<ExperimentConfig> {
        let flag = self.task.as_deref().map(TaskKind::from_name).transpose()?;
        let task = match (forced, flag) {
            (Some(f), Some(t)) if f != t => {
                return Err(Error::Config(format!(
                    "--task {} conflicts with the `{}` command",
                    t.name(),
                    f.name()
                )))
            }
            (Some(f), _) => f,
            (None, Some(t)) => t,
            (None, None) => default,
        };
        let method: Method = self.act.parse()?;
        let mut cfg = ExperimentConfig::defaults(task, method);
        cfg.image = match (&self.image, &self.builtin) {
            (Some(_), Some(_)) => return Err(Error::Config("use either --image or --builtin".into())),
            (Some(path), None) => ImageSource::File(path.clone()),
            (None, Some(name)) => ImageSource::Builtin {
                kind: name.parse()?,
                size: self.size,
            },
            (None, None) => match cfg.image {
                ImageSource::Builtin { kind, .. } => ImageSource::Builtin { kind, size: self.size },
                other => other,
            },
        };
        if let Some(c) = self.c {
            if !method.has_scale() {
                return Err(Error::Config(format!("--c has no effect for --act {method}")));
            }
            cfg.scale = c;
        }
        if self.pe_levels.is_some() && method != Method::ReluPe {
            return Err(Error::Config("--pe-levels only applies to --act relu-pe".into()));
        }
        cfg.pe_levels = self.pe_levels;
        cfg.width = self.width.unwrap_or(cfg.width);
        cfg.hidden_layers = self.layers.unwrap_or(cfg.hidden_layers);
        cfg.lr = self.lr.unwrap_or(cfg.lr);
        cfg.decay = self.decay.unwrap_or(cfg.decay);
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.weight_decay = self.wd;
        cfg.seed = self.seed;
        cfg.out = self.out.clone();
        cfg.log_every = self.log_every;
        cfg.target_loss = self.target_loss;
        cfg.track_condition = self.track_condition;
        cfg.chunk = self.chunk;
        if let Some(f) = self.factor {
            cfg.task_params.superres_factor = f;
        }
        if let Some(a) = self.angles {
            if a == 0 {
                return Err(Error::Config("--angles must be positive".into()));
            }
            cfg.task_params.ct_angles = a;
        }
        cfg.task_params.ct_detectors = self.detectors;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Shape(_) | Error::UnsupportedKind(_) => 1,
        Error::Io { .. } | Error::Format { .. } | Error::Csv(_) => 2,
        Error::Numerical(_) | Error::Diverged { .. } => 3,
    }
}

/// Runs a parsed command, printing a short report to `out`.
pub fn run(cli: Cli, mut out: impl std::io::Write) -> Result<()> {
    let print_err = |e: std::io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match cli.command {
        Command::Fit(a) => {
            let cfg = a.to_config(None, TaskKind::SignalRepresentation)?;
            let r = commands::cmd_fit(&cfg)?;
            commands::print_summary(&r.summary, &mut out).map_err(print_err)?;
        }
        Command::Ct(a) => {
            let cfg = a.to_config(Some(TaskKind::ComputedTomography), TaskKind::ComputedTomography)?;
            let r = commands::cmd_fit(&cfg)?;
            commands::print_summary(&r.summary, &mut out).map_err(print_err)?;
        }
        Command::Superres(a) => {
            let cfg = a.to_config(Some(TaskKind::SuperResolution), TaskKind::SuperResolution)?;
            let r = commands::cmd_fit(&cfg)?;
            commands::print_summary(&r.summary, &mut out).map_err(print_err)?;
        }
        Command::Conditioning(a) => {
            let r = commands::cmd_conditioning(a.j_max, &a.k_list, &a.out)?;
            let worst = r.dyadic.iter().map(|d| d.kappa).fold(0.0, f64::max);
            writeln!(out, "dyadic wavelet Gram: max condition number {worst:.4} over J = 1..={}", a.j_max)
                .map_err(print_err)?;
            writeln!(out, "evenly spaced ReLU Gram: condition number ~ K^{:.3}", r.relu_slope).map_err(print_err)?;
        }
        Command::VnormSweep(a) => {
            let cfg = a.train.to_config(None, TaskKind::ComputedTomography)?;
            let rows = commands::cmd_vnorm_sweep(&cfg, &a.c_list, a.lr_list.as_deref())?;
            commands::print_sweep(&rows, &mut out).map_err(print_err)?;
        }
        Command::Image(a) => {
            let kind: Builtin = a.kind.parse()?;
            if a.size == 0 {
                return Err(Error::Config("--size must be positive".into()));
            }
            save_image(&kind.render(a.size), &a.out)?;
        }
    }
    Ok(())
}
