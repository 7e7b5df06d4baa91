//! Experiment configuration: which task, which network, which optimiser
//! settings, and where the outputs go.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bwinr_core::io::load_image;
use bwinr_core::operators::TaskParams;
use bwinr_core::phantom::{shepp_logan, test_pattern};
use bwinr_core::{ActivationKind, Error, ImageGrid, Result, TaskKind, TrainConfig};

/// Network family selected with `--act`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Relu,
    BwRelu,
    Sine,
    Gauss,
    ReluPe,
}

impl Method {
    pub const NAMES: [&'static str; 5] = ["relu", "bwrelu", "sine", "gauss", "relu-pe"];

    pub fn name(self) -> &'static str {
        match self {
            Method::Relu => "relu",
            Method::BwRelu => "bwrelu",
            Method::Sine => "sine",
            Method::Gauss => "gauss",
            Method::ReluPe => "relu-pe",
        }
    }

    pub fn has_scale(self) -> bool {
        matches!(self, Method::BwRelu | Method::Sine | Method::Gauss)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Method::Relu),
            "bwrelu" => Ok(Method::BwRelu),
            "sine" => Ok(Method::Sine),
            "gauss" => Ok(Method::Gauss),
            "relu-pe" => Ok(Method::ReluPe),
            other => Err(Error::Config(format!(
                "unknown activation `{other}` (expected one of {})",
                Method::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Built-in synthetic images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Phantom,
    Pattern,
}

impl Builtin {
    pub fn render(self, size: usize) -> ImageGrid {
        match self {
            Builtin::Phantom => shepp_logan(size),
            Builtin::Pattern => test_pattern(size),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Phantom => "phantom",
            Builtin::Pattern => "pattern",
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phantom" => Ok(Builtin::Phantom),
            "pattern" => Ok(Builtin::Pattern),
            other => Err(Error::Config(format!(
                "unknown built-in image `{other}` (expected phantom or pattern)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    File(PathBuf),
    Builtin { kind: Builtin, size: usize },
}

impl ImageSource {
    pub fn load(&self) -> Result<ImageGrid> {
        match self {
            ImageSource::File(path) => load_image(path),
            ImageSource::Builtin { kind, size } => {
                if *size == 0 {
                    return Err(Error::Config("image size must be positive".into()));
                }
                Ok(kind.render(*size))
            }
        }
    }
}

/// Per-task defaults: `(epochs, decay, width)` and `(lr, scale)` per method.
struct TaskDefaults {
    epochs: usize,
    decay: f64,
    width: usize,
    bwrelu: (f64, f64),
    sine: (f64, f64),
    gauss: (f64, f64),
    relu_lr: f64,
}

fn task_defaults(task: TaskKind) -> TaskDefaults {
    match task {
        TaskKind::ComputedTomography => TaskDefaults {
            epochs: 10_000,
            decay: 0.1,
            width: 300,
            bwrelu: (2e-3, 3.0),
            sine: (1e-3, 25.0),
            gauss: (5e-3, 10.0),
            relu_lr: 3e-3,
        },
        TaskKind::SignalRepresentation => TaskDefaults {
            epochs: 1000,
            decay: 0.1,
            width: 300,
            bwrelu: (4e-3, 9.0),
            sine: (2e-3, 50.0),
            gauss: (1e-3, 10.0),
            relu_lr: 4e-3,
        },
        TaskKind::SuperResolution => TaskDefaults {
            epochs: 2000,
            decay: 0.2,
            width: 256,
            bwrelu: (3e-3, 3.0),
            sine: (2e-3, 12.0),
            gauss: (3e-3, 6.0),
            relu_lr: 4e-3,
        },
    }
}

/// Positional-encoding levels for an image: `⌊log₂ max(h, w)⌋ − 1`, so the
/// finest frequency is about the pixel Nyquist rate.
pub fn default_pe_levels(height: usize, width: usize) -> usize {
    let n = height.max(width).max(4);
    (usize::BITS - 1 - n.leading_zeros()) as usize - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub image: ImageSource,
    pub method: Method,
    /// `c`, `ω₀` or `σ₀`; ignored for the ReLU methods.
    pub scale: f64,
    /// Positional-encoding levels for `relu-pe`; `None` picks from the image size.
    pub pe_levels: Option<usize>,
    pub width: usize,
    pub hidden_layers: usize,
    pub lr: f64,
    pub decay: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub log_every: Option<usize>,
    pub target_loss: Option<f64>,
    pub track_condition: bool,
    pub chunk: Option<usize>,
    pub task_params: TaskParams,
}

impl ExperimentConfig {
    /// Reference settings for `task` and `method` on the default built-in image.
    pub fn defaults(task: TaskKind, method: Method) -> Self {
        let d = task_defaults(task);
        let (lr, scale) = match method {
            Method::BwRelu => d.bwrelu,
            Method::Sine => d.sine,
            Method::Gauss => d.gauss,
            Method::Relu | Method::ReluPe => (d.relu_lr, 1.0),
        };
        let kind = match task {
            TaskKind::ComputedTomography => Builtin::Phantom,
            _ => Builtin::Pattern,
        };
        ExperimentConfig {
            task,
            image: ImageSource::Builtin { kind, size: 128 },
            method,
            scale,
            pe_levels: None,
            width: d.width,
            hidden_layers: 3,
            lr,
            decay: d.decay,
            epochs: d.epochs,
            weight_decay: 0.0,
            seed: 0,
            out: PathBuf::from("out"),
            log_every: None,
            target_loss: None,
            track_condition: false,
            chunk: None,
            task_params: TaskParams::default(),
        }
    }

    pub fn activation(&self) -> Result<ActivationKind> {
        let kind = match self.method {
            Method::Relu | Method::ReluPe => ActivationKind::Relu,
            Method::BwRelu => ActivationKind::BwRelu { c: self.scale },
            Method::Sine => ActivationKind::Sine { omega0: self.scale },
            Method::Gauss => ActivationKind::Gaussian { sigma0: self.scale },
        };
        kind.validate()?;
        Ok(kind)
    }

    /// Training configuration for an image of the given shape.
    pub fn train_config(&self, height: usize, width: usize) -> Result<TrainConfig> {
        let encoding_levels = match self.method {
            Method::ReluPe => Some(self.pe_levels.unwrap_or_else(|| default_pe_levels(height, width))),
            _ => None,
        };
        let cfg = TrainConfig {
            epochs: self.epochs,
            lr0: self.lr,
            decay: self.decay,
            activation: self.activation()?,
            width: self.width,
            hidden_layers: self.hidden_layers,
            encoding_levels,
            weight_decay: self.weight_decay,
            seed: self.seed,
            log_every: self.log_every,
            target_loss: self.target_loss,
            track_condition: self.track_condition,
            eval_chunk: self.chunk,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config(16, 16).map(|_| ())
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}
