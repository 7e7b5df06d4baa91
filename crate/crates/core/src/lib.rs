//! Implicit neural representations built from the second-order B-spline
//! wavelet expressed as seven constrained ReLUs ("BW-ReLU"), together with the
//! baselines, training loop, imaging operators and the conditioning /
//! variation-norm diagnostics used to study them.
//!
//! Everything is plain `f64` on the CPU. The crate is organised bottom-up:
//!
//! * [`linalg`]: dense matrices and a cyclic-Jacobi symmetric eigensolver.
//! * [`activation`]: the wavelet `psi`, baselines and positional encoding.
//! * [`network`]: coordinate MLPs with hand-written reverse-mode gradients.
//! * [`training`]: Adam, exponential learning-rate decay and the fit loop.
//! * [`operators`]: sampling, block downsampling and a parallel-beam Radon
//!   transform, each with its exact adjoint.
//! * [`diagnostics`]: Gram-matrix spectra, variation norms and PSNR.
//! * [`io`] / [`phantom`]: PGM images and the synthetic test images.

pub mod activation;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod network;
pub mod operators;
pub mod phantom;
pub mod training;

pub use activation::{positional_encoding, psi, psi_prime, ActivationKind, ReluAtom};
pub use diagnostics::{psnr, GramConstruction, GramReport, VariationReport};
pub use error::{Error, Result};
pub use linalg::{Condition, Matrix, Spectrum};
pub use network::{ForwardTrace, Gradients, Layer, LayerSpec, NetworkParams, Workspace};
pub use operators::{ForwardTask, ImageGrid, Operator, Sinogram, TaskKind};
pub use training::{AdamState, TrainConfig, TrainLog, TrainOutcome};
