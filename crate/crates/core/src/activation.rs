//! Activation functions.
//!
//! The BW-ReLU activation is the second-order B-spline wavelet
//!
//! ```text
//! psi(x) = 1/6 σ(x) − 8/6 σ(x−½) + 23/6 σ(x−1) − 16/3 σ(x−3/2)
//!        + 23/6 σ(x−2) − 8/6 σ(x−5/2) + 1/6 σ(x−3)
//! ```
//!
//! a continuous piecewise-linear function supported on `[0, 3]`. Every
//! activation is applied as `ζ(c·z)` for a per-kind scale `c` (plain ReLU
//! and the identity ignore it).

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One term `coefficient · σ(x − shift)` of the wavelet's ReLU expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluAtom {
    pub coefficient: f64,
    pub shift: f64,
}

pub const PSI_ATOMS: [ReluAtom; 7] = [
    ReluAtom { coefficient: 1.0 / 6.0, shift: 0.0 },
    ReluAtom { coefficient: -8.0 / 6.0, shift: 0.5 },
    ReluAtom { coefficient: 23.0 / 6.0, shift: 1.0 },
    ReluAtom { coefficient: -16.0 / 3.0, shift: 1.5 },
    ReluAtom { coefficient: 23.0 / 6.0, shift: 2.0 },
    ReluAtom { coefficient: -8.0 / 6.0, shift: 2.5 },
    ReluAtom { coefficient: 1.0 / 6.0, shift: 3.0 },
];

/// Support of `psi`.
pub const PSI_SUPPORT: (f64, f64) = (0.0, 3.0);

// psi at the knots 0, ½, …, 3 and its slope on each of the six segments.
const KNOT_VALUES: [f64; 7] = [0.0, 1.0 / 12.0, -0.5, 5.0 / 6.0, -0.5, 1.0 / 12.0, 0.0];
const SEGMENT_SLOPES: [f64; 6] = [
    1.0 / 6.0,
    -7.0 / 6.0,
    8.0 / 3.0,
    -8.0 / 3.0,
    7.0 / 6.0,
    -1.0 / 6.0,
];

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn psi(x: f64) -> f64 {
    if !(x > 0.0 && x < 3.0) {
        return 0.0;
    }
    let seg = ((2.0 * x) as usize).min(5);
    KNOT_VALUES[seg] + SEGMENT_SLOPES[seg] * (x - 0.5 * seg as f64)
}

/// Right-derivative of [`psi`].
#[inline]
pub fn psi_prime(x: f64) -> f64 {
    if !(0.0..3.0).contains(&x) {
        return 0.0;
    }
    SEGMENT_SLOPES[((2.0 * x) as usize).min(5)]
}

/// `psi` evaluated literally as its seven-ReLU sum.
pub fn psi_relu_sum(x: f64) -> f64 {
    PSI_ATOMS
        .iter()
        .map(|a| a.coefficient * relu(x - a.shift))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    /// Wavelet activation `psi(c·z)`.
    BwRelu { c: f64 },
    /// `sin(ω₀·z)`.
    Sine { omega0: f64 },
    /// Real Gaussian `exp(−(σ₀·z)²)`.
    Gaussian { sigma0: f64 },
    Identity,
}

impl ActivationKind {
    pub const NAMES: [&'static str; 5] = ["relu", "bwrelu", "sine", "gauss", "identity"];

    /// Builds a kind from its name; `scale` is required for the scaled kinds
    /// and ignored for `relu` / `identity`.
    pub fn from_name(name: &str, scale: Option<f64>) -> Result<Self> {
        let need_scale = || -> Result<f64> {
            let s = scale.ok_or_else(|| Error::config(format!("activation `{name}` needs a scale")))?;
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("activation scale must be > 0, got {s}")));
            }
            Ok(s)
        };
        match name {
            "relu" => Ok(ActivationKind::Relu),
            "identity" => Ok(ActivationKind::Identity),
            "bwrelu" => Ok(ActivationKind::BwRelu { c: need_scale()? }),
            "sine" => Ok(ActivationKind::Sine { omega0: need_scale()? }),
            "gauss" => Ok(ActivationKind::Gaussian { sigma0: need_scale()? }),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::BwRelu { .. } => "bwrelu",
            ActivationKind::Sine { .. } => "sine",
            ActivationKind::Gaussian { .. } => "gauss",
            ActivationKind::Identity => "identity",
        }
    }

    pub fn scale(&self) -> Option<f64> {
        match *self {
            ActivationKind::BwRelu { c } => Some(c),
            ActivationKind::Sine { omega0 } => Some(omega0),
            ActivationKind::Gaussian { sigma0 } => Some(sigma0),
            ActivationKind::Relu | ActivationKind::Identity => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.scale() {
            Some(s) if !(s > 0.0 && s.is_finite()) => Err(Error::config(format!(
                "{} scale must be > 0, got {s}",
                self.name()
            ))),
            _ => Ok(()),
        }
    }

    /// Value and derivative (with respect to `z`, chain factor included).
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64) {
        match *self {
            ActivationKind::Relu => {
                if z >= 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            ActivationKind::BwRelu { c } => {
                let u = c * z;
                (psi(u), c * psi_prime(u))
            }
            ActivationKind::Sine { omega0 } => {
                let (s, co) = (omega0 * z).sin_cos();
                (s, omega0 * co)
            }
            ActivationKind::Gaussian { sigma0 } => {
                let u = sigma0 * z;
                let g = (-u * u).exp();
                (g, -2.0 * sigma0 * u * g)
            }
            ActivationKind::Identity => (z, 1.0),
        }
    }

    /// Elementwise values and derivatives of the activation at `z`.
    pub fn apply(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut values = vec![0.0; z.len()];
        let mut derivs = vec![0.0; z.len()];
        self.apply_into(z, &mut values, &mut derivs);
        (values, derivs)
    }

    pub(crate) fn apply_into(&self, z: &[f64], values: &mut [f64], derivs: &mut [f64]) {
        for ((zi, v), d) in z.iter().zip(values.iter_mut()).zip(derivs.iter_mut()) {
            (*v, *d) = self.eval(*zi);
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scale() {
            Some(s) => write!(f, "{}({s})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

/// A single ReLU neuron `x ↦ output_weight · σ(input_weightᵀx − bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNeuron {
    pub input_weight: Vec<f64>,
    pub bias: f64,
    pub output_weight: Vec<f64>,
}

impl ReluNeuron {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let pre: f64 = self.input_weight.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() - self.bias;
        let a = relu(pre);
        self.output_weight.iter().map(|v| v * a).collect()
    }
}

/// The seven ReLU neurons whose sum is `v · psi(c (wᵀx − b))`.
pub fn expand_to_relus(w: &[f64], b: f64, v: &[f64], c: f64) -> Result<[ReluNeuron; 7]> {
    if !(c > 0.0) {
        return Err(Error::config(format!("scale must be > 0, got {c}")));
    }
    let input_weight: Vec<f64> = w.iter().map(|wi| c * wi).collect();
    Ok(PSI_ATOMS.map(|atom| ReluNeuron {
        input_weight: input_weight.clone(),
        bias: c * b + atom.shift,
        output_weight: v.iter().map(|vi| atom.coefficient * vi).collect(),
    }))
}

/// Fourier features `(sin 2ʲπxᵢ, cos 2ʲπxᵢ)` for every coordinate `i` and
/// level `j < levels`, grouped by coordinate. Output length is `2·d·levels`.
pub fn positional_encoding(x: &[f64], levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() * levels);
    for &xi in x {
        let mut freq = PI;
        for _ in 0..levels {
            let (s, c) = (freq * xi).sin_cos();
            out.push(s);
            out.push(c);
            freq *= 2.0;
        }
    }
    out
}

/// Row-wise [`positional_encoding`] of a coordinate batch.
pub fn encode_batch(x: &Matrix, levels: usize) -> Matrix {
    let width = 2 * x.cols() * levels;
    let mut data = Vec::with_capacity(x.rows() * width);
    for i in 0..x.rows() {
        data.extend(positional_encoding(x.row(i), levels));
    }
    Matrix::from_vec(x.rows(), width, data).expect("encoding of finite coordinates is finite")
}
