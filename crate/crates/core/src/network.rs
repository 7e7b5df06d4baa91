//! Coordinate MLPs with hand-written reverse-mode gradients.
//!
//! Layer `ℓ` maps its input `h` to `ζ_ℓ(c_ℓ (W_ℓ h − b_ℓ))`; the last layer
//! uses the identity. Batches are row-major: one coordinate per row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::{encode_batch, ActivationKind};
use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: ActivationKind,
}

impl LayerSpec {
    /// `hidden_layers` hidden layers of `width` units followed by a linear
    /// output layer.
    pub fn mlp(
        in_dim: usize,
        width: usize,
        hidden_layers: usize,
        out_dim: usize,
        activation: ActivationKind,
    ) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(hidden_layers + 1);
        let mut prev = in_dim;
        for _ in 0..hidden_layers {
            specs.push(LayerSpec {
                in_dim: prev,
                out_dim: width,
                activation,
            });
            prev = width;
        }
        specs.push(LayerSpec {
            in_dim: prev,
            out_dim,
            activation: ActivationKind::Identity,
        });
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out_dim × in_dim`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
    /// Raw coordinate dimension fed to the network.
    pub coord_dim: usize,
    /// Number of Fourier levels when inputs are positionally encoded.
    pub encoding_levels: Option<usize>,
    pub seed: u64,
}

fn check_specs(specs: &[LayerSpec], first_in: usize) -> Result<()> {
    let Some(last) = specs.last() else {
        return Err(Error::config("network needs at least one layer"));
    };
    if last.activation != ActivationKind::Identity {
        return Err(Error::config("the output layer must use the identity activation"));
    }
    let mut prev = first_in;
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::config(format!("layer {i} has a zero dimension")));
        }
        if s.in_dim != prev {
            return Err(Error::config(format!(
                "layer {i} expects {} inputs but receives {prev}",
                s.in_dim
            )));
        }
        s.activation.validate()?;
        prev = s.out_dim;
    }
    Ok(())
}

/// Uniform fan-in initialisation: weights on `±√(6/in_dim)`, hidden biases
/// on `[−1, 1]`, output bias zero. Deterministic in `seed`.
pub fn init_network(specs: &[LayerSpec], seed: u64) -> Result<NetworkParams> {
    let coord_dim = specs.first().map_or(0, |s| s.in_dim);
    check_specs(specs, coord_dim)?;
    Ok(sample_layers(specs, coord_dim, None, seed))
}

/// Like [`init_network`] for a network whose coordinates are first mapped
/// through a `levels`-level positional encoding.
pub fn init_encoded_network(
    coord_dim: usize,
    levels: usize,
    specs: &[LayerSpec],
    seed: u64,
) -> Result<NetworkParams> {
    if levels == 0 || coord_dim == 0 {
        return Err(Error::config("positional encoding needs levels >= 1 and coordinates"));
    }
    check_specs(specs, 2 * coord_dim * levels)?;
    Ok(sample_layers(specs, coord_dim, Some(levels), seed))
}

fn sample_layers(
    specs: &[LayerSpec],
    coord_dim: usize,
    encoding_levels: Option<usize>,
    seed: u64,
) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = specs.len() - 1;
    let layers = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let bound = (6.0 / s.in_dim as f64).sqrt();
            let weight = Matrix::from_fn(s.out_dim, s.in_dim, |_, _| rng.random_range(-bound..=bound));
            let bias = if i == last {
                vec![0.0; s.out_dim]
            } else {
                (0..s.out_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
            };
            Layer {
                weight,
                bias,
                activation: s.activation,
            }
        })
        .collect();
    NetworkParams {
        layers,
        coord_dim,
        encoding_levels,
        seed,
    }
}

impl NetworkParams {
    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn hidden_layers(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    /// Hash of every parameter bit pattern; used to detect stale traces.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for l in &self.layers {
            mix(l.weight.rows() as u64);
            mix(l.weight.cols() as u64);
            for v in l.weight.as_slice().iter().chain(&l.bias) {
                mix(v.to_bits());
            }
            mix(l.activation.scale().unwrap_or(0.0).to_bits());
        }
        h
    }

    /// Maps raw coordinates to the first layer's input.
    pub fn encode_inputs(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.coord_dim {
            return Err(Error::shape(format!(
                "network takes {}-dimensional coordinates, got {}",
                self.coord_dim,
                x.cols()
            )));
        }
        Ok(match self.encoding_levels {
            Some(levels) => encode_batch(x, levels),
            None => x.clone(),
        })
    }

    /// Equivalent network with every activation scale folded into the
    /// incoming weights and biases (`W ← cW`, `b ← cb`, `c ← 1`).
    pub fn absorb_scale(&self) -> NetworkParams {
        let mut out = self.clone();
        for layer in &mut out.layers {
            if let Some(c) = layer.activation.scale() {
                layer.weight = layer.weight.scaled(c);
                layer.bias.iter_mut().for_each(|b| *b *= c);
                layer.activation = match layer.activation {
                    ActivationKind::BwRelu { .. } => ActivationKind::BwRelu { c: 1.0 },
                    ActivationKind::Sine { .. } => ActivationKind::Sine { omega0: 1.0 },
                    ActivationKind::Gaussian { .. } => ActivationKind::Gaussian { sigma0: 1.0 },
                    other => other,
                };
            }
        }
        out
    }
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// First-layer input (after any positional encoding).
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    pub post_activations: Vec<Matrix>,
    pub derivatives: Vec<Matrix>,
    fingerprint: u64,
}

impl ForwardTrace {
    fn empty() -> Self {
        ForwardTrace {
            input: Matrix::zeros(0, 0),
            pre_activations: Vec::new(),
            post_activations: Vec::new(),
            derivatives: Vec::new(),
            fingerprint: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn outputs(&self) -> &Matrix {
        self.post_activations.last().expect("at least one layer")
    }
}

fn layer_forward_into(layer: &Layer, h: &Matrix, z: &mut Matrix) {
    z.reshape_scratch(h.rows(), layer.out_dim());
    gemm(1.0, h, false, &layer.weight, true, 0.0, z);
    for r in 0..z.rows() {
        for (zi, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *zi -= b;
        }
    }
}

/// Network outputs only, without keeping a trace.
pub fn predict(p: &NetworkParams, x: &Matrix) -> Result<Matrix> {
    let mut h = p.encode_inputs(x)?;
    let mut z = Matrix::zeros(0, 0);
    for layer in &p.layers {
        layer_forward_into(layer, &h, &mut z);
        if layer.activation != ActivationKind::Identity {
            for v in z.as_mut_slice() {
                *v = layer.activation.eval(*v).0;
            }
        }
        std::mem::swap(&mut h, &mut z);
    }
    Ok(h)
}

fn forward_into(p: &NetworkParams, x: &Matrix, trace: &mut ForwardTrace) -> Result<()> {
    trace.input = p.encode_inputs(x)?;
    let n = trace.input.rows();
    let depth = p.layers.len();
    for v in [&mut trace.pre_activations, &mut trace.post_activations, &mut trace.derivatives] {
        v.resize_with(depth, || Matrix::zeros(0, 0));
    }
    for (l, layer) in p.layers.iter().enumerate() {
        let (before, rest) = trace.post_activations.split_at_mut(l);
        let h = before.last().unwrap_or(&trace.input);
        let z = &mut trace.pre_activations[l];
        layer_forward_into(layer, h, z);
        let a = &mut rest[0];
        let d = &mut trace.derivatives[l];
        a.reshape_scratch(n, layer.out_dim());
        d.reshape_scratch(n, layer.out_dim());
        layer
            .activation
            .apply_into(z.as_slice(), a.as_mut_slice(), d.as_mut_slice());
    }
    trace.fingerprint = p.fingerprint();
    Ok(())
}

pub fn forward(p: &NetworkParams, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    let mut trace = ForwardTrace::empty();
    forward_into(p, x, &mut trace)?;
    Ok((trace.outputs().clone(), trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients laid out like [`NetworkParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(p: &NetworkParams) -> Self {
        Gradients {
            layers: p
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.as_mut_slice().iter_mut().zip(b.weight.as_slice()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).copied())
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

fn backward_into(
    p: &NetworkParams,
    trace: &ForwardTrace,
    dy: &Matrix,
    delta: &mut Matrix,
    scratch: &mut Matrix,
) -> Result<Gradients> {
    if trace.fingerprint != p.fingerprint() || trace.post_activations.len() != p.layers.len() {
        return Err(Error::invalid("trace was produced by different parameters"));
    }
    let n = trace.batch_size();
    if dy.shape() != (n, p.output_dim()) {
        return Err(Error::invalid(format!(
            "cotangent is {}x{}, outputs are {}x{}",
            dy.rows(),
            dy.cols(),
            n,
            p.output_dim()
        )));
    }

    let mut grads = Gradients::zeros_like(p);
    delta.reshape_scratch(n, p.output_dim());
    delta.as_mut_slice().copy_from_slice(dy.as_slice());
    for l in (0..p.layers.len()).rev() {
        for (g, d) in delta
            .as_mut_slice()
            .iter_mut()
            .zip(trace.derivatives[l].as_slice())
        {
            *g *= d;
        }
        let h = if l == 0 {
            &trace.input
        } else {
            &trace.post_activations[l - 1]
        };
        let lg = &mut grads.layers[l];
        gemm(1.0, delta, true, h, false, 0.0, &mut lg.weight);
        for r in 0..n {
            for (b, d) in lg.bias.iter_mut().zip(delta.row(r)) {
                *b -= d;
            }
        }
        if l > 0 {
            scratch.reshape_scratch(n, p.layers[l].in_dim());
            gemm(1.0, delta, false, &p.layers[l].weight, false, 0.0, scratch);
            std::mem::swap(delta, scratch);
        }
    }
    Ok(grads)
}

/// Reverse-mode gradient of `Σᵢ ⟨dYᵢ, Yᵢ⟩` with respect to all parameters.
pub fn backward(p: &NetworkParams, trace: &ForwardTrace, dy: &Matrix) -> Result<Gradients> {
    backward_into(p, trace, dy, &mut Matrix::zeros(0, 0), &mut Matrix::zeros(0, 0))
}

/// Buffers reused across forward/backward passes so repeated training steps
/// do not reallocate activations.
#[derive(Debug, Clone)]
pub struct Workspace {
    trace: ForwardTrace,
    delta: Matrix,
    scratch: Matrix,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            trace: ForwardTrace::empty(),
            delta: Matrix::zeros(0, 0),
            scratch: Matrix::zeros(0, 0),
        }
    }
}

impl Workspace {
    /// Forward pass; returns the network outputs.
    pub fn forward(&mut self, p: &NetworkParams, x: &Matrix) -> Result<&Matrix> {
        forward_into(p, x, &mut self.trace)?;
        Ok(self.trace.outputs())
    }

    /// Backward pass through the most recent [`Workspace::forward`].
    pub fn backward(&mut self, p: &NetworkParams, dy: &Matrix) -> Result<Gradients> {
        backward_into(p, &self.trace, dy, &mut self.delta, &mut self.scratch)
    }

    pub fn trace(&self) -> &ForwardTrace {
        &self.trace
    }
}

/// Mean squared error between outputs and targets, averaged over all entries.
pub fn mse(y: &Matrix, targets: &Matrix) -> f64 {
    let n = y.as_slice().len().max(1) as f64;
    y.as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// MSE and its analytic parameter gradient.
pub fn mse_and_gradient(p: &NetworkParams, x: &Matrix, targets: &Matrix) -> Result<(f64, Gradients)> {
    let (y, trace) = forward(p, x)?;
    if y.shape() != targets.shape() {
        return Err(Error::shape("targets do not match network outputs"));
    }
    let scale = 2.0 / y.as_slice().len().max(1) as f64;
    let dy = Matrix::from_fn(y.rows(), y.cols(), |i, j| scale * (y[(i, j)] - targets[(i, j)]));
    Ok((mse(&y, targets), backward(p, &trace, &dy)?))
}

fn param_mut(p: &mut NetworkParams, index: usize) -> &mut f64 {
    let mut i = index;
    for l in &mut p.layers {
        let nw = l.weight.as_slice().len();
        if i < nw {
            return &mut l.weight.as_mut_slice()[i];
        }
        i -= nw;
        if i < l.bias.len() {
            return &mut l.bias[i];
        }
        i -= l.bias.len();
    }
    panic!("parameter index {index} out of range");
}

/// Largest relative error between the analytic MSE gradient and central
/// differences (`h = 1e-5`), relative to `max(|analytic|, 1e-8)`.
pub fn grad_check(p: &NetworkParams, x: &Matrix, targets: &Matrix) -> Result<f64> {
    const H: f64 = 1e-5;
    let (_, grads) = mse_and_gradient(p, x, targets)?;
    let analytic: Vec<f64> = grads.values().collect();
    let mut probe = p.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *param_mut(&mut probe, i);
        *param_mut(&mut probe, i) = orig + H;
        let up = mse(&predict(&probe, x)?, targets);
        *param_mut(&mut probe, i) = orig - H;
        let down = mse(&predict(&probe, x)?, targets);
        *param_mut(&mut probe, i) = orig;
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((a - fd).abs() / a.abs().max(1e-8));
    }
    Ok(worst)
}

pub const CHECKPOINT_MAGIC: &str = "BWINR1";

/// Text checkpoint:
///
/// ```text
/// BWINR1
/// seed <u64>
/// coord_dim <d>
/// encoding none | fourier <levels>
/// layers <count>
/// layer <out> <in> <activation> <scale or ->
/// <out lines of in weights, row-major>
/// <one line of out biases>
/// ...
/// ```
///
/// Numbers use Rust's shortest round-trip formatting, so save→load is exact.
pub fn checkpoint_to_string(p: &NetworkParams) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(s, "seed {}", p.seed);
    let _ = writeln!(s, "coord_dim {}", p.coord_dim);
    match p.encoding_levels {
        Some(l) => {
            let _ = writeln!(s, "encoding fourier {l}");
        }
        None => {
            let _ = writeln!(s, "encoding none");
        }
    }
    let _ = writeln!(s, "layers {}", p.layers.len());
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    for l in &p.layers {
        let scale = l.activation.scale().map_or("-".to_string(), |c| c.to_string());
        let _ = writeln!(
            s,
            "layer {} {} {} {}",
            l.out_dim(),
            l.in_dim(),
            l.activation.name(),
            scale
        );
        for r in 0..l.out_dim() {
            let _ = writeln!(s, "{}", join(l.weight.row(r)));
        }
        let _ = writeln!(s, "{}", join(&l.bias));
    }
    s
}

pub fn checkpoint_from_str(text: &str) -> Result<NetworkParams> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| Error::invalid(format!("checkpoint ended before {what}")))
    };
    let bad = |line: usize, msg: &str| Error::invalid(format!("checkpoint line {line}: {msg}"));
    let keyed = |(line, s): (usize, &str), key: &str| -> Result<Vec<String>> {
        let mut parts = s.split_whitespace();
        if parts.next() != Some(key) {
            return Err(bad(line, &format!("expected `{key}`")));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let num = |line: usize, s: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| bad(line, "bad number")) };
    let count = |line: usize, s: Option<&String>| -> Result<usize> {
        s.and_then(|v| v.parse().ok()).ok_or_else(|| bad(line, "bad count"))
    };

    let (l0, magic) = next("header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad(l0, "missing BWINR1 header"));
    }
    let h = next("seed")?;
    let seed: u64 = keyed(h, "seed")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(h.0, "bad seed"))?;
    let h = next("coord_dim")?;
    let coord_dim = count(h.0, keyed(h, "coord_dim")?.first())?;
    let h = next("encoding")?;
    let enc = keyed(h, "encoding")?;
    let encoding_levels = match enc.first().map(String::as_str) {
        Some("none") => None,
        Some("fourier") => Some(count(h.0, enc.get(1))?),
        _ => return Err(bad(h.0, "unknown encoding")),
    };
    let h = next("layers")?;
    let n_layers = count(h.0, keyed(h, "layers")?.first())?;

    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let h = next("layer header")?;
        let fields = keyed(h, "layer")?;
        let out = count(h.0, fields.first())?;
        let inp = count(h.0, fields.get(1))?;
        let name = fields.get(2).ok_or_else(|| bad(h.0, "missing activation"))?;
        let scale = match fields.get(3).map(String::as_str) {
            Some("-") | None => None,
            Some(v) => Some(num(h.0, v)?),
        };
        let activation = ActivationKind::from_name(name, scale)?;
        let mut w = Vec::with_capacity(out * inp);
        for _ in 0..out {
            let (line, row) = next("weights")?;
            let vals = row.split_whitespace().map(|v| num(line, v)).collect::<Result<Vec<_>>>()?;
            if vals.len() != inp {
                return Err(bad(line, "wrong number of weights"));
            }
            w.extend(vals);
        }
        let (line, row) = next("biases")?;
        let bias = row.split_whitespace().map(|v| num(line, v)).collect::<Result<Vec<_>>>()?;
        if bias.len() != out {
            return Err(bad(line, "wrong number of biases"));
        }
        layers.push(Layer {
            weight: Matrix::from_vec(out, inp, w)?,
            bias,
            activation,
        });
    }
    let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
    let first_in = match encoding_levels {
        Some(l) => 2 * coord_dim * l,
        None => coord_dim,
    };
    check_specs(&specs, first_in)?;
    Ok(NetworkParams {
        layers,
        coord_dim,
        encoding_levels,
        seed,
    })
}

pub fn save_checkpoint(p: &NetworkParams, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_string(p)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
