//! Adam, the exponential learning-rate schedule and the full-batch training loop.

use std::io::Write as _;
use std::path::Path;

use crate::activation::ActivationKind;
use crate::diagnostics::{feature_gram_condition, psnr_slices, variation_norm_deep};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{init_encoded_network, init_network, predict, Gradients, LayerSpec, NetworkParams, Workspace};
use crate::operators::ForwardTask;

/// Loss above which training is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub decay: f64,
    pub activation: ActivationKind,
    pub width: usize,
    pub hidden_layers: usize,
    /// Positional-encoding levels applied to the coordinates, if any.
    pub encoding_levels: Option<usize>,
    pub weight_decay: f64,
    pub seed: u64,
    /// Diagnostic period; `None` means `max(1, epochs / 100)`.
    pub log_every: Option<usize>,
    /// Stop as soon as the training loss is at or below this value.
    pub target_loss: Option<f64>,
    /// Log the feature-Gram condition number of the last hidden layer.
    pub track_condition: bool,
    /// Evaluate the network over at most this many coordinates at a time.
    /// The update is still exact full-batch.
    pub eval_chunk: Option<usize>,
}

impl TrainConfig {
    pub fn new(activation: ActivationKind, width: usize, hidden_layers: usize) -> Self {
        TrainConfig {
            epochs: 1000,
            lr0: 1e-3,
            decay: 0.1,
            activation,
            width,
            hidden_layers,
            encoding_levels: None,
            weight_decay: 0.0,
            seed: 0,
            log_every: None,
            target_loss: None,
            track_condition: false,
            eval_chunk: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config(format!("decay rate must lie in (0, 1], got {}", self.decay)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.width == 0 || self.hidden_layers == 0 {
            return Err(Error::config("need at least one hidden layer of positive width"));
        }
        if self.log_every == Some(0) || self.eval_chunk == Some(0) || self.encoding_levels == Some(0) {
            return Err(Error::config("log period, chunk size and encoding levels must be positive"));
        }
        if let Some(t) = self.target_loss {
            if !(t >= 0.0) {
                return Err(Error::config(format!("target loss must be non-negative, got {t}")));
            }
        }
        self.activation.validate()
    }

    pub fn diagnostic_period(&self) -> usize {
        self.log_every.unwrap_or((self.epochs / 100).max(1))
    }

    pub fn layer_specs(&self, coord_dim: usize) -> Vec<LayerSpec> {
        let in_dim = match self.encoding_levels {
            Some(l) => 2 * coord_dim * l,
            None => coord_dim,
        };
        LayerSpec::mlp(in_dim, self.width, self.hidden_layers, 1, self.activation)
    }

    pub fn init_params(&self, coord_dim: usize) -> Result<NetworkParams> {
        let specs = self.layer_specs(coord_dim);
        match self.encoding_levels {
            Some(levels) => init_encoded_network(coord_dim, levels, &specs, self.seed),
            None => init_network(&specs, self.seed),
        }
    }
}

/// `η₀ · r^{t/T}`; with `T = 0` the schedule is constant.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    if cfg.epochs == 0 {
        return cfg.lr0;
    }
    cfg.lr0 * cfg.decay.powf(epoch as f64 / cfg.epochs as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(p: &NetworkParams) -> Self {
        let n = p.num_params();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place. Weight decay enters as the
/// extra gradient `2λw` on weights; biases are not regularised.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if state.m.len() != params.num_params() || grads.layers.len() != params.layers.len() {
        return Err(Error::shape("optimizer state does not match the parameters"));
    }
    for (l, g) in params.layers.iter().zip(&grads.layers) {
        if l.weight.shape() != g.weight.shape() || l.bias.len() != g.bias.len() {
            return Err(Error::shape("gradient does not match the parameters"));
        }
    }
    if !grads.all_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    state.step += 1;
    let c1 = 1.0 - state.beta1.powf(state.step as f64);
    let c2 = 1.0 - state.beta2.powf(state.step as f64);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let mut i = 0;
    let mut update = |theta: &mut f64, g: f64, m: &mut [f64], v: &mut [f64]| {
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        *theta -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        i += 1;
    };
    for (l, g) in params.layers.iter_mut().zip(&grads.layers) {
        for (w, &gw) in l.weight.as_mut_slice().iter_mut().zip(g.weight.as_slice()) {
            let gw = gw + 2.0 * weight_decay * *w;
            update(w, gw, &mut state.m, &mut state.v);
        }
        for (b, &gb) in l.bias.iter_mut().zip(&g.bias) {
            update(b, gb, &mut state.m, &mut state.v);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub loss: f64,
    pub psnr: Option<f64>,
    pub lr: f64,
    pub vnorm_total: Option<f64>,
    pub feat_cond: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

pub const LOG_HEADER: [&str; 6] = ["epoch", "loss", "psnr", "lr", "vnorm_total", "feat_cond"];

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    parse_f64(s, line).map(Some)
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::invalid(format!("train log line {line}: bad number `{s}`")))
}

impl TrainLog {
    pub fn push(&mut self, entry: LogEntry) {
        debug_assert!(self.entries.last().is_none_or(|e| e.epoch < entry.epoch));
        self.entries.push(entry);
    }

    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.loss).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.epoch.to_string(),
                e.loss.to_string(),
                opt_field(e.psnr),
                e.lr.to_string(),
                opt_field(e.vnorm_total),
                opt_field(e.feat_cond),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<train log>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn from_csv_reader<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        if r.headers()?.iter().ne(LOG_HEADER) {
            return Err(Error::invalid("train log header does not match"));
        }
        let mut log = TrainLog::default();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let epoch = rec[0]
                .parse()
                .map_err(|_| Error::invalid(format!("train log line {line}: bad epoch `{}`", &rec[0])))?;
            if log.last().is_some_and(|e: &LogEntry| e.epoch >= epoch) {
                return Err(Error::invalid(format!("train log line {line}: epochs not increasing")));
            }
            log.entries.push(LogEntry {
                epoch,
                loss: parse_f64(&rec[1], line)?,
                psnr: parse_opt(&rec[2], line)?,
                lr: parse_f64(&rec[3], line)?,
                vnorm_total: parse_opt(&rec[4], line)?,
                feat_cond: parse_opt(&rec[5], line)?,
            });
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        TrainLog::from_csv_reader(file)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: TrainLog,
    /// Number of optimizer steps taken.
    pub steps: usize,
    /// Loss of the returned parameters.
    pub final_loss: f64,
    pub reached_target: bool,
}

/// Network values at every task coordinate.
pub fn evaluate(p: &NetworkParams, coords: &Matrix, chunk: Option<usize>) -> Result<Vec<f64>> {
    let n = coords.rows();
    let chunk = chunk.unwrap_or(n).max(1);
    if chunk >= n {
        return Ok(predict(p, coords)?.into_vec());
    }
    let mut out = Vec::with_capacity(n * p.output_dim());
    for start in (0..n).step_by(chunk) {
        let rows = chunk.min(n - start);
        out.extend(predict(p, &row_block(coords, start, rows))?.into_vec());
    }
    Ok(out)
}

fn row_block(m: &Matrix, start: usize, rows: usize) -> Matrix {
    let c = m.cols();
    Matrix::from_vec(rows, c, m.as_slice()[start * c..(start + rows) * c].to_vec())
        .expect("row block of a valid matrix")
}

fn task_mse(task: &ForwardTask, f: &[f64]) -> Result<(f64, Vec<f64>)> {
    let af = task.operator.apply(f)?;
    let residual: Vec<f64> = af.iter().zip(&task.target).map(|(a, y)| a - y).collect();
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / residual.len().max(1) as f64;
    Ok((loss, residual))
}

/// Data term `(1/M)‖A f_θ − y‖²`.
pub fn task_loss(p: &NetworkParams, task: &ForwardTask) -> Result<f64> {
    let f = predict(p, &task.coords)?.into_vec();
    Ok(task_mse(task, &f)?.0)
}

/// Data term plus `λ Σ_ℓ ‖W_ℓ‖_F²`.
pub fn objective(p: &NetworkParams, task: &ForwardTask, weight_decay: f64) -> Result<f64> {
    let reg: f64 = p.layers.iter().map(|l| l.weight.frobenius_norm().powi(2)).sum();
    Ok(task_loss(p, task)? + weight_decay * reg)
}

/// The objective written in absorbed parameters `W' = cW`, `b' = cb`: the
/// regulariser of a layer whose scale was `c` becomes `‖W'‖²/c²`. `scales`
/// holds one entry per layer (1 where nothing was absorbed).
pub fn absorbed_objective(
    absorbed: &NetworkParams,
    scales: &[f64],
    task: &ForwardTask,
    weight_decay: f64,
) -> Result<f64> {
    if scales.len() != absorbed.layers.len() {
        return Err(Error::shape("one scale per layer expected"));
    }
    let reg: f64 = absorbed
        .layers
        .iter()
        .zip(scales)
        .map(|(l, c)| l.weight.frobenius_norm().powi(2) / (c * c))
        .sum();
    Ok(task_loss(absorbed, task)? + weight_decay * reg)
}

/// Per-layer scales that [`NetworkParams::absorb_scale`] folds away.
pub fn layer_scales(p: &NetworkParams) -> Vec<f64> {
    p.layers.iter().map(|l| l.activation.scale().unwrap_or(1.0)).collect()
}

/// Loss and exact full-batch gradient for `task`.
pub fn loss_and_gradient(
    p: &NetworkParams,
    task: &ForwardTask,
    chunk: Option<usize>,
) -> Result<(f64, Vec<f64>, Gradients)> {
    loss_and_gradient_in(&mut Workspace::default(), p, task, chunk)
}

fn loss_and_gradient_in(
    ws: &mut Workspace,
    p: &NetworkParams,
    task: &ForwardTask,
    chunk: Option<usize>,
) -> Result<(f64, Vec<f64>, Gradients)> {
    let n = task.coords.rows();
    let chunk = chunk.unwrap_or(n).max(1);
    if chunk >= n {
        let f = ws.forward(p, &task.coords)?.as_slice().to_vec();
        let (loss, residual) = task_mse(task, &f)?;
        let dy = Matrix::from_vec(n, 1, cotangent(task, &residual)?)?;
        let grads = ws.backward(p, &dy)?;
        return Ok((loss, f, grads));
    }
    let f = evaluate(p, &task.coords, Some(chunk))?;
    let (loss, residual) = task_mse(task, &f)?;
    let dy = cotangent(task, &residual)?;
    let mut grads = Gradients::zeros_like(p);
    for start in (0..n).step_by(chunk) {
        let rows = chunk.min(n - start);
        ws.forward(p, &row_block(&task.coords, start, rows))?;
        let d = Matrix::from_vec(rows, 1, dy[start..start + rows].to_vec())?;
        grads.add_assign(&ws.backward(p, &d)?);
    }
    Ok((loss, f, grads))
}

fn cotangent(task: &ForwardTask, residual: &[f64]) -> Result<Vec<f64>> {
    let scale = 2.0 / residual.len().max(1) as f64;
    let scaled: Vec<f64> = residual.iter().map(|r| scale * r).collect();
    task.operator.adjoint(&scaled)
}

fn log_entry(
    cfg: &TrainConfig,
    p: &NetworkParams,
    task: &ForwardTask,
    epoch: usize,
    loss: f64,
    f: &[f64],
) -> Result<LogEntry> {
    let psnr = task.reference.as_ref().map(|r| {
        let clamped: Vec<f64> = f.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        psnr_slices(&r.pixels, &clamped)
    });
    let has_hidden = p.layers.len() > 1;
    let vnorm_total = match variation_norm_deep(p) {
        Ok(r) => Some(r.total),
        Err(Error::UnsupportedKind(_)) => None,
        Err(_) if !has_hidden => None,
        Err(e) => return Err(e),
    };
    let feat_cond = if cfg.track_condition && has_hidden {
        let layer = p.layers.len() - 2;
        Some(feature_gram_condition(p, &task.coords, layer)?.condition.value)
    } else {
        None
    };
    Ok(LogEntry {
        epoch,
        loss,
        psnr,
        lr: lr_at(cfg, epoch),
        vnorm_total,
        feat_cond,
    })
}

/// Initialise from `cfg.seed` and train on `task`.
pub fn train(cfg: &TrainConfig, task: &ForwardTask) -> Result<TrainOutcome> {
    cfg.validate()?;
    let params = cfg.init_params(task.coords.cols())?;
    train_from(cfg, task, params)
}

/// Full-batch Adam on the task MSE starting from `params`.
///
/// Epoch `t` evaluates the loss at the current parameters, logs it when
/// `t` is a multiple of the diagnostic period (and always at the last
/// epoch or on early stop), then takes a step with `lr_at(t)`.
/// `cfg.epochs` steps are taken unless the target loss is reached first.
pub fn train_from(cfg: &TrainConfig, task: &ForwardTask, mut params: NetworkParams) -> Result<TrainOutcome> {
    cfg.validate()?;
    if params.output_dim() != 1 {
        return Err(Error::config("training expects a scalar-output network"));
    }
    let period = cfg.diagnostic_period();
    let mut state = AdamState::new(&params);
    let mut log = TrainLog::default();
    let mut ws = Workspace::default();
    for epoch in 0..=cfg.epochs {
        let last = epoch == cfg.epochs;
        let (loss, f, grads) = if last {
            let f = evaluate(&params, &task.coords, cfg.eval_chunk)?;
            (task_mse(task, &f)?.0, f, None)
        } else {
            let (loss, f, g) = loss_and_gradient_in(&mut ws, &params, task, cfg.eval_chunk)?;
            (loss, f, Some(g))
        };
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged {
                epoch,
                loss,
                log: Box::new(log),
            });
        }
        let reached = cfg.target_loss.is_some_and(|t| loss <= t);
        if last || reached || epoch % period == 0 {
            log.push(log_entry(cfg, &params, task, epoch, loss, &f)?);
        }
        match grads {
            Some(g) if !reached => {
                adam_step(&mut params, &g, &mut state, lr_at(cfg, epoch), cfg.weight_decay)?;
            }
            _ => {
                return Ok(TrainOutcome {
                    params,
                    log,
                    steps: epoch,
                    final_loss: loss,
                    reached_target: reached,
                });
            }
        }
    }
    unreachable!("the final epoch always returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;
    use crate::operators::{make_task, ImageGrid, TaskKind, TaskParams};
    use proptest::prelude::*;

    fn univariate_task(n: usize) -> ForwardTask {
        let x = Matrix::from_fn(n, 1, |i, _| -1.0 + 2.0 * i as f64 / (n - 1) as f64);
        let y = (0..n).map(|i| (3.0 * x[(i, 0)]).sin()).collect();
        ForwardTask::regression("sin3x", x, y).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let mut cfg = TrainConfig::new(ActivationKind::Relu, 4, 1);
        cfg.lr0 = 2e-3;
        cfg.epochs = 10_000;
        assert_eq!(lr_at(&cfg, 0), 2e-3);
        assert!((lr_at(&cfg, cfg.epochs) - 2e-4).abs() < 1e-18);
        assert!((lr_at(&cfg, 5000) - 2e-3 * 10f64.powf(-0.5)).abs() < 1e-18);
        for t in 0..100 {
            assert!(lr_at(&cfg, t * 100 + 100) <= lr_at(&cfg, t * 100));
        }
    }

    fn scalar_net(w: f64, b: f64) -> NetworkParams {
        NetworkParams {
            layers: vec![Layer {
                weight: Matrix::from_vec(1, 1, vec![w]).unwrap(),
                bias: vec![b],
                activation: ActivationKind::Identity,
            }],
            coord_dim: 1,
            encoding_levels: None,
            seed: 0,
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = scalar_net(0.7, -0.2);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = Gradients::zeros_like(&p);
        adam_step(&mut p, &g, &mut s, 0.1, 0.0).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adam_first_step_is_a_signed_lr_step() {
        for g in [3.0, -0.02, 1e-3] {
            let mut p = scalar_net(0.5, 0.0);
            let mut grads = Gradients::zeros_like(&p);
            grads.layers[0].weight[(0, 0)] = g;
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &grads, &mut s, 0.01, 0.0).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p.layers[0].weight[(0, 0)] - 0.5 - expected).abs() < 1e-15);
            assert!((expected + 0.01 * g.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn weight_decay_shrinks_weights_only() {
        let mut p = scalar_net(0.5, 0.4);
        let mut s = AdamState::new(&p);
        let g = Gradients::zeros_like(&p);
        adam_step(&mut p, &g, &mut s, 0.01, 0.1).unwrap();
        assert!(p.layers[0].weight[(0, 0)] < 0.5 && p.layers[0].weight[(0, 0)] > 0.0);
        assert_eq!(p.layers[0].bias[0], 0.4);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut p = scalar_net(0.5, 0.4);
        let mut grads = Gradients::zeros_like(&p);
        grads.layers[0].bias[0] = f64::NAN;
        let mut s = AdamState::new(&p);
        assert!(matches!(
            adam_step(&mut p, &grads, &mut s, 0.01, 0.0),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let mut cfg = TrainConfig::new(ActivationKind::BwRelu { c: 3.0 }, 8, 1);
        cfg.epochs = 0;
        let task = univariate_task(32);
        let out = train(&cfg, &task).unwrap();
        assert_eq!(out.params, cfg.init_params(1).unwrap());
        assert_eq!(out.steps, 0);
        assert_eq!(out.log.entries.len(), 1);
        assert_eq!(out.log.entries[0].epoch, 0);
    }

    #[test]
    fn linear_regression_loss_decreases_monotonically() {
        let n = 50;
        let x = Matrix::from_fn(n, 1, |i, _| i as f64 / n as f64);
        let y = (0..n).map(|i| 2.0 * x[(i, 0)] - 0.5).collect();
        let task = ForwardTask::regression("line", x, y).unwrap();
        let mut cfg = TrainConfig::new(ActivationKind::Relu, 1, 1);
        cfg.epochs = 100;
        cfg.lr0 = 1e-3;
        cfg.decay = 1.0;
        cfg.log_every = Some(1);
        let out = train_from(&cfg, &task, scalar_net(0.0, 0.0)).unwrap();
        let losses = out.log.losses();
        assert_eq!(losses.len(), 101);
        assert!(losses.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let mut cfg = TrainConfig::new(ActivationKind::BwRelu { c: 3.0 }, 16, 2);
        cfg.epochs = 40;
        cfg.log_every = Some(5);
        cfg.track_condition = true;
        let task = univariate_task(64);
        let a = train(&cfg, &task).unwrap();
        let b = train(&cfg, &task).unwrap();
        assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
        assert_eq!(a.params, b.params);
        assert!(a.log.losses().iter().all(|l| l.is_finite()));
        assert!(a.final_loss < a.log.entries[0].loss);
    }

    #[test]
    fn chunked_evaluation_matches_full_batch() {
        let img = ImageGrid::new(6, 8, (0..48).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let task = make_task(TaskKind::ComputedTomography, &img, TaskParams { ct_angles: 5, ..Default::default() }).unwrap();
        let cfg = TrainConfig::new(ActivationKind::BwRelu { c: 2.0 }, 10, 2);
        let p = cfg.init_params(2).unwrap();
        let (l1, f1, g1) = loss_and_gradient(&p, &task, None).unwrap();
        let (l2, f2, g2) = loss_and_gradient(&p, &task, Some(7)).unwrap();
        assert!((l1 - l2).abs() <= 1e-14 * l1.abs());
        assert_eq!(f1, f2);
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn early_stop_at_target_loss() {
        let mut cfg = TrainConfig::new(ActivationKind::BwRelu { c: 3.0 }, 32, 1);
        cfg.epochs = 2000;
        cfg.lr0 = 1e-2;
        let task = univariate_task(64);
        let initial = task_loss(&cfg.init_params(1).unwrap(), &task).unwrap();
        cfg.target_loss = Some(initial * 0.05);
        let out = train(&cfg, &task).unwrap();
        assert!(out.reached_target);
        assert!(out.steps < cfg.epochs);
        assert!(out.final_loss <= initial * 0.05);
        assert_eq!(out.log.last().unwrap().epoch, out.steps);
    }

    #[test]
    fn divergence_is_reported_with_the_log() {
        let mut cfg = TrainConfig::new(ActivationKind::Relu, 1, 1);
        cfg.epochs = 10;
        cfg.log_every = Some(1);
        let n = 4;
        let x = Matrix::from_fn(n, 1, |i, _| i as f64);
        let task = ForwardTask::regression("huge", x, vec![1e7; n]).unwrap();
        match train_from(&cfg, &task, scalar_net(0.0, 0.0)) {
            Err(Error::Diverged { epoch, loss, log }) => {
                assert_eq!(epoch, 0);
                assert!(loss > DIVERGENCE_LOSS);
                assert!(log.entries.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs() {
        let base = TrainConfig::new(ActivationKind::BwRelu { c: 3.0 }, 8, 1);
        let bad = [
            TrainConfig { lr0: 0.0, ..base.clone() },
            TrainConfig { decay: 0.0, ..base.clone() },
            TrainConfig { decay: 1.5, ..base.clone() },
            TrainConfig { weight_decay: -1.0, ..base.clone() },
            TrainConfig { width: 0, ..base.clone() },
            TrainConfig { activation: ActivationKind::BwRelu { c: 0.0 }, ..base.clone() },
            TrainConfig { log_every: Some(0), ..base.clone() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        base.validate().unwrap();
    }

    #[test]
    fn log_csv_roundtrip() {
        let log = TrainLog {
            entries: vec![
                LogEntry { epoch: 0, loss: 0.25, psnr: Some(6.02), lr: 1e-3, vnorm_total: None, feat_cond: Some(12.5) },
                LogEntry { epoch: 10, loss: 1.0 / 3.0, psnr: None, lr: 9.5e-4, vnorm_total: Some(1e3), feat_cond: None },
            ],
        };
        let text = log.to_csv_string();
        assert!(text.starts_with("epoch,loss,psnr,lr,vnorm_total,feat_cond\n"));
        assert!(text.contains("10,0.3333333333333333,,0.00095,1000,\n"));
        assert_eq!(TrainLog::from_csv_reader(text.as_bytes()).unwrap(), log);
        assert!(TrainLog::from_csv_reader("a,b\n1,2\n".as_bytes()).is_err());
        assert!(TrainLog::from_csv_reader("epoch,loss,psnr,lr,vnorm_total,feat_cond\n0,x,,1,,\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn adam_preserves_shape_and_finiteness(
            seed in 0u64..1000,
            gs in prop::collection::vec(-1e3f64..1e3, 1..20),
            lr in 1e-5f64..1.0,
            wd in 0.0f64..1.0,
        ) {
            let specs = LayerSpec::mlp(2, 3, 1, 1, ActivationKind::BwRelu { c: 2.0 });
            let mut p = init_network(&specs, seed).unwrap();
            let shape = p.specs();
            let mut grads = Gradients::zeros_like(&p);
            for (k, l) in grads.layers.iter_mut().enumerate() {
                for (i, w) in l.weight.as_mut_slice().iter_mut().enumerate() {
                    *w = gs[(i + k) % gs.len()];
                }
            }
            let mut s = AdamState::new(&p);
            for _ in 0..3 {
                adam_step(&mut p, &grads, &mut s, lr, wd).unwrap();
            }
            prop_assert_eq!(p.specs(), shape);
            prop_assert!(p.layers.iter().all(|l| l.weight.as_slice().iter().chain(&l.bias).all(|v| v.is_finite())));
        }

        #[test]
        fn schedule_is_non_increasing(t in 0usize..1000, dt in 0usize..1000, r in 0.01f64..=1.0) {
            let mut cfg = TrainConfig::new(ActivationKind::Relu, 4, 1);
            cfg.epochs = 2000;
            cfg.decay = r;
            prop_assert!(lr_at(&cfg, t + dt) <= lr_at(&cfg, t));
        }
    }
}
