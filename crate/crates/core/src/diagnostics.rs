//! Conditioning and regularity diagnostics.
//!
//! * Gram matrices of neuron families on `[−1, 1]`: evenly spaced ReLUs and
//!   the dyadic wavelet system `ψ_{j,k}(x) = 2^{j/2} ψ(2^j·(3/2)(x+1) − k)`.
//! * Condition numbers of empirical feature Grams of a trained network.
//! * Variation norms of shallow and deep BW-ReLU networks.
//! * PSNR.

use std::fmt;

use crate::activation::{psi, ActivationKind};
use crate::error::{Error, Result};
use crate::linalg::{gemm, gershgorin_discs, sym_eigvals, Condition, Disc, Matrix, Spectrum};
use crate::network::{forward, NetworkParams};
use crate::operators::ImageGrid;

/// Total variation of the wavelet's derivative: `Σ |ReLU coefficients|`.
pub const PSI_VARIATION: f64 = 16.0;

const GRAM_SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramConstruction {
    ReluEven,
    BsplineDyadic,
    Feature,
}

impl fmt::Display for GramConstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GramConstruction::ReluEven => "relu-even",
            GramConstruction::BsplineDyadic => "bspline-dyadic",
            GramConstruction::Feature => "feature",
        })
    }
}

#[derive(Debug, Clone)]
pub struct GramReport {
    pub construction: GramConstruction,
    pub matrix: Matrix,
    pub spectrum: Spectrum,
    pub condition: Condition,
    pub gershgorin: Vec<Disc>,
}

impl GramReport {
    pub fn from_matrix(construction: GramConstruction, matrix: Matrix) -> Result<Self> {
        let spectrum = sym_eigvals(&matrix, GRAM_SYMMETRY_TOL)?;
        let condition = spectrum.condition()?;
        let gershgorin = gershgorin_discs(&matrix);
        Ok(GramReport {
            construction,
            matrix,
            spectrum,
            condition,
            gershgorin,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Interval `[min(center − radius), max(center + radius)]` covering every disc.
    pub fn gershgorin_hull(&self) -> (f64, f64) {
        self.gershgorin.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d.center - d.radius), hi.max(d.center + d.radius))
        })
    }
}

/// `∫_{−1}^{1} σ(x − a) σ(x − b) dx`.
pub fn relu_inner(a: f64, b: f64) -> f64 {
    let lo = a.max(b).max(-1.0);
    if lo >= 1.0 {
        return 0.0;
    }
    // antiderivative of (x − a)(x − b)
    let f = |x: f64| x * x * x / 3.0 - 0.5 * (a + b) * x * x + a * b * x;
    f(1.0) - f(lo)
}

/// Biases `b_i = −1 + 2i/K`, `i = 0..K`.
pub fn even_relu_biases(k: usize) -> Vec<f64> {
    (0..k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect()
}

/// Gram matrix of `K` evenly spaced ReLUs `σ(x − b_i)` on `[−1, 1]`.
pub fn build_relu_gram(k: usize) -> Result<GramReport> {
    if !(2..=512).contains(&k) {
        return Err(Error::config(format!("ReLU Gram needs 2 <= K <= 512, got {k}")));
    }
    let b = even_relu_biases(k);
    let g = Matrix::from_fn(k, k, |i, j| relu_inner(b[i], b[j]));
    GramReport::from_matrix(GramConstruction::ReluEven, g)
}

/// `(j, k)` for every neuron of the dyadic system with `scales` levels,
/// ordered by scale then shift.
pub fn dyadic_indices(scales: u32) -> Vec<(u32, u32)> {
    (0..scales)
        .flat_map(|j| (0..1u32 << j).map(move |k| (j, k)))
        .collect()
}

/// `ψ_{j,k}(x) = 2^{j/2} ψ(2^j·(3/2)(x + 1) − k)`.
pub fn dyadic_neuron(j: u32, k: u32, x: f64) -> f64 {
    let s = (1u64 << j) as f64;
    s.sqrt() * psi(s * 1.5 * (x + 1.0) - k as f64)
}

/// `⟨ψ_{j1,k1}, ψ_{j2,k2}⟩_{L²[−1,1]}`, exactly.
///
/// In `t = (3/2)(x + 1)` both factors are piecewise linear with knots at
/// `(k + m/2)/2^j`, so Simpson's rule on each knot interval is exact; the
/// Jacobian contributes `2/3`.
pub fn dyadic_inner((j1, k1): (u32, u32), (j2, k2): (u32, u32)) -> f64 {
    let s1 = (1u64 << j1) as f64;
    let s2 = (1u64 << j2) as f64;
    let lo = (k1 as f64 / s1).max(k2 as f64 / s2);
    let hi = ((k1 as f64 + 3.0) / s1).min((k2 as f64 + 3.0) / s2);
    if hi <= lo {
        return 0.0;
    }
    let mut knots: Vec<f64> = (0..=6)
        .map(|m| (k1 as f64 + 0.5 * m as f64) / s1)
        .chain((0..=6).map(|m| (k2 as f64 + 0.5 * m as f64) / s2))
        .filter(|&t| t > lo && t < hi)
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let f = |t: f64| s1.sqrt() * psi(s1 * t - k1 as f64) * s2.sqrt() * psi(s2 * t - k2 as f64);
    let integral: f64 = knots
        .windows(2)
        .map(|w| (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1])))
        .sum();
    2.0 / 3.0 * integral
}

/// Gram matrix of the dyadic wavelet system with `scales` levels
/// (`K = 2^scales − 1` neurons).
pub fn build_dyadic_gram(scales: u32) -> Result<GramReport> {
    if !(1..=10).contains(&scales) {
        return Err(Error::config(format!("dyadic Gram needs 1 <= J <= 10, got {scales}")));
    }
    let idx = dyadic_indices(scales);
    let n = idx.len();
    let mut g = Matrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = dyadic_inner(idx[a], idx[b]);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    GramReport::from_matrix(GramConstruction::BsplineDyadic, g)
}

/// Condition of an empirical feature Gram plus how many identically zero
/// features were left out of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureCondition {
    pub condition: Condition,
    pub dead_features: usize,
}

/// Condition number of `(1/N)·ΦΦᵀ` for the `N × K` feature matrix
/// `features` (one sample per row, so `Φ = featuresᵀ`).
///
/// Features that vanish on every sample are dropped first: they never
/// receive gradient and do not affect the least-squares problem over the
/// remaining output weights.
pub fn feature_gram_condition_from_features(features: &Matrix) -> Result<FeatureCondition> {
    let n = features.rows();
    let live: Vec<usize> = (0..features.cols())
        .filter(|&k| (0..n).any(|i| features[(i, k)] != 0.0))
        .collect();
    let dead_features = features.cols() - live.len();
    if live.is_empty() {
        return Err(Error::Numerical("every feature is identically zero".into()));
    }
    let phi_t = if dead_features == 0 {
        features.clone()
    } else {
        Matrix::from_fn(n, live.len(), |i, k| features[(i, live[k])])
    };
    let mut g = Matrix::zeros(live.len(), live.len());
    gemm(1.0 / n as f64, &phi_t, true, &phi_t, false, 0.0, &mut g);
    // gemm leaves tiny asymmetries; the Gram is symmetric by construction
    for i in 0..g.rows() {
        for j in 0..i {
            let m = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = m;
            g[(j, i)] = m;
        }
    }
    let condition = sym_eigvals(&g, GRAM_SYMMETRY_TOL)?.condition()?;
    Ok(FeatureCondition {
        condition,
        dead_features,
    })
}

/// Feature-Gram condition number of hidden layer `layer` over the batch `x`.
pub fn feature_gram_condition(p: &NetworkParams, x: &Matrix, layer: usize) -> Result<FeatureCondition> {
    if layer + 1 >= p.layers.len() {
        return Err(Error::invalid(format!(
            "layer {layer} is not a hidden layer ({} layers)",
            p.layers.len()
        )));
    }
    let (_, trace) = forward(p, x)?;
    feature_gram_condition_from_features(&trace.post_activations[layer])
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn column_norms(m: &Matrix) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (a, v) in acc.iter_mut().zip(m.row(i)) {
            *a += v * v;
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// Multiplier turning `Σ‖v_k‖‖w_k‖` into the variation norm for `kind`.
fn variation_factor(kind: ActivationKind) -> Result<f64> {
    match kind {
        ActivationKind::Relu => Ok(1.0),
        ActivationKind::BwRelu { c } => Ok(PSI_VARIATION * c),
        other => Err(Error::UnsupportedKind(other.name().to_string())),
    }
}

/// Variation norm of a shallow network `Σ_k v_k ζ(c(w_kᵀx − b_k))`.
///
/// `input` holds one row `w_k` per neuron and `output` one column `v_k`
/// per neuron.
pub fn variation_norm_shallow(input: &Matrix, output: &Matrix, kind: ActivationKind) -> Result<f64> {
    if input.rows() != output.cols() {
        return Err(Error::shape(format!(
            "{} input rows but {} output columns",
            input.rows(),
            output.cols()
        )));
    }
    let factor = variation_factor(kind)?;
    let v = column_norms(output);
    let sum: f64 = (0..input.rows()).map(|k| norm(input.row(k)) * v[k]).sum();
    Ok(factor * sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationReport {
    /// One entry per hidden layer, outermost last.
    pub per_layer: Vec<f64>,
    pub total: f64,
    /// Scale of the first hidden layer.
    pub scale: f64,
}

/// Layer-wise variation norm of a deep BW-ReLU (or plain ReLU) network read as a
/// composition of shallow networks: the first term pairs the rows of `W₀`
/// with the columns of `W₁`; each later hidden layer has identity input
/// weights and contributes `Σ_k ‖col_k(W_{ℓ+1})‖`. Every term carries the
/// factor of its activation: `16c` for BW-ReLU, 1 for ReLU.
pub fn variation_norm_deep(p: &NetworkParams) -> Result<VariationReport> {
    let hidden = p.hidden_layers();
    if hidden.is_empty() {
        return Err(Error::invalid("variation norm needs at least one hidden layer"));
    }
    let mut per_layer = Vec::with_capacity(hidden.len());
    for (i, layer) in hidden.iter().enumerate() {
        if !matches!(layer.activation, ActivationKind::BwRelu { .. } | ActivationKind::Relu) {
            return Err(Error::UnsupportedKind(layer.activation.name().to_string()));
        }
        let next = &p.layers[i + 1].weight;
        let value = if i == 0 {
            variation_norm_shallow(&layer.weight, next, layer.activation)?
        } else {
            variation_factor(layer.activation)? * column_norms(next).iter().sum::<f64>()
        };
        per_layer.push(value);
    }
    let total = per_layer.iter().sum();
    Ok(VariationReport {
        per_layer,
        total,
        scale: hidden[0].activation.scale().unwrap_or(1.0),
    })
}

/// PSNR in dB with peak 1; identical images give `+∞`.
pub fn psnr(reference: &ImageGrid, estimate: &ImageGrid) -> Result<f64> {
    if (reference.height, reference.width) != (estimate.height, estimate.width) {
        return Err(Error::shape(format!(
            "PSNR of {}x{} against {}x{}",
            reference.height, reference.width, estimate.height, estimate.width
        )));
    }
    Ok(psnr_slices(&reference.pixels, &estimate.pixels))
}

pub(crate) fn psnr_slices(reference: &[f64], estimate: &[f64]) -> f64 {
    let n = reference.len().max(1) as f64;
    let mse = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::expand_to_relus;
    use crate::network::{init_network, Layer, LayerSpec};

    const C1: f64 = 0.030864;
    const C2: f64 = -0.0030864;
    const C1_EXACT: f64 = 5.0 / 162.0;
    const C2_EXACT: f64 = -1.0 / 324.0;

    /// Adaptive Simpson quadrature, independent of the knot-based integrator.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
        }
        // split into many panels so kinks cannot hide between probe points
        let panels = 96;
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
                let (fa, fb) = (f(lo), f(hi));
                let (m, fm, whole) = simpson(f, lo, fa, hi, fb);
                rec(f, lo, fa, hi, fb, m, fm, whole, tol / panels as f64, 40)
            })
            .sum()
    }

    #[test]
    fn dyadic_single_scale() {
        let g = build_dyadic_gram(1).unwrap();
        assert_eq!(g.dim(), 1);
        assert!((g.matrix[(0, 0)] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g.condition.value, 1.0);
    }

    #[test]
    fn dyadic_constants() {
        let g = build_dyadic_gram(3).unwrap();
        let idx = dyadic_indices(3);
        for (a, &(j1, k1)) in idx.iter().enumerate() {
            for (b, &(j2, k2)) in idx.iter().enumerate() {
                let v = g.matrix[(a, b)];
                if j1 != j2 {
                    assert!(v.abs() <= 1e-10, "cross-scale ({j1},{k1}) ({j2},{k2}) = {v}");
                } else {
                    match k1.abs_diff(k2) {
                        0 => assert!((v - 1.0 / 6.0).abs() <= 1e-12),
                        1 => {
                            assert!((v - C1).abs() <= 1e-6, "{v}");
                            assert!((v - C1_EXACT).abs() <= 1e-15, "{v}");
                        }
                        2 => {
                            assert!((v - C2).abs() <= 1e-6, "{v}");
                            assert!((v - C2_EXACT).abs() <= 1e-15, "{v}");
                        }
                        _ => assert_eq!(v, 0.0),
                    }
                }
            }
        }
    }

    #[test]
    fn exact_inner_products_match_adaptive_quadrature() {
        let idx = dyadic_indices(4);
        for &p in &idx {
            for &q in &idx {
                let f = move |x: f64| dyadic_neuron(p.0, p.1, x) * dyadic_neuron(q.0, q.1, x);
                let quad = adaptive_simpson(&f, -1.0, 1.0, 1e-12);
                assert!((dyadic_inner(p, q) - quad).abs() <= 1e-10, "{p:?} {q:?}");
            }
        }
    }

    #[test]
    fn dyadic_condition_stays_under_gershgorin_bound() {
        let radius = 2.0 * (C1_EXACT.abs() + C2_EXACT.abs());
        let bound = (1.0 / 6.0 + radius) / (1.0 / 6.0 - radius);
        assert!(bound < 2.38);
        for j in 1..=6 {
            let g = build_dyadic_gram(j).unwrap();
            for &lambda in &g.spectrum.eigenvalues {
                assert!((lambda - 1.0 / 6.0).abs() <= radius + 1e-9);
            }
            assert!(g.condition.value <= bound, "J = {j}: {}", g.condition.value);
        }
    }

    #[test]
    fn relu_gram_two_neurons() {
        let g = build_relu_gram(2).unwrap();
        let expected = [[8.0 / 3.0, 5.0 / 6.0], [5.0 / 6.0, 1.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.matrix[(i, j)] - expected[i][j]).abs() < 1e-14);
            }
        }
        let b = even_relu_biases(2);
        for i in 0..2 {
            for j in 0..2 {
                let f = |x: f64| (x - b[i]).max(0.0) * (x - b[j]).max(0.0);
                assert!((adaptive_simpson(&f, -1.0, 1.0, 1e-12) - g.matrix[(i, j)]).abs() < 1e-10);
            }
        }
        assert!(g.spectrum.min() > 0.0);
        assert!(build_relu_gram(1).is_err());
    }

    #[test]
    fn relu_gram_condition_grows_at_least_cubically() {
        // λ_max grows like K and λ_min decays like K⁻³, so the measured
        // exponent sits near 4
        let ks = [8usize, 16, 32, 64];
        let kappa: Vec<f64> = ks.iter().map(|&k| build_relu_gram(k).unwrap().condition.value).collect();
        let slope = log_log_slope(&ks.map(|k| k as f64), &kappa);
        assert!(slope >= 2.5, "{slope}");
        assert!((slope - 4.0).abs() < 0.1, "{slope}");
        assert!(kappa.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn synthetic_feature_conditions() {
        // orthonormal columns (scaled by √N so that (1/N)ΦΦᵀ = I)
        let n = 8;
        let feats = Matrix::from_fn(n, 4, |i, k| if i == k { (n as f64).sqrt() } else { 0.0 });
        let fc = feature_gram_condition_from_features(&feats).unwrap();
        assert!((fc.condition.value - 1.0).abs() < 1e-12);

        let dup = Matrix::from_fn(10, 3, |i, k| if k == 2 { i as f64 } else { (i + k) as f64 * 0.1 + 1.0 });
        let dup = Matrix::from_fn(10, 4, |i, k| if k == 3 { dup[(i, 0)] } else { dup[(i, k)] });
        let fc = feature_gram_condition_from_features(&dup).unwrap();
        assert!(fc.condition.floored);
        assert!(fc.condition.value > 1e13);

        let dead = Matrix::from_fn(n, 5, |i, k| if k == 4 { 0.0 } else { feats[(i, k)] });
        let fc = feature_gram_condition_from_features(&dead).unwrap();
        assert_eq!(fc.dead_features, 1);
        assert!((fc.condition.value - 1.0).abs() < 1e-12);
    }

    /// Univariate BW-ReLU network whose hidden neurons are exactly the
    /// dyadic system (without the `2^{j/2}` normalisation).
    fn dyadic_network(scales: u32) -> NetworkParams {
        let idx = dyadic_indices(scales);
        let k = idx.len();
        let w: Vec<f64> = idx.iter().map(|&(j, _)| (1u64 << j) as f64 * 1.5).collect();
        // ψ(2^j·1.5(x+1) − k) = ψ(w x − b) with b = k − 2^j·1.5
        let b: Vec<f64> = idx.iter().map(|&(j, s)| s as f64 - (1u64 << j) as f64 * 1.5).collect();
        NetworkParams {
            layers: vec![
                Layer {
                    weight: Matrix::from_vec(k, 1, w).unwrap(),
                    bias: b,
                    activation: ActivationKind::BwRelu { c: 1.0 },
                },
                Layer {
                    weight: Matrix::from_vec(1, k, vec![1.0; k]).unwrap(),
                    bias: vec![0.0],
                    activation: ActivationKind::Identity,
                },
            ],
            coord_dim: 1,
            encoding_levels: None,
            seed: 0,
        }
    }

    #[test]
    fn empirical_gram_converges_to_integral_gram() {
        let scales = 5;
        let p = dyadic_network(scales);
        let n = 20_000;
        let x = Matrix::from_fn(n, 1, |i, _| -1.0 + (2 * i + 1) as f64 / n as f64);
        let fc = feature_gram_condition(&p, &x, 0).unwrap();

        // Same family without the 2^{j/2} factor: D G D with D = diag(2^{−j/2}).
        let g = build_dyadic_gram(scales).unwrap();
        let idx = dyadic_indices(scales);
        let d: Vec<f64> = idx.iter().map(|&(j, _)| (0.5f64).powf(j as f64 / 2.0)).collect();
        let unnormalised = Matrix::from_fn(g.dim(), g.dim(), |a, b| d[a] * g.matrix[(a, b)] * d[b]);
        let reference = GramReport::from_matrix(GramConstruction::Feature, unnormalised).unwrap();
        let rel = (fc.condition.value - reference.condition.value).abs() / reference.condition.value;
        assert!(rel <= 0.10, "{} vs {}", fc.condition.value, reference.condition.value);
        assert_eq!(fc.dead_features, 0);
    }

    #[test]
    fn feature_condition_rejects_output_layer() {
        let p = dyadic_network(2);
        let x = Matrix::from_fn(5, 1, |i, _| i as f64 * 0.1);
        assert!(matches!(feature_gram_condition(&p, &x, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn shallow_variation_examples() {
        let bw1 = ActivationKind::BwRelu { c: 1.0 };
        let w = Matrix::from_rows(&[[1.0]]).unwrap();
        let v = Matrix::from_rows(&[[1.0]]).unwrap();
        assert_eq!(variation_norm_shallow(&w, &v, bw1).unwrap(), 16.0);

        let w = Matrix::from_rows(&[[0.3, 0.4]]).unwrap(); // ‖w‖ = 0.5
        let v = Matrix::from_rows(&[[2.0]]).unwrap();
        let got = variation_norm_shallow(&w, &v, ActivationKind::BwRelu { c: 3.0 }).unwrap();
        assert!((got - 48.0).abs() < 1e-12);

        let z = Matrix::zeros(4, 2);
        assert_eq!(variation_norm_shallow(&z, &Matrix::zeros(1, 4), bw1).unwrap(), 0.0);
        assert!(matches!(
            variation_norm_shallow(&z, &Matrix::zeros(1, 4), ActivationKind::Sine { omega0: 1.0 }),
            Err(Error::UnsupportedKind(_))
        ));
        assert!(variation_norm_shallow(&z, &Matrix::zeros(1, 3), bw1).is_err());
    }

    #[test]
    fn variation_of_the_seven_relu_expansion() {
        // Σ over the atoms of ‖v_atom‖‖w_atom‖ = Σ|coef|·‖v‖·c‖w‖ = 16 c ‖v‖‖w‖
        let (w, v, c) = ([0.6, -0.8], [1.5, 2.0], 2.5);
        let atoms = expand_to_relus(&w, 0.3, &v, c).unwrap();
        let relu_norm: f64 = atoms.iter().map(|a| norm(&a.input_weight) * norm(&a.output_weight)).sum();
        let wm = Matrix::from_rows(&[w]).unwrap();
        let vm = Matrix::from_vec(2, 1, v.to_vec()).unwrap();
        let bw_norm = variation_norm_shallow(&wm, &vm, ActivationKind::BwRelu { c }).unwrap();
        assert!((relu_norm - bw_norm).abs() <= 1e-12 * bw_norm);
        assert!((bw_norm - 16.0 * c * 1.0 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn deep_variation_examples() {
        let bw = ActivationKind::BwRelu { c: 1.0 };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // 2→2→2→1 with unit rows of W₀ and unit columns of W₁, W₂.
        let p = NetworkParams {
            layers: vec![
                Layer {
                    weight: Matrix::from_rows(&[[1.0, 0.0], [s, s]]).unwrap(),
                    bias: vec![0.1, -0.2],
                    activation: bw,
                },
                Layer {
                    weight: Matrix::from_rows(&[[0.0, s], [1.0, s]]).unwrap(),
                    bias: vec![0.0, 0.3],
                    activation: bw,
                },
                Layer {
                    weight: Matrix::from_rows(&[[1.0, -1.0]]).unwrap(),
                    bias: vec![0.0],
                    activation: ActivationKind::Identity,
                },
            ],
            coord_dim: 2,
            encoding_levels: None,
            seed: 0,
        };
        let r = variation_norm_deep(&p).unwrap();
        assert_eq!(r.per_layer.len(), 2);
        assert!((r.total - 16.0 * 4.0).abs() < 1e-12);

        let shallow = init_network(&LayerSpec::mlp(2, 9, 1, 1, ActivationKind::BwRelu { c: 3.0 }), 4).unwrap();
        let deep = variation_norm_deep(&shallow).unwrap();
        let direct = variation_norm_shallow(
            &shallow.layers[0].weight,
            &shallow.layers[1].weight,
            shallow.layers[0].activation,
        )
        .unwrap();
        assert!((deep.total - direct).abs() <= 1e-12 * direct);
        assert_eq!(deep.scale, 3.0);

        let sine = init_network(&LayerSpec::mlp(2, 4, 2, 1, ActivationKind::Sine { omega0: 5.0 }), 1).unwrap();
        assert!(matches!(variation_norm_deep(&sine), Err(Error::UnsupportedKind(_))));
    }

    #[test]
    fn psnr_examples() {
        let a = ImageGrid::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = ImageGrid::new(2, 2, vec![0.1, 0.9, 1.1, -0.1]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-10);
        let inv = ImageGrid::new(2, 2, a.pixels.iter().map(|p| 1.0 - p).collect()).unwrap();
        assert!(psnr(&a, &inv).unwrap().abs() < 1e-12);
        assert!(psnr(&a, &ImageGrid::constant(1, 4, 0.0)).is_err());
        let c = ImageGrid::new(2, 2, vec![0.2, 0.5, 0.7, 0.1]).unwrap();
        assert_eq!(psnr(&a, &c).unwrap(), psnr(&c, &a).unwrap());
    }

    #[test]
    fn slope_of_a_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y = x.map(|v: f64| 5.0 * v.powi(3));
        assert!((log_log_slope(&x, &y) - 3.0).abs() < 1e-12);
    }
}
