//! Fixtures shared by the kernel benchmarks.

use bwinr_core::network::init_network;
use bwinr_core::operators::grid_coords;
use bwinr_core::{ActivationKind, LayerSpec, Matrix, NetworkParams};

/// Deterministic dense matrix with entries in `[−1, 1)`.
pub fn dense(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let data = (0..rows * cols)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("finite entries")
}

/// Symmetric positive definite `AᵀA + I`.
pub fn spd(n: usize, seed: u64) -> Matrix {
    let a = dense(n, n, seed);
    let mut g = bwinr_core::linalg::matmul(&a.transpose(), &a).expect("square");
    for i in 0..n {
        g[(i, i)] += 1.0;
    }
    g
}

/// Image-fitting network and its pixel grid.
pub fn image_net(side: usize, width: usize, act: ActivationKind) -> (NetworkParams, Matrix) {
    let p = init_network(&LayerSpec::mlp(2, width, 3, 1, act), 0).expect("valid spec");
    (p, grid_coords(side, side))
}
