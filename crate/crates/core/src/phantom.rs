//! Synthetic grayscale test images on `[−1, 1]²`.

use std::f64::consts::PI;

use crate::operators::ImageGrid;

/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`
/// of the modified (Toft) Shepp–Logan head phantom.
pub const SHEPP_LOGAN_ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn render(n: usize, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
    let mut pixels = Vec::with_capacity(n * n);
    for r in 0..n {
        // image rows run top to bottom, y points up
        let y = 1.0 - (2 * r + 1) as f64 / n as f64;
        for c in 0..n {
            let x = -1.0 + (2 * c + 1) as f64 / n as f64;
            pixels.push(f(x, y).clamp(0.0, 1.0));
        }
    }
    ImageGrid::new(n, n, pixels).expect("rendered pixels are finite")
}

/// `n × n` Shepp–Logan phantom sampled at pixel centres.
pub fn shepp_logan(n: usize) -> ImageGrid {
    render(n, |x, y| {
        SHEPP_LOGAN_ELLIPSES
            .iter()
            .filter(|&&(_, a, b, x0, y0, deg)| {
                let (s, c) = deg.to_radians().sin_cos();
                let xr = (x - x0) * c + (y - y0) * s;
                let yr = -(x - x0) * s + (y - y0) * c;
                (xr / a).powi(2) + (yr / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum()
    })
}

/// `n × n` natural-image stand-in: a smooth gradient background with a flat
/// rectangle, a radial chirp disc, a checkerboard and a fine ring pattern.
pub fn test_pattern(n: usize) -> ImageGrid {
    render(n, |x, y| {
        let y = -y;
        let r = (x * x + y * y).sqrt();
        if (x + 0.45).powi(2) + (y + 0.45).powi(2) < 0.09 {
            0.1 + 0.2 * (10.0 * PI * r).cos()
        } else if x > 0.1 && x < 0.7 && y > -0.8 && y < -0.2 {
            0.9
        } else if x < -0.1 && y > 0.2 {
            let s = (6.0 * PI * x).sin() * (6.0 * PI * y).sin();
            0.5 + 0.4 * if s > 0.0 { 1.0 } else if s < 0.0 { -1.0 } else { 0.0 }
        } else if x > 0.2 && y > 0.2 {
            0.5 + 0.3 * (20.0 * PI * (x * x + y * y)).sin()
        } else {
            0.35 + 0.25 * x + 0.15 * (3.0 * PI * y).sin()
        }
    })
}
