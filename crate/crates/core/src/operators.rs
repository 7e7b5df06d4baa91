//! Linear forward operators that bind a network's image to task data:
//! identity sampling, block-average downsampling and a parallel-beam Radon
//! transform. Each has an exact adjoint for backpropagation.
//!
//! Coordinates: pixel `(r, c)` of an `h × w` image sits at
//! `x = −1 + (2c + 1)/w`, `y = −1 + (2r + 1)/h`, so the image covers
//! `[−1, 1]²`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub height: usize,
    pub width: usize,
    /// Row-major intensities.
    pub pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("image contains non-finite pixels"));
        }
        Ok(ImageGrid {
            height,
            width,
            pixels,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        ImageGrid {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn clamped(&self) -> ImageGrid {
        ImageGrid {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|p| p.clamp(0.0, 1.0)).collect(),
        }
    }
}

/// Pixel-center coordinates of an `h × w` grid, row-major, one `(x, y)` per row.
pub fn grid_coords(h: usize, w: usize) -> Matrix {
    let mut data = Vec::with_capacity(2 * h * w);
    for r in 0..h {
        let y = -1.0 + (2 * r + 1) as f64 / h as f64;
        for c in 0..w {
            data.push(-1.0 + (2 * c + 1) as f64 / w as f64);
            data.push(y);
        }
    }
    Matrix::from_vec(h * w, 2, data).expect("grid coordinates are finite")
}

fn check_factor(h: usize, w: usize, f: usize) -> Result<()> {
    if f == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
        return Err(Error::shape(format!(
            "a {h}x{w} image cannot be downsampled by {f}"
        )));
    }
    Ok(())
}

/// Mean over non-overlapping `f × f` blocks.
pub fn downsample(img: &ImageGrid, f: usize) -> Result<ImageGrid> {
    check_factor(img.height, img.width, f)?;
    let (h, w) = (img.height / f, img.width / f);
    let norm = 1.0 / (f * f) as f64;
    let mut out = vec![0.0; h * w];
    for r in 0..img.height {
        let row = &img.pixels[r * img.width..(r + 1) * img.width];
        let orow = &mut out[(r / f) * w..(r / f + 1) * w];
        for (c, p) in row.iter().enumerate() {
            orow[c / f] += p;
        }
    }
    out.iter_mut().for_each(|v| *v *= norm);
    ImageGrid::new(h, w, out)
}

/// Adjoint of [`downsample`]: spreads each low-resolution value over its
/// block with weight `1/f²`.
pub fn downsample_adjoint(low: &ImageGrid, f: usize) -> ImageGrid {
    let (h, w) = (low.height * f, low.width * f);
    let norm = 1.0 / (f * f) as f64;
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            pixels.push(norm * low.get(r / f, c / f));
        }
    }
    ImageGrid {
        height: h,
        width: w,
        pixels,
    }
}

/// Line integrals indexed by projection angle (rows) and detector (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub angles: Vec<f64>,
    pub detectors: usize,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(angles: Vec<f64>, detectors: usize) -> Self {
        let n = angles.len() * detectors;
        Sinogram {
            angles,
            detectors,
            values: vec![0.0; n],
        }
    }

    pub fn projection(&self, angle_index: usize) -> &[f64] {
        &self.values[angle_index * self.detectors..(angle_index + 1) * self.detectors]
    }
}

/// `n` equally spaced angles on `[0, π)`.
pub fn equally_spaced_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| PI * i as f64 / n as f64).collect()
}

/// Detector offsets, uniform on `[−√2, √2]`.
pub fn detector_offsets(detectors: usize) -> Vec<f64> {
    if detectors == 1 {
        return vec![0.0];
    }
    let step = 2.0 * SQRT_2 / (detectors - 1) as f64;
    (0..detectors).map(|d| -SQRT_2 + step * d as f64).collect()
}

/// Detector count for an image: its diagonal in pixels, rounded up.
pub fn default_detectors(h: usize, w: usize) -> usize {
    ((h * h + w * w) as f64).sqrt().ceil() as usize
}

/// Parallel-beam geometry for an `h × w` image: the ray at angle `θ` and
/// offset `s` is `s·(cos θ, sin θ) + t·(−sin θ, cos θ)`, sampled at the
/// midpoints of `M` equal steps of `t` over `[−√2, √2]` with step length at
/// most one pixel. The image is bilinearly interpolated between pixel
/// centers and zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct RadonGeometry {
    pub height: usize,
    pub width: usize,
    pub angles: Vec<f64>,
    pub detectors: usize,
    offsets: Vec<f64>,
    steps: usize,
    dt: f64,
    // system matrix, one row per ray, duplicates merged
    row_start: Vec<usize>,
    pixel: Vec<u32>,
    weight: Vec<f64>,
}

impl RadonGeometry {
    pub fn new(height: usize, width: usize, angles: Vec<f64>, detectors: usize) -> Result<Self> {
        if detectors == 0 {
            return Err(Error::config("radon transform needs at least one detector"));
        }
        if height == 0 || width == 0 {
            return Err(Error::shape("empty image"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("non-finite projection angle"));
        }
        let pixel = 2.0 / height.max(width) as f64;
        Ok(Self::with_step(height, width, angles, detectors, pixel))
    }

    /// Same geometry with a custom quadrature step (used for refinement checks).
    pub fn with_step(height: usize, width: usize, angles: Vec<f64>, detectors: usize, step: f64) -> Self {
        let span = 2.0 * SQRT_2;
        let steps = (span / step).ceil().max(1.0) as usize;
        let mut geo = RadonGeometry {
            height,
            width,
            angles,
            detectors,
            offsets: detector_offsets(detectors),
            steps,
            dt: span / steps as f64,
            row_start: vec![0],
            pixel: Vec::new(),
            weight: Vec::new(),
        };
        geo.assemble();
        geo
    }

    fn assemble(&mut self) {
        let mut ray: Vec<(usize, f64)> = Vec::new();
        let (mut pixel, mut weight) = (Vec::new(), Vec::new());
        let mut row_start = Vec::with_capacity(self.sinogram_len() + 1);
        row_start.push(0);
        for a in 0..self.angles.len() {
            for d in 0..self.detectors {
                ray.clear();
                self.for_each_weight(a, d, |i, wt| ray.push((i, wt)));
                ray.sort_by_key(|&(i, _)| i);
                let mut last = usize::MAX;
                for &(i, wt) in &ray {
                    if i == last {
                        *weight.last_mut().unwrap() += wt;
                    } else {
                        pixel.push(i as u32);
                        weight.push(wt);
                        last = i;
                    }
                }
                row_start.push(pixel.len());
            }
        }
        self.row_start = row_start;
        self.pixel = pixel;
        self.weight = weight;
    }

    fn row(&self, ray: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_start[ray]..self.row_start[ray + 1];
        self.pixel[range.clone()]
            .iter()
            .zip(&self.weight[range])
            .map(|(&i, &w)| (i as usize, w))
    }

    pub fn sinogram_len(&self) -> usize {
        self.angles.len() * self.detectors
    }

    /// Visits every quadrature sample of ray `(a, d)` as
    /// `(pixel index, weight)` pairs, weight including the step length.
    #[inline]
    fn for_each_weight(&self, a: usize, d: usize, mut visit: impl FnMut(usize, f64)) {
        let (sin, cos) = self.angles[a].sin_cos();
        let s = self.offsets[d];
        let (h, w) = (self.height as f64, self.width as f64);
        // continuous pixel index: u = (x + 1) w / 2 − ½
        let (ax, ay) = (0.5 * w, 0.5 * h);
        let (bx, by) = (0.5 * w - 0.5, 0.5 * h - 0.5);
        for m in 0..self.steps {
            let t = -SQRT_2 + (m as f64 + 0.5) * self.dt;
            let x = s * cos - t * sin;
            let y = s * sin + t * cos;
            let u = ax * x + bx;
            let v = ay * y + by;
            if u <= -1.0 || v <= -1.0 || u >= w || v >= h {
                continue;
            }
            let c0 = u.floor();
            let r0 = v.floor();
            let fu = u - c0;
            let fv = v - r0;
            let (c0, r0) = (c0 as isize, r0 as isize);
            let corners = [
                (r0, c0, (1.0 - fv) * (1.0 - fu)),
                (r0, c0 + 1, (1.0 - fv) * fu),
                (r0 + 1, c0, fv * (1.0 - fu)),
                (r0 + 1, c0 + 1, fv * fu),
            ];
            for (r, c, wt) in corners {
                if r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width && wt != 0.0 {
                    visit(r as usize * self.width + c as usize, wt * self.dt);
                }
            }
        }
    }

    pub fn forward(&self, pixels: &[f64]) -> Result<Vec<f64>> {
        if pixels.len() != self.height * self.width {
            return Err(Error::shape(format!(
                "radon geometry is {}x{}, image has {} pixels",
                self.height,
                self.width,
                pixels.len()
            )));
        }
        Ok((0..self.sinogram_len())
            .map(|ray| self.row(ray).map(|(i, wt)| wt * pixels[i]).sum())
            .collect())
    }

    /// Transpose of [`RadonGeometry::forward`].
    pub fn adjoint(&self, cotangent: &[f64]) -> Result<Vec<f64>> {
        if cotangent.len() != self.sinogram_len() {
            return Err(Error::shape(format!(
                "sinogram has {} values, geometry expects {}",
                cotangent.len(),
                self.sinogram_len()
            )));
        }
        let mut out = vec![0.0; self.height * self.width];
        for (ray, &g) in cotangent.iter().enumerate() {
            if g != 0.0 {
                for (i, wt) in self.row(ray) {
                    out[i] += wt * g;
                }
            }
        }
        Ok(out)
    }
}

pub fn radon(img: &ImageGrid, angles: &[f64], detectors: usize) -> Result<Sinogram> {
    let geom = RadonGeometry::new(img.height, img.width, angles.to_vec(), detectors)?;
    Ok(Sinogram {
        angles: angles.to_vec(),
        detectors,
        values: geom.forward(&img.pixels)?,
    })
}

/// Gradient of `⟨radon(X), cotangent⟩` with respect to the `h × w` image `X`.
pub fn radon_vjp(cotangent: &Sinogram, h: usize, w: usize) -> Result<ImageGrid> {
    let geom = RadonGeometry::new(h, w, cotangent.angles.clone(), cotangent.detectors)?;
    Ok(ImageGrid {
        height: h,
        width: w,
        pixels: geom.adjoint(&cotangent.values)?,
    })
}

/// The linear map from the network's image (on the full grid) to task data.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Identity,
    Downsample { height: usize, width: usize, factor: usize },
    Radon(RadonGeometry),
}

impl Operator {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Operator::Identity => Ok(x.to_vec()),
            Operator::Downsample { height, width, factor } => {
                let img = ImageGrid::new(*height, *width, x.to_vec())?;
                Ok(downsample(&img, *factor)?.pixels)
            }
            Operator::Radon(g) => g.forward(x),
        }
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            Operator::Identity => Ok(y.to_vec()),
            Operator::Downsample { height, width, factor } => {
                let low = ImageGrid::new(height / factor, width / factor, y.to_vec())?;
                Ok(downsample_adjoint(&low, *factor).pixels)
            }
            Operator::Radon(g) => g.adjoint(y),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Operator::Identity => "identity",
            Operator::Downsample { .. } => "downsample",
            Operator::Radon(_) => "radon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    SignalRepresentation,
    SuperResolution,
    ComputedTomography,
}

impl TaskKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sigrep" => Ok(TaskKind::SignalRepresentation),
            "superres" => Ok(TaskKind::SuperResolution),
            "ct" => Ok(TaskKind::ComputedTomography),
            other => Err(Error::config(format!("unknown task `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SignalRepresentation => "sigrep",
            TaskKind::SuperResolution => "superres",
            TaskKind::ComputedTomography => "ct",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskParams {
    pub superres_factor: usize,
    pub ct_angles: usize,
    /// `None` uses the image diagonal in pixels.
    pub ct_detectors: Option<usize>,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            superres_factor: 4,
            ct_angles: 100,
            ct_detectors: None,
        }
    }
}

/// Everything training needs: where to evaluate the network, what its
/// (operator-mapped) output should match, and an optional reference image.
#[derive(Debug, Clone)]
pub struct ForwardTask {
    pub name: String,
    pub coords: Matrix,
    pub target: Vec<f64>,
    pub operator: Operator,
    pub reference: Option<ImageGrid>,
}

impl ForwardTask {
    pub fn new(
        name: impl Into<String>,
        coords: Matrix,
        target: Vec<f64>,
        operator: Operator,
        reference: Option<ImageGrid>,
    ) -> Result<Self> {
        let probe = operator.apply(&vec![0.0; coords.rows()])?;
        if probe.len() != target.len() {
            return Err(Error::shape(format!(
                "operator produces {} values but the target has {}",
                probe.len(),
                target.len()
            )));
        }
        if let Some(r) = &reference {
            if r.len() != coords.rows() {
                return Err(Error::shape("reference image does not match the coordinate grid"));
            }
        }
        Ok(ForwardTask {
            name: name.into(),
            coords,
            target,
            operator,
            reference,
        })
    }

    /// Fit raw samples `(x_i, y_i)` directly.
    pub fn regression(name: impl Into<String>, coords: Matrix, target: Vec<f64>) -> Result<Self> {
        ForwardTask::new(name, coords, target, Operator::Identity, None)
    }

    /// Image shape of the network output, when the task is image-based.
    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.reference.as_ref().map(|r| (r.height, r.width))
    }
}

pub fn make_task(kind: TaskKind, image: &ImageGrid, params: TaskParams) -> Result<ForwardTask> {
    let (h, w) = (image.height, image.width);
    if image.is_empty() {
        return Err(Error::shape("empty image"));
    }
    let coords = grid_coords(h, w);
    match kind {
        TaskKind::SignalRepresentation => ForwardTask::new(
            kind.name(),
            coords,
            image.pixels.clone(),
            Operator::Identity,
            Some(image.clone()),
        ),
        TaskKind::SuperResolution => {
            let f = params.superres_factor;
            let low = downsample(image, f)?;
            ForwardTask::new(
                kind.name(),
                coords,
                low.pixels,
                Operator::Downsample {
                    height: h,
                    width: w,
                    factor: f,
                },
                Some(image.clone()),
            )
        }
        TaskKind::ComputedTomography => {
            let detectors = params.ct_detectors.unwrap_or_else(|| default_detectors(h, w));
            let geom = RadonGeometry::new(h, w, equally_spaced_angles(params.ct_angles), detectors)?;
            let target = geom.forward(&image.pixels)?;
            ForwardTask::new(kind.name(), coords, target, Operator::Radon(geom), Some(image.clone()))
        }
    }
}
