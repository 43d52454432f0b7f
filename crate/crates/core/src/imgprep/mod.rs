//! Grayscale radiograph preprocessing: histogram equalization, left/right
//! mirroring, negative detection and inversion, plus small reference versions
//! of 2-D convolution and max pooling.

mod batch;
mod pgm;

pub use batch::{process_dir, BatchManifest, PrepOp};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};

/// 8-bit grayscale image, row-major, `height` rows by `width` columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(arg_err!("image dimensions must be positive, got {height}x{width}"));
        }
        if pixels.len() != width * height {
            return Err(shape_err!("{} pixels for a {height}x{width} image", pixels.len()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(shape_err!("ragged image rows"));
        }
        Self::new(width, rows.len(), rows.concat())
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.pixels.chunks_exact(self.width).map(<[u8]>::to_vec).collect()
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Histogram equalization:
/// `h(v) = round(255 * (cdf(v) - cdf_min) / (m*n - cdf_min))`.
///
/// `cdf(v)` counts pixels `<= v` and `cdf_min` is its smallest nonzero value.
/// A constant image has a zero denominator and is returned unchanged.
pub fn equalize(img: &GrayImage) -> GrayImage {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let total = img.pixels.len() as u64;
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if total == cdf_min {
        return img.clone();
    }
    let denom = (total - cdf_min) as f64;
    let mut lut = [0u8; 256];
    for (v, slot) in lut.iter_mut().enumerate() {
        let num = cdf[v].saturating_sub(cdf_min) as f64;
        // f64::round rounds half away from zero.
        *slot = (255.0 * num / denom).round().clamp(0.0, 255.0) as u8;
    }
    map_pixels(img, |p| lut[p as usize])
}

fn map_pixels(img: &GrayImage, f: impl Fn(u8) -> u8) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| f(p)).collect(),
    }
}

/// Reverses column order (right knee -> left-knee orientation).
pub fn mirror_horizontal(img: &GrayImage) -> GrayImage {
    let mut pixels = img.pixels.clone();
    for row in pixels.chunks_exact_mut(img.width) {
        row.reverse();
    }
    GrayImage { pixels, ..*img }
}

/// Photographic negative, `v -> 255 - v`.
pub fn invert(img: &GrayImage) -> GrayImage {
    map_pixels(img, |p| 255 - p)
}

pub const DEFAULT_NEGATIVE_MARGIN: f64 = 1.15;

/// Mean of the 10%-wide border frame and of the enclosed centre.
///
/// The frame is `ceil(0.1 * dim)` pixels thick (at least 1) on each axis.
/// Returns `None` for the centre when the frame covers the whole image.
pub fn border_center_means(img: &GrayImage) -> (f64, Option<f64>) {
    let bh = ((img.height as f64 * 0.1).ceil() as usize).max(1);
    let bw = ((img.width as f64 * 0.1).ceil() as usize).max(1);
    let (mut border, mut nb, mut center, mut nc) = (0.0, 0u64, 0.0, 0u64);
    for r in 0..img.height {
        for c in 0..img.width {
            let v = img.get(r, c) as f64;
            let in_frame = r < bh || r >= img.height.saturating_sub(bh) || c < bw || c >= img.width.saturating_sub(bw);
            if in_frame {
                border += v;
                nb += 1;
            } else {
                center += v;
                nc += 1;
            }
        }
    }
    (border / nb as f64, (nc > 0).then(|| center / nc as f64))
}

/// An image reads as a negative when its border is brighter than `margin`
/// times its centre (radiograph backgrounds are normally dark).
pub fn is_negative(img: &GrayImage, margin: f64) -> bool {
    match border_center_means(img) {
        (border, Some(center)) => border > margin * center,
        (_, None) => false,
    }
}

/// Inverts every image flagged by [`is_negative`]; returns the processed batch
/// and the flagged indices in ascending order.
pub fn detect_and_invert_negatives(batch: &[GrayImage], margin: f64) -> Result<(Vec<GrayImage>, Vec<usize>)> {
    if !(margin > 0.0) {
        return Err(arg_err!("negative-detection margin must be positive, got {margin}"));
    }
    if batch.is_empty() {
        return Err(arg_err!("empty image batch"));
    }
    let mut flagged = Vec::new();
    let out = batch
        .iter()
        .enumerate()
        .map(|(i, img)| {
            if is_negative(img, margin) {
                flagged.push(i);
                invert(img)
            } else {
                img.clone()
            }
        })
        .collect();
    Ok((out, flagged))
}

/// Real-valued 2-D array, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Convolution filter of `rows x cols` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(arg_err!("kernel dimensions must be positive"));
        }
        if weights.len() != rows * cols {
            return Err(shape_err!("{} weights for a {rows}x{cols} kernel", weights.len()));
        }
        Ok(Self { rows, cols, weights })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(shape_err!("ragged kernel rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn scaled(&self, a: f64) -> Kernel {
        Kernel {
            weights: self.weights.iter().map(|w| w * a).collect(),
            ..*self
        }
    }
}

/// Valid-mode 2-D convolution (kernel flipped on both axes); output is
/// `(m - s + 1) x (n - t + 1)`.
pub fn convolve2d(img: &GrayImage, kernel: &Kernel) -> Result<FeatureMap> {
    if kernel.rows > img.height || kernel.cols > img.width {
        return Err(shape_err!(
            "{}x{} kernel does not fit a {}x{} image",
            kernel.rows,
            kernel.cols,
            img.height,
            img.width
        ));
    }
    let rows = img.height - kernel.rows + 1;
    let cols = img.width - kernel.cols + 1;
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for a in 0..kernel.rows {
                for b in 0..kernel.cols {
                    let w = kernel.get(kernel.rows - 1 - a, kernel.cols - 1 - b);
                    acc += img.get(r + a, c + b) as f64 * w;
                }
            }
            values.push(acc);
        }
    }
    Ok(FeatureMap { rows, cols, values })
}

/// Rectified linear unit.
pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

/// Output length of a pooled axis: `floor((u - r) / h) + 1`.
pub fn pooled_dim(u: usize, spec: PoolSpec) -> Result<usize> {
    if spec.window == 0 || spec.stride == 0 {
        return Err(arg_err!("pool window and stride must be positive"));
    }
    if spec.window > u {
        return Err(shape_err!("pool window {} exceeds dimension {u}", spec.window));
    }
    Ok((u - spec.window) / spec.stride + 1)
}

/// Square-window max pooling.
pub fn max_pool(img: &GrayImage, spec: PoolSpec) -> Result<GrayImage> {
    let rows = pooled_dim(img.height, spec)?;
    let cols = pooled_dim(img.width, spec)?;
    let mut pixels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (r0, c0) = (r * spec.stride, c * spec.stride);
            let mut m = 0u8;
            for rr in r0..r0 + spec.window {
                for cc in c0..c0 + spec.window {
                    m = m.max(img.get(rr, cc));
                }
            }
            pixels.push(m);
        }
    }
    GrayImage::new(cols, rows, pixels)
}
