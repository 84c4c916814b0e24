//! Image quality metrics: Euclidean distance (RMS), cosine similarity,
//! SSIM and PSNR, with per-sequence aggregation.
//!
//! Undefined values are flagged in-band: PSNR of identical images is
//! `+inf`, cosine similarity of two all-zero images is `NaN`.

use log::warn;

use crate::error::{CoreError, Result};
use crate::image::ReconImage;

fn check_shapes(a: &ReconImage, b: &ReconImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(CoreError::Shape(format!(
            "image {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn mse(a: &ReconImage, b: &ReconImage) -> f64 {
    let n = a.pixels().len() as f64;
    a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// Root-mean-square pixel difference.
pub fn euclidean(image: &ReconImage, truth: &ReconImage) -> Result<f64> {
    check_shapes(image, truth)?;
    Ok(mse(image, truth).sqrt())
}

/// Cosine of the angle between the flattened images. `NaN` when both are
/// all-zero, `0` when exactly one is.
pub fn cosine(image: &ReconImage, truth: &ReconImage) -> Result<f64> {
    check_shapes(image, truth)?;
    let dot: f64 = image.pixels().iter().zip(truth.pixels()).map(|(x, y)| x * y).sum();
    let na = image.pixels().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = truth.pixels().iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(match (na > 0.0, nb > 0.0) {
        (false, false) => f64::NAN,
        (true, true) => (dot / (na * nb)).clamp(-1.0, 1.0),
        _ => 0.0,
    })
}

/// Peak signal-to-noise ratio in dB for data range 1; `+inf` when equal.
pub fn psnr(image: &ReconImage, truth: &ReconImage) -> Result<f64> {
    check_shapes(image, truth)?;
    let e = mse(image, truth);
    Ok(if e == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / e).log10() })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..size).map(|k| (-((k as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" filtering of a `w x h` image (storage `i * h + j`).
fn filter_valid(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut tmp = vec![0.0; ow * h];
    for i in 0..ow {
        for j in 0..h {
            tmp[i * h + j] = (0..k).map(|d| kernel[d] * src[(i + d) * h + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for i in 0..ow {
        for j in 0..oh {
            out[i * oh + j] = (0..k).map(|d| kernel[d] * tmp[i * h + j + d]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid positions of an 11x11 Gaussian window
/// (sigma 1.5). Images smaller than the window use the largest odd window
/// that fits.
pub fn ssim(image: &ReconImage, truth: &ReconImage) -> Result<f64> {
    check_shapes(image, truth)?;
    let (w, h) = (image.width(), image.height());
    let mut size = SSIM_WINDOW;
    if w.min(h) < size {
        size = w.min(h);
        if size.is_multiple_of(2) {
            size -= 1;
        }
        warn!("image {w}x{h} smaller than the SSIM window; using {size}x{size}");
    }
    let kernel = gaussian_window(size, SSIM_SIGMA);
    let x = image.pixels();
    let y = truth.pixels();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, w, h, &kernel);
    let my = filter_valid(y, w, h, &kernel);
    let sxx = filter_valid(&xx, w, h, &kernel);
    let syy = filter_valid(&yy, w, h, &kernel);
    let sxy = filter_valid(&xy, w, h, &kernel);
    let mut total = 0.0;
    for k in 0..mx.len() {
        let (ux, uy) = (mx[k], my[k]);
        let vx = sxx[k] - ux * ux;
        let vy = syy[k] - uy * uy;
        let cxy = sxy[k] - ux * uy;
        total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
            / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / mx.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub ed: f64,
    pub cs: f64,
    pub ssim: f64,
    pub psnr: f64,
}

impl FrameMetrics {
    pub fn compute(image: &ReconImage, truth: &ReconImage) -> Result<Self> {
        Ok(Self {
            ed: euclidean(image, truth)?,
            cs: cosine(image, truth)?,
            ssim: ssim(image, truth)?,
            psnr: psnr(image, truth)?,
        })
    }
}

/// Per-frame metrics for one sequence and method; the summary is the mean
/// of per-frame values.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub sequence: String,
    pub method: String,
    pub frames: Vec<(String, FrameMetrics)>,
}

impl MetricReport {
    pub fn new(sequence: impl Into<String>, method: impl Into<String>) -> Self {
        Self {
            sequence: sequence.into(),
            method: method.into(),
            frames: Vec::new(),
        }
    }

    pub fn push(&mut self, frame: impl Into<String>, image: &ReconImage, truth: &ReconImage) -> Result<FrameMetrics> {
        let m = FrameMetrics::compute(image, truth)?;
        self.frames.push((frame.into(), m));
        Ok(m)
    }

    pub fn mean(&self) -> Option<FrameMetrics> {
        if self.frames.is_empty() {
            return None;
        }
        let n = self.frames.len() as f64;
        let sum = |f: fn(&FrameMetrics) -> f64| self.frames.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
        Some(FrameMetrics {
            ed: sum(|m| m.ed),
            cs: sum(|m| m.cs),
            ssim: sum(|m| m.ssim),
            psnr: sum(|m| m.psnr),
        })
    }
}
