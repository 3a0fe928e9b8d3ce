//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::imaging::ImageGray;
use crate::sparse_coding::Dictionary;

/// Side of the SSIM Gaussian window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Dynamic range of `[0, 1]` pixels.
pub const SSIM_RANGE: f64 = 1.0;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} elements",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("cannot compare empty inputs".into()));
    }
    Ok(())
}

/// Mean squared elementwise difference.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// ℓ2 norm of the difference.
pub fn l2_error(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// `10·log10(peak² / mse)`; `+∞` when the inputs are identical.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable 'valid' Gaussian filtering of a row-major `h×w` field.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = k.iter().zip(&src[r * w + c..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = k
                .iter()
                .enumerate()
                .map(|(i, a)| a * rows[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, dynamic range 1.
pub fn ssim(a: &ImageGray, b: &ImageGray) -> Result<f64> {
    let (h, w) = (a.height(), a.width());
    if (h, w) != (b.height(), b.width()) {
        return Err(Error::DimensionMismatch(format!(
            "{h}x{w} vs {}x{}",
            b.height(),
            b.width()
        )));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let k = gaussian_kernel();
    let (pa, pb) = (a.pixels(), b.pixels());
    let mu_a = filter_valid(pa, h, w, &k);
    let mu_b = filter_valid(pb, h, w, &k);
    let sq_a: Vec<f64> = pa.iter().map(|x| x * x).collect();
    let sq_b: Vec<f64> = pb.iter().map(|x| x * x).collect();
    let prod: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();
    let e_aa = filter_valid(&sq_a, h, w, &k);
    let e_bb = filter_valid(&sq_b, h, w, &k);
    let e_ab = filter_valid(&prod, h, w, &k);

    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// Mean, over unordered node pairs, of the elementwise MSE between their
/// dictionaries. Atoms are compared positionally.
pub fn dict_divergence(dicts: &[&Dictionary]) -> Result<f64> {
    if dicts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "divergence needs at least 2 dictionaries, got {}",
            dicts.len()
        )));
    }
    let shape = dicts[0].matrix().shape();
    if let Some(d) = dicts.iter().find(|d| d.matrix().shape() != shape) {
        return Err(Error::DimensionMismatch(format!(
            "dictionary {:?} vs {shape:?}",
            d.matrix().shape()
        )));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..dicts.len() {
        for j in i + 1..dicts.len() {
            total += mse(dicts[i].matrix().as_slice(), dicts[j].matrix().as_slice())?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Image-level quality of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub iteration: usize,
    pub mse: f64,
    pub l2_error: f64,
    /// dB; infinite for a perfect reconstruction.
    pub psnr: f64,
    /// NaN when no image is available (synthetic data).
    pub ssim: f64,
    pub dict_divergence: f64,
}
