//! Image-quality metrics.

use crate::error::{Error, Result};
use crate::image::ImageGrid;

/// PSNR reported for a perfect reconstruction.
pub const PSNR_CAP_DB: f64 = 300.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shape(x: &ImageGrid, reference: &ImageGrid) -> Result<()> {
    if !x.same_shape(reference) {
        return Err(Error::shape(format!(
            "{}x{} image compared with {}x{} reference",
            x.width(),
            x.height(),
            reference.width(),
            reference.height()
        )));
    }
    Ok(())
}

/// `‖x − x_ref‖² / ‖x_ref‖²`.
pub fn relative_error_sq(x: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check_shape(x, reference)?;
    relative_error_sq_slice(x.values(), reference.values())
}

pub fn relative_error_sq_slice(x: &[f64], reference: &[f64]) -> Result<f64> {
    let denom: f64 = reference.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::param("reference image has zero norm"));
    }
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &ImageGrid, reference: &ImageGrid, data_range: f64) -> Result<f64> {
    check_shape(x, reference)?;
    if !(data_range > 0.0) {
        return Err(Error::param("data_range must be positive"));
    }
    let mse = x.values().iter().zip(reference.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (data_range * data_range / mse).log10()).min(PSNR_CAP_DB))
}

/// `max − min` of an image, or 1 for a constant image.
pub fn data_range(image: &ImageGrid) -> f64 {
    let (lo, hi) = image
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|k| {
            let d = k as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable filtering over fully contained windows ("valid" mode).
fn filter_valid(x: &[f64], width: usize, height: usize, kernel: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = kernel.len();
    let ow = width - k + 1;
    let oh = height - k + 1;
    let mut tmp = vec![0.0; ow * height];
    for r in 0..height {
        for c in 0..ow {
            tmp[r * ow + c] = kernel.iter().enumerate().map(|(j, w)| w * x[r * width + c + j]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = kernel.iter().enumerate().map(|(j, w)| w * tmp[(r + j) * ow + c]).sum();
        }
    }
    (out, ow, oh)
}

fn ssim_terms(mx: f64, my: f64, vx: f64, vy: f64, cov: f64, range: f64) -> f64 {
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM over all 11×11 Gaussian-weighted (σ = 1.5) windows that fit
/// inside the image. The dynamic range is taken from the reference. Images
/// smaller than the window fall back to a single global SSIM.
pub fn ssim(x: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    check_shape(x, reference)?;
    let range = data_range(reference);
    let (w, h) = (x.width(), x.height());
    let a = x.values();
    let b = reference.values();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        let n = a.len() as f64;
        let mx = a.iter().sum::<f64>() / n;
        let my = b.iter().sum::<f64>() / n;
        let vx = a.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
        let vy = b.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
        let cov = a.iter().zip(b).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / n;
        return Ok(ssim_terms(mx, my, vx, vy, cov, range));
    }
    let kernel = gaussian_window();
    let xx: Vec<f64> = a.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = b.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = a.iter().zip(b).map(|(u, v)| u * v).collect();
    let (mx, ow, oh) = filter_valid(a, w, h, &kernel);
    let (my, ..) = filter_valid(b, w, h, &kernel);
    let (exx, ..) = filter_valid(&xx, w, h, &kernel);
    let (eyy, ..) = filter_valid(&yy, w, h, &kernel);
    let (exy, ..) = filter_valid(&xy, w, h, &kernel);
    let total: f64 = (0..ow * oh)
        .map(|i| {
            let vx = exx[i] - mx[i] * mx[i];
            let vy = eyy[i] - my[i] * my[i];
            let cov = exy[i] - mx[i] * my[i];
            ssim_terms(mx[i], my[i], vx, vy, cov, range)
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}
