use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::tomo::{ParallelGeometry, Sinogram};

/// Band-limited ramp (Ram-Lak) kernel sampled at spacing `d`, taps
/// `-(n-1)..=(n-1)` stored in FFT wrap-around order over `len` samples.
pub fn ramp_kernel(n: usize, d: f64, len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    h[0] = 1.0 / (4.0 * d * d);
    for k in 1..n {
        if k % 2 == 1 {
            let v = -1.0 / ((k as f64 * PI * d).powi(2));
            h[k] = v;
            h[len - k] = v;
        }
    }
    h
}

/// Filtered back-projection over `[0, π)` with angular weight `π/n_angles`.
pub fn fbp(sino: &Sinogram, width: usize, height: usize) -> Result<ImageGrid> {
    let g: &ParallelGeometry = &sino.geometry;
    if width == 0 || height == 0 {
        return Err(Error::param("image dimensions must be positive"));
    }
    let covers_half_turn = g.n_angles == 1
        || ((g.angles[1] - g.angles[0]) * g.n_angles as f64 - PI).abs() <= 1e-6;
    if !g.is_uniform() || !covers_half_turn {
        return Err(Error::Unsupported("FBP needs uniformly spaced angles covering [0, pi)".into()));
    }

    let n = g.n_bins;
    let len = (2 * n).next_power_of_two();
    let d = g.bin_spacing;
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let mut kernel: Vec<Complex<f64>> = ramp_kernel(n, d, len).into_iter().map(|v| Complex::new(v, 0.0)).collect();
    forward.process(&mut kernel);

    // Filtering: discrete convolution times d, divided by len for the unnormalised inverse.
    let scale = d / len as f64;
    let mut filtered = vec![0.0; g.sinogram_len()];
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for a in 0..g.n_angles {
        buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        for (z, &v) in buf.iter_mut().zip(sino.row(a)) {
            z.re = v;
        }
        forward.process(&mut buf);
        buf.iter_mut().zip(&kernel).for_each(|(z, k)| *z *= k);
        inverse.process(&mut buf);
        for (out, z) in filtered[a * n..(a + 1) * n].iter_mut().zip(&buf) {
            *out = z.re * scale;
        }
    }

    let ps = g.pixel_size;
    let centre_bin = (n as f64 - 1.0) / 2.0;
    let weight = PI / g.n_angles as f64;
    let mut values = vec![0.0; width * height];
    for (a, &theta) in g.angles.iter().enumerate() {
        let (s, c) = theta.sin_cos();
        let row = &filtered[a * n..(a + 1) * n];
        for r in 0..height {
            let y = ((height as f64 - 1.0) / 2.0 - r as f64) * ps;
            for col in 0..width {
                let x = (col as f64 - (width as f64 - 1.0) / 2.0) * ps;
                let t = (x * c + y * s) / d + centre_bin;
                if t < 0.0 || t > (n - 1) as f64 {
                    continue;
                }
                let i = (t.floor() as usize).min(n.saturating_sub(2));
                let frac = t - i as f64;
                let v = if n == 1 { row[0] } else { row[i] * (1.0 - frac) + row[i + 1] * frac };
                values[r * width + col] += weight * v;
            }
        }
    }
    Ok(ImageGrid::from_vec_unchecked(width, height, values))
}
