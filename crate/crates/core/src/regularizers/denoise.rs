//! Plug-and-play denoisers: built-in Gaussian and median filters, and a
//! bridge to an external denoiser process.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

use super::check_positive;

/// Gaussian kernel standard deviation in pixels per unit of `sigma`.
pub const GAUSSIAN_PIXELS_PER_SIGMA: f64 = 1.0;

static EXTERNAL_LOCK: Mutex<()> = Mutex::new(());

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum DenoiserKind {
    BuiltinGaussian,
    /// 3×3 median; `sigma` is ignored.
    BuiltinMedian,
    /// A program speaking the raw-image protocol on stdin/stdout.
    ExternalCommand {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserSpec {
    /// Serialised as `denoiser` so it does not clash with the regulariser tag.
    #[serde(rename = "denoiser")]
    pub kind: DenoiserKind,
    pub sigma: f64,
}

impl DenoiserSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self { kind: DenoiserKind::BuiltinGaussian, sigma }
    }

    pub fn median() -> Self {
        Self { kind: DenoiserKind::BuiltinMedian, sigma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("sigma", self.sigma)
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { kind: self.kind.clone(), sigma }
    }
}

/// Denoiser strength for a skipped variant: `σ_non-skip / √p`.
pub fn skip_sigma(sigma_nonskip: f64, p: f64) -> Result<f64> {
    check_positive("sigma", sigma_nonskip)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("probability must be in (0, 1], got {p}")));
    }
    Ok(sigma_nonskip / p.sqrt())
}

pub fn apply_denoiser(image: &ImageGrid, spec: &DenoiserSpec) -> Result<ImageGrid> {
    spec.validate()?;
    match &spec.kind {
        DenoiserKind::BuiltinGaussian => Ok(gaussian_blur(image, spec.sigma * GAUSSIAN_PIXELS_PER_SIGMA)),
        DenoiserKind::BuiltinMedian => Ok(median3x3(image)),
        DenoiserKind::ExternalCommand { program, args } => run_external(image, spec.sigma, program, args),
    }
}

/// Discrete Gaussian kernel `e^{-t} I_n(t)` with `t = std²`, taps
/// `-radius..=radius`, renormalised to unit sum. Unlike a sampled Gaussian it
/// stays a smoothing operator for sub-pixel widths, and two blurs compose
/// exactly: `std₁² + std₂² = std²`.
pub fn discrete_gaussian_kernel(std: f64) -> Vec<f64> {
    let t = std * std;
    let radius = (6.0 * std).ceil() as usize + 4;
    let half = t / 2.0;
    let mut taps = Vec::with_capacity(radius + 1);
    let mut log_fact_n = 0.0;
    for n in 0..=radius {
        if n > 0 {
            log_fact_n += (n as f64).ln();
        }
        // Series I_n(t) = Σ_k (t/2)^{2k+n} / (k! (k+n)!), scaled by e^{-t}.
        let log_first = if t > 0.0 { n as f64 * half.ln() - log_fact_n - t } else if n == 0 { 0.0 } else { f64::NEG_INFINITY };
        let mut term = log_first.exp();
        let mut sum = term;
        let mut k = 0.0;
        while term > 0.0 && (term > 1e-18 * sum || k < half) {
            k += 1.0;
            term *= half * half / (k * (k + n as f64));
            sum += term;
        }
        taps.push(sum);
    }
    let mut kernel: Vec<f64> = taps[1..].iter().rev().chain(taps.iter()).copied().collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    kernel
}

/// Separable discrete Gaussian blur with replicate borders.
pub fn gaussian_blur(image: &ImageGrid, std: f64) -> ImageGrid {
    let kernel = discrete_gaussian_kernel(std);
    let radius = kernel.len() / 2;
    let (w, h) = (image.width(), image.height());
    let x = image.values();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kw) in kernel.iter().enumerate() {
                let cc = clamp(c as isize + k as isize - radius as isize, w);
                acc += kw * x[r * w + cc];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kw) in kernel.iter().enumerate() {
                let rr = clamp(r as isize + k as isize - radius as isize, h);
                acc += kw * tmp[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    ImageGrid::from_vec_unchecked(w, h, out)
}

/// 3×3 median filter with replicate borders.
pub fn median3x3(image: &ImageGrid) -> ImageGrid {
    let (w, h) = (image.width(), image.height());
    let mut out = vec![0.0; w * h];
    let mut window = [0.0; 9];
    for r in 0..h {
        for c in 0..w {
            let mut k = 0;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                    let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                    window[k] = image.get(rr, cc);
                    k += 1;
                }
            }
            window.sort_by(f64::total_cmp);
            out[r * w + c] = window[4];
        }
    }
    ImageGrid::from_vec_unchecked(w, h, out)
}

fn run_external(image: &ImageGrid, sigma: f64, program: &str, args: &[String]) -> Result<ImageGrid> {
    let _guard = EXTERNAL_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Denoiser(format!("cannot start `{program}`: {e}")))?;

    let header = serde_json::json!({
        "width": image.width(),
        "height": image.height(),
        "sigma": sigma,
    });
    let mut payload = format!("{header}\n").into_bytes();
    payload.extend(image.values().iter().flat_map(|v| v.to_le_bytes()));

    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = std::thread::spawn(move || {
        // A denoiser may exit before reading everything; the exit status reports that.
        let _ = stdin.write_all(&payload);
    });
    let mut stdout = Vec::new();
    child
        .stdout
        .take()
        .expect("stdout is piped")
        .read_to_end(&mut stdout)
        .map_err(|e| Error::Denoiser(format!("reading from `{program}`: {e}")))?;
    let mut stderr = String::new();
    if let Some(mut err) = child.stderr.take() {
        let _ = err.read_to_string(&mut stderr);
    }
    let status = child.wait()?;
    let _ = writer.join();

    if !status.success() {
        return Err(Error::Denoiser(format!("`{program}` exited with {status}: {}", stderr.trim())));
    }
    let n = image.len();
    if stdout.len() != n * 8 {
        return Err(Error::Denoiser(format!(
            "`{program}` returned {} bytes, expected {} ({}): {}",
            stdout.len(),
            n * 8,
            status,
            stderr.trim()
        )));
    }
    let values: Vec<f64> = stdout
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    ImageGrid::new(image.width(), image.height(), values)
        .map_err(|e| Error::Denoiser(format!("`{program}` returned an invalid image: {e}")))
}
