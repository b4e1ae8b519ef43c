//! Image and sinogram files.
//!
//! A file is a small JSON metadata document plus a raw little-endian `f64`
//! payload stored next to it. The metadata names the payload file relative
//! to its own directory:
//!
//! ```json
//! {"kind": "image", "width": 64, "height": 64, "dtype": "f64-le", "payload": "f.img.raw"}
//! ```
//!
//! Sinograms carry a `geometry` object instead of `width`/`height`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::tomo::{ParallelGeometry, Sinogram};

const DTYPE: &str = "f64-le";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Meta {
    Image { width: usize, height: usize, dtype: String, payload: String },
    Sinogram { geometry: ParallelGeometry, dtype: String, payload: String },
}

fn payload_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".raw");
    path.with_file_name(name)
}

fn write_payload(path: &Path, values: &[f64]) -> Result<String> {
    let raw = payload_path(path);
    let mut bytes = Vec::with_capacity(values.len() * 8);
    values.iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes()));
    fs::write(&raw, bytes)?;
    Ok(raw.file_name().unwrap().to_string_lossy().into_owned())
}

fn read_payload(meta_path: &Path, dtype: &str, payload: &str, expected: usize) -> Result<Vec<f64>> {
    if dtype != DTYPE {
        return Err(Error::Format(format!("unsupported dtype {dtype:?}, expected {DTYPE:?}")));
    }
    let dir = meta_path.parent().unwrap_or_else(|| Path::new(""));
    let bytes = fs::read(dir.join(payload))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format(format!(
            "payload length mismatch: expected {} bytes ({} values), found {}",
            expected * 8,
            expected,
            bytes.len()
        )));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_meta(path: &Path, meta: &Meta) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<Meta> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn save_image(path: impl AsRef<Path>, image: &ImageGrid) -> Result<()> {
    let path = path.as_ref();
    let payload = write_payload(path, image.values())?;
    write_meta(
        path,
        &Meta::Image { width: image.width(), height: image.height(), dtype: DTYPE.into(), payload },
    )
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    match read_meta(path)? {
        Meta::Image { width, height, dtype, payload } => {
            let values = read_payload(path, &dtype, &payload, width * height)?;
            ImageGrid::new(width, height, values)
        }
        Meta::Sinogram { .. } => Err(Error::Format(format!("{} holds a sinogram, not an image", path.display()))),
    }
}

pub fn save_sinogram(path: impl AsRef<Path>, sino: &Sinogram) -> Result<()> {
    let path = path.as_ref();
    let payload = write_payload(path, sino.values())?;
    write_meta(path, &Meta::Sinogram { geometry: sino.geometry.clone(), dtype: DTYPE.into(), payload })
}

pub fn load_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    let path = path.as_ref();
    match read_meta(path)? {
        Meta::Sinogram { geometry, dtype, payload } => {
            geometry.validate()?;
            let values = read_payload(path, &dtype, &payload, geometry.sinogram_len())?;
            Sinogram::new(geometry, values)
        }
        Meta::Image { .. } => Err(Error::Format(format!("{} holds an image, not a sinogram", path.display()))),
    }
}

/// Binary 8-bit PGM, min–max normalised. A constant image maps to all zeros.
pub fn pgm_bytes(image: &ImageGrid) -> Vec<u8> {
    let (lo, hi) = image
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.values().iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn save_pgm(path: impl AsRef<Path>, image: &ImageGrid) -> Result<()> {
    fs::write(path, pgm_bytes(image))?;
    Ok(())
}
