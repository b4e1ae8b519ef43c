use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parallel-beam acquisition geometry. The detector and the image grid are
/// both centred on the rotation axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParallelGeometry {
    pub n_angles: usize,
    /// Radians in `[0, π)`, strictly increasing.
    pub angles: Vec<f64>,
    pub n_bins: usize,
    pub bin_spacing: f64,
    pub pixel_size: f64,
}

impl ParallelGeometry {
    /// `n_angles` uniformly spaced angles `kπ/n_angles` with unit spacings.
    pub fn uniform(n_angles: usize, n_bins: usize) -> Result<Self> {
        if n_angles == 0 {
            return Err(Error::param("n_angles must be at least 1"));
        }
        let angles = (0..n_angles).map(|k| k as f64 * PI / n_angles as f64).collect();
        Self::new(angles, n_bins, 1.0, 1.0)
    }

    pub fn new(angles: Vec<f64>, n_bins: usize, bin_spacing: f64, pixel_size: f64) -> Result<Self> {
        let geometry = Self { n_angles: angles.len(), angles, n_bins, bin_spacing, pixel_size };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn with_spacings(mut self, bin_spacing: f64, pixel_size: f64) -> Result<Self> {
        self.bin_spacing = bin_spacing;
        self.pixel_size = pixel_size;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 || self.angles.len() != self.n_angles {
            return Err(Error::param(format!(
                "geometry declares {} angles but lists {}",
                self.n_angles,
                self.angles.len()
            )));
        }
        if self.n_bins == 0 {
            return Err(Error::param("n_bins must be at least 1"));
        }
        if !(self.bin_spacing > 0.0 && self.bin_spacing.is_finite()) {
            return Err(Error::param("bin_spacing must be positive"));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::param("pixel_size must be positive"));
        }
        if self.angles.iter().any(|a| !(0.0..PI).contains(a)) {
            return Err(Error::param("angles must lie in [0, pi)"));
        }
        if self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("angles must be strictly increasing"));
        }
        Ok(())
    }

    /// Signed offset of the centre of detector bin `bin` from the rotation axis.
    pub fn bin_offset(&self, bin: usize) -> f64 {
        (bin as f64 - (self.n_bins as f64 - 1.0) / 2.0) * self.bin_spacing
    }

    pub fn sinogram_len(&self) -> usize {
        self.n_angles * self.n_bins
    }

    /// True when the angles are `a0 + kΔ` to within a small tolerance.
    pub fn is_uniform(&self) -> bool {
        if self.n_angles < 3 {
            return true;
        }
        let step = self.angles[1] - self.angles[0];
        self.angles
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.max(1e-300))
    }
}

/// Angle-major measurement array.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub geometry: ParallelGeometry,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(geometry: ParallelGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.sinogram_len() {
            return Err(Error::shape(format!(
                "sinogram needs {} values for {} angles x {} bins, got {}",
                geometry.sinogram_len(),
                geometry.n_angles,
                geometry.n_bins,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sinogram values must be finite"));
        }
        Ok(Self { geometry, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        let n = self.geometry.n_bins;
        &self.values[angle * n..(angle + 1) * n]
    }
}
