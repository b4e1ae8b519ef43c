//! Test objects and simulated measurements.
//!
//! Phantoms live on the square `[-1, 1]²` sampled at pixel centres, with `y`
//! pointing up (row 0 is the top of the image).

mod fbp;

pub use fbp::{fbp, ramp_kernel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::tomo::{ParallelGeometry, Projector, Sinogram};

/// Normalised coordinates of the centre of pixel `(row, col)`.
pub fn pixel_centre(row: usize, col: usize, width: usize, height: usize) -> (f64, f64) {
    let x = (col as f64 + 0.5) / width as f64 * 2.0 - 1.0;
    let y = 1.0 - (row as f64 + 0.5) / height as f64 * 2.0;
    (x, y)
}

fn rasterise(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
    let mut values = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let (x, y) = pixel_centre(r, c, width, height);
            values.push(f(x, y));
        }
    }
    ImageGrid::from_vec_unchecked(width, height, values)
}

/// Uniform disc of value 1 centred at the origin.
pub fn disc_phantom(size: usize, radius: f64) -> Result<ImageGrid> {
    if size == 0 || !(radius > 0.0) {
        return Err(Error::param("disc needs a positive size and radius"));
    }
    Ok(rasterise(size, size, |x, y| if x * x + y * y <= radius * radius { 1.0 } else { 0.0 }))
}

// ---------------------------------------------------------------------------
// Foam

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoamSpec {
    pub size: usize,
    /// Cylinder radius in normalised units.
    #[serde(default = "default_cylinder")]
    pub cylinder_radius: f64,
    #[serde(default = "default_bubbles")]
    pub bubbles: usize,
    #[serde(default = "default_rmin")]
    pub radius_min: f64,
    #[serde(default = "default_rmax")]
    pub radius_max: f64,
    #[serde(default = "default_separation")]
    pub min_separation: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_cylinder() -> f64 {
    0.9
}
fn default_bubbles() -> usize {
    40
}
fn default_rmin() -> f64 {
    0.03
}
fn default_rmax() -> f64 {
    0.12
}
fn default_separation() -> f64 {
    0.02
}
fn default_attempts() -> usize {
    20_000
}

impl FoamSpec {
    pub fn new(size: usize, seed: u64) -> Self {
        Self {
            size,
            cylinder_radius: default_cylinder(),
            bubbles: default_bubbles(),
            radius_min: default_rmin(),
            radius_max: default_rmax(),
            min_separation: default_separation(),
            seed,
            max_attempts: default_attempts(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::param("foam size must be positive"));
        }
        let positive = self.cylinder_radius > 0.0 && self.radius_min > 0.0 && self.radius_max >= self.radius_min;
        if !positive || !self.radius_max.is_finite() || !self.cylinder_radius.is_finite() {
            return Err(Error::param("foam radii must be positive with radius_min <= radius_max"));
        }
        if !(self.min_separation >= 0.0) {
            return Err(Error::param("foam min_separation must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bubble {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct FoamPhantom {
    pub image: ImageGrid,
    pub bubbles: Vec<Bubble>,
    /// Set when fewer bubbles than requested fit within the attempt cap.
    pub warning: Option<String>,
}

/// Solid cylinder with holes placed by seeded rejection sampling.
pub fn foam_phantom(spec: &FoamSpec) -> Result<FoamPhantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut bubbles: Vec<Bubble> = Vec::with_capacity(spec.bubbles);
    let big = spec.cylinder_radius;
    let mut attempts = 0;
    while bubbles.len() < spec.bubbles && attempts < spec.max_attempts {
        attempts += 1;
        let radius = if spec.radius_max > spec.radius_min {
            rng.random_range(spec.radius_min..spec.radius_max)
        } else {
            spec.radius_min
        };
        if radius >= big {
            continue;
        }
        let reach = big - radius;
        let x = rng.random_range(-reach..reach);
        let y = rng.random_range(-reach..reach);
        if x.hypot(y) > reach {
            continue;
        }
        let clear = bubbles
            .iter()
            .all(|b| (b.x - x).hypot(b.y - y) >= b.radius + radius + spec.min_separation);
        if clear {
            bubbles.push(Bubble { x, y, radius });
        }
    }
    let warning = (bubbles.len() < spec.bubbles).then(|| {
        format!("placed {} of {} bubbles after {} attempts", bubbles.len(), spec.bubbles, attempts)
    });
    let image = rasterise(spec.size, spec.size, |x, y| {
        if x.hypot(y) > big {
            return 0.0;
        }
        if bubbles.iter().any(|b| (x - b.x).hypot(y - b.y) <= b.radius) {
            0.0
        } else {
            1.0
        }
    });
    Ok(FoamPhantom { image, bubbles, warning })
}

// ---------------------------------------------------------------------------
// Shepp–Logan

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    /// Semi-axis along x before rotation.
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    /// Counter-clockwise rotation in degrees.
    pub phi_deg: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

const fn ellipse(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse { intensity, a, b, x0, y0, phi_deg }
}

/// The ten ellipses of the modified (higher-contrast) Shepp–Logan head.
pub const SHEPP_LOGAN_ELLIPSES: [Ellipse; 10] = [
    ellipse(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    ellipse(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    ellipse(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    ellipse(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    ellipse(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    ellipse(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    ellipse(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    ellipse(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    ellipse(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    ellipse(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

pub fn shepp_logan_value(x: f64, y: f64) -> f64 {
    SHEPP_LOGAN_ELLIPSES.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum()
}

pub fn shepp_logan(size: usize) -> Result<ImageGrid> {
    if size < 16 {
        return Err(Error::param("Shepp-Logan needs size >= 16"));
    }
    Ok(rasterise(size, size, shepp_logan_value))
}

// ---------------------------------------------------------------------------
// Measurements

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    GaussianAdditive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub model: NoiseModel,
    /// Standard deviation as a fraction of the largest sinogram value.
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(level: f64, seed: u64) -> Self {
        Self { model: NoiseModel::GaussianAdditive, level, seed }
    }

    pub fn none() -> Self {
        Self::gaussian(0.0, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0) || !self.level.is_finite() {
            return Err(Error::param(format!("noise level must be finite and >= 0, got {}", self.level)));
        }
        Ok(())
    }
}

/// Adds noise in place; a zero level leaves the values untouched.
pub fn add_noise(values: &mut [f64], noise: &NoiseSpec) -> Result<()> {
    noise.validate()?;
    if noise.level == 0.0 {
        return Ok(());
    }
    let peak = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let std = noise.level * peak;
    if std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    values.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    Ok(())
}

pub fn simulate_sinogram(phantom: &ImageGrid, geometry: &ParallelGeometry, noise: &NoiseSpec) -> Result<Sinogram> {
    noise.validate()?;
    let projector = Projector::new(geometry, phantom.width(), phantom.height())?;
    let mut values = projector.project(phantom, None)?;
    add_noise(&mut values, noise)?;
    Sinogram::new(geometry.clone(), values)
}
