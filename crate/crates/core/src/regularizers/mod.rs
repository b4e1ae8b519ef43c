//! Regularisation terms and their proximal maps.

mod denoise;
mod tv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

pub use denoise::{apply_denoiser, discrete_gaussian_kernel, gaussian_blur, median3x3, skip_sigma, DenoiserKind, DenoiserSpec};
pub use tv::{gradient, gradient_adjoint, tv_prox, tv_value, TvDualState, TvProxConfig};

/// The non-smooth part `g` of the composite objective, or a plug-and-play
/// denoiser standing in for its proximal map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regularizer {
    /// `g ≡ 0`; the prox is the identity.
    None,
    /// Indicator of the nonnegative orthant.
    Nonneg,
    /// `α·TV(x)`, optionally plus the nonnegativity indicator.
    Tv(TvProxConfig),
    /// Prox step replaced wholesale by a denoiser; the prox weight is ignored.
    Denoiser(DenoiserSpec),
}

impl Regularizer {
    /// `prox_{weight·g}(input)`, threading the FGP warm-start state.
    pub fn prox(&self, input: &ImageGrid, weight: f64, warm: &mut Option<TvDualState>) -> Result<ImageGrid> {
        match self {
            Regularizer::None => Ok(input.clone()),
            Regularizer::Nonneg => Ok(nonneg_prox(input)),
            Regularizer::Tv(cfg) => {
                let start = if cfg.warm_start { warm.as_ref() } else { None };
                let (out, state) = tv_prox(input, weight, cfg, start)?;
                if cfg.warm_start {
                    *warm = Some(state);
                }
                Ok(out)
            }
            Regularizer::Denoiser(spec) => apply_denoiser(input, spec),
        }
    }

    /// `g(x)`, with the indicator terms dropped. `None` for denoisers, which
    /// have no associated objective.
    pub fn value(&self, x: &ImageGrid) -> Option<f64> {
        match self {
            Regularizer::None | Regularizer::Nonneg => Some(0.0),
            Regularizer::Tv(cfg) => Some(cfg.alpha * tv_value(x)),
            Regularizer::Denoiser(_) => None,
        }
    }

    pub fn is_denoiser(&self) -> bool {
        matches!(self, Regularizer::Denoiser(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Regularizer::Tv(cfg) => cfg.validate(),
            Regularizer::Denoiser(spec) => spec.validate(),
            _ => Ok(()),
        }
    }
}

/// Projection onto `{x ≥ 0}`.
pub fn nonneg_prox(image: &ImageGrid) -> ImageGrid {
    image.map(|v| v.max(0.0))
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive and finite, got {v}")))
    }
}
