use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;

/// When a run stops. At least one budget must be finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingRule {
    /// Stop once `‖x − x*‖²/‖x*‖²` drops below this.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_passes")]
    pub max_data_passes: f64,
    #[serde(default)]
    pub max_iterations: Option<u64>,
    /// CPU seconds spent inside the solver.
    #[serde(default)]
    pub time_budget: Option<f64>,
}

fn default_tolerance() -> f64 {
    1e-5
}

fn default_passes() -> f64 {
    200.0
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self { tolerance: default_tolerance(), max_data_passes: default_passes(), max_iterations: None, time_budget: None }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::param("tolerance must be nonnegative"));
        }
        if !(self.max_data_passes > 0.0) {
            return Err(Error::param("max_data_passes must be positive"));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::param("max_iterations must be positive"));
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return Err(Error::param("time_budget must be positive"));
            }
        }
        let bounded = self.max_data_passes.is_finite() || self.max_iterations.is_some() || self.time_budget.is_some_and(f64::is_finite);
        if !bounded {
            return Err(Error::param("at least one budget must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Step size γ.
    pub gamma: f64,
    /// Probability p of applying the prox at an iteration.
    pub skip_probability: f64,
    pub n_subsets: usize,
    pub estimator: EstimatorKind,
    #[serde(flatten)]
    pub stopping: StoppingRule,
    /// Strong-convexity constant, when known; see [`optimal_p`].
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SolverConfig {
    /// Defaults for a named algorithm: the estimator, `N = 1` for
    /// deterministic methods, `p = 1` for non-skipping ones and the
    /// algorithm's standard step size for Lipschitz constant `lipschitz`.
    pub fn for_algorithm(algorithm: Algorithm, lipschitz: f64, n_subsets: usize, p: f64, seed: u64) -> Self {
        let n_subsets = if algorithm.estimator().is_stochastic() { n_subsets } else { 1 };
        let skip_probability = if algorithm.skips() { p } else { 1.0 };
        Self {
            gamma: algorithm.default_gamma(lipschitz),
            skip_probability,
            n_subsets,
            estimator: algorithm.estimator(),
            stopping: StoppingRule::default(),
            mu: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.skip_probability > 0.0 && self.skip_probability <= 1.0) {
            return Err(Error::param(format!("skip probability must be in (0, 1], got {}", self.skip_probability)));
        }
        if self.n_subsets == 0 {
            return Err(Error::param("n_subsets must be at least 1"));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::param("mu must be positive"));
            }
        }
        self.stopping.validate()
    }
}

/// `p = √(μ/L)`.
pub fn optimal_p(mu: f64, lipschitz: f64) -> Result<f64> {
    if !(mu > 0.0) || !(lipschitz > 0.0) || mu > lipschitz {
        return Err(Error::param(format!("need 0 < mu <= L, got mu = {mu}, L = {lipschitz}")));
    }
    Ok((mu / lipschitz).sqrt().clamp(f64::MIN_POSITIVE, 1.0))
}

/// The named members of the algorithm family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ista,
    Fista,
    ProxSkip,
    ProxSgd,
    ProxSgdSkip,
    ProxSaga,
    ProxSagaSkip,
    ProxSvrg,
    ProxSvrgSkip,
    ProxLsvrg,
    ProxLsvrgSkip,
}

impl Algorithm {
    pub const ALL: [Algorithm; 11] = [
        Algorithm::Ista,
        Algorithm::Fista,
        Algorithm::ProxSkip,
        Algorithm::ProxSgd,
        Algorithm::ProxSgdSkip,
        Algorithm::ProxSaga,
        Algorithm::ProxSagaSkip,
        Algorithm::ProxSvrg,
        Algorithm::ProxSvrgSkip,
        Algorithm::ProxLsvrg,
        Algorithm::ProxLsvrgSkip,
    ];

    pub fn estimator(self) -> EstimatorKind {
        use Algorithm::*;
        match self {
            Ista | Fista | ProxSkip => EstimatorKind::Full,
            ProxSgd | ProxSgdSkip => EstimatorKind::Sgd,
            ProxSaga | ProxSagaSkip => EstimatorKind::Saga,
            ProxSvrg | ProxSvrgSkip => EstimatorKind::Svrg,
            ProxLsvrg | ProxLsvrgSkip => EstimatorKind::Lsvrg,
        }
    }

    pub fn skips(self) -> bool {
        use Algorithm::*;
        matches!(self, ProxSkip | ProxSgdSkip | ProxSagaSkip | ProxSvrgSkip | ProxLsvrgSkip)
    }

    /// The non-skipping member with the same estimator.
    pub fn non_skip(self) -> Algorithm {
        use Algorithm::*;
        match self {
            ProxSkip => Ista,
            ProxSgdSkip => ProxSgd,
            ProxSagaSkip => ProxSaga,
            ProxSvrgSkip => ProxSvrg,
            ProxLsvrgSkip => ProxLsvrg,
            other => other,
        }
    }

    /// γ = 1.99/L for ISTA and ProxSkip, 1/(3L) for SAGA variants, 1/L otherwise.
    pub fn default_gamma(self, lipschitz: f64) -> f64 {
        use Algorithm::*;
        match self {
            Ista | ProxSkip => 1.99 / lipschitz,
            ProxSaga | ProxSagaSkip => 1.0 / (3.0 * lipschitz),
            _ => 1.0 / lipschitz,
        }
    }

    pub fn name(self) -> &'static str {
        use Algorithm::*;
        match self {
            Ista => "ista",
            Fista => "fista",
            ProxSkip => "prox-skip",
            ProxSgd => "prox-sgd",
            ProxSgdSkip => "prox-sgd-skip",
            ProxSaga => "prox-saga",
            ProxSagaSkip => "prox-saga-skip",
            ProxSvrg => "prox-svrg",
            ProxSvrgSkip => "prox-svrg-skip",
            ProxLsvrg => "prox-lsvrg",
            ProxLsvrgSkip => "prox-lsvrg-skip",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key || a.name().replace('-', "") == key)
            .ok_or_else(|| Error::param(format!("unknown algorithm `{s}`")))
    }
}
