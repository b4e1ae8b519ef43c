use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{GradientEstimator, LeastSquares};
use crate::image::{all_finite, ImageGrid};
use crate::regularizers::TvDualState;
use crate::timing::CpuStopwatch;
use crate::tomo::ProjectionOperator;

use super::driver::{drive, Iterative, Monitor};
use super::record::RunOutput;
use super::{Problem, SolverConfig};

/// SAGA tables above this size trigger a memory warning.
pub const SAGA_TABLE_WARN_BYTES: usize = 1 << 30;

const INDEX_STREAM: u64 = 0;
const THETA_STREAM: u64 = 1;
const REFRESH_STREAM: u64 = 2;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Iterate, control variate and bookkeeping of one run.
#[derive(Clone, Debug)]
pub struct IterateState {
    pub x: Vec<f64>,
    /// Control variate `h_k`; starts at zero.
    pub h: Vec<f64>,
    pub tv_warm: Option<TvDualState>,
    pub iterations: u64,
    /// Prox evaluations, denoiser calls included.
    pub prox_calls: u64,
    pub denoiser_calls: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    /// The Bernoulli draw θ_k.
    pub prox_applied: bool,
    /// Subset drawn by the estimator, if it drew one.
    pub subset: Option<usize>,
}

/// The skip-capable proximal gradient iteration
///
/// ```text
/// x̂ = x − γ(G(x) − h)
/// θ ~ Bernoulli(p)
/// x⁺ = prox_{(γ/p)g}(x̂ − (γ/p)h)  if θ = 1,  x̂ otherwise
/// h⁺ = h + (p/γ)(x⁺ − x̂)
/// ```
///
/// with `G` any of the unbiased estimators. With `p = 1` and the full
/// gradient this is ISTA.
pub struct ProxSkip<'p, 'a, O: ProjectionOperator + ?Sized> {
    problem: &'p Problem<'a, O>,
    ls: LeastSquares<'a, O>,
    config: SolverConfig,
    estimator: GradientEstimator,
    theta_rng: ChaCha8Rng,
    state: IterateState,
    x_hat: Vec<f64>,
    prox_arg: Vec<f64>,
}

impl<'p, 'a, O: ProjectionOperator + ?Sized> ProxSkip<'p, 'a, O> {
    pub fn new(config: &SolverConfig, problem: &'p Problem<'a, O>, x0: &ImageGrid) -> Result<Self> {
        config.validate()?;
        problem.check_init(x0)?;
        let ls = problem.least_squares(config.n_subsets)?;
        let estimator = GradientEstimator::new(
            config.estimator,
            &ls,
            x0.values(),
            stream(config.seed, INDEX_STREAM),
            stream(config.seed, REFRESH_STREAM),
        )?;
        let n = x0.len();
        Ok(Self {
            problem,
            ls,
            config: config.clone(),
            estimator,
            theta_rng: stream(config.seed, THETA_STREAM),
            state: IterateState {
                x: x0.values().to_vec(),
                h: vec![0.0; n],
                tv_warm: None,
                iterations: 0,
                prox_calls: 0,
                denoiser_calls: 0,
            },
            x_hat: vec![0.0; n],
            prox_arg: vec![0.0; n],
        })
    }

    pub fn state(&self) -> &IterateState {
        &self.state
    }

    pub fn estimator(&self) -> &GradientEstimator {
        &self.estimator
    }

    pub fn data_passes(&self) -> f64 {
        self.estimator.cost().data_passes(self.ls.n_subsets())
    }

    pub fn memory_warning(&self) -> Option<String> {
        let bytes = self.estimator.saga_state()?.table_bytes();
        (bytes > SAGA_TABLE_WARN_BYTES).then(|| format!("SAGA gradient table uses {} MiB", bytes >> 20))
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        let gamma = self.config.gamma;
        let p = self.config.skip_probability;
        let g = self.estimator.estimate(&self.ls, &self.state.x)?;
        let theta = self.theta_rng.random::<f64>() < p;

        let st = &mut self.state;
        for ((xh, &x), (&gi, &hi)) in self.x_hat.iter_mut().zip(&st.x).zip(g.iter().zip(&st.h)) {
            *xh = x - gamma * (gi - hi);
        }

        if theta {
            // x̂ − (γ/p)h rewritten as x − γG + γ(1 − 1/p)h; the h term is
            // exactly zero at p = 1.
            let c = gamma * (1.0 - 1.0 / p);
            for ((a, &x), (&gi, &hi)) in self.prox_arg.iter_mut().zip(&st.x).zip(g.iter().zip(&st.h)) {
                *a = x - gamma * gi + c * hi;
            }
            let (w, h) = self.problem.dims();
            let arg = ImageGrid::from_vec_unchecked(w, h, std::mem::take(&mut self.prox_arg));
            let out = self.problem.regularizer.prox(&arg, gamma / p, &mut st.tv_warm);
            self.prox_arg = arg.into_values();
            let next = out?.into_values();
            st.prox_calls += 1;
            if self.problem.regularizer.is_denoiser() {
                st.denoiser_calls += 1;
            }
            let scale = p / gamma;
            for ((hi, &xn), &xh) in st.h.iter_mut().zip(&next).zip(&self.x_hat) {
                *hi += scale * (xn - xh);
            }
            st.x = next;
        } else {
            st.x.copy_from_slice(&self.x_hat);
        }
        st.iterations += 1;

        if !all_finite(&st.x) || !all_finite(&st.h) {
            return Err(Error::Divergence { iteration: st.iterations, gamma, partial: None });
        }
        Ok(StepOutcome { prox_applied: theta, subset: self.estimator.last_index() })
    }
}

impl<O: ProjectionOperator + ?Sized> Iterative for ProxSkip<'_, '_, O> {
    fn step(&mut self) -> Result<()> {
        ProxSkip::step(self).map(|_| ())
    }

    fn x(&self) -> &[f64] {
        &self.state.x
    }

    fn iterations(&self) -> u64 {
        self.state.iterations
    }

    fn data_passes(&self) -> f64 {
        ProxSkip::data_passes(self)
    }

    fn whole_passes(&self) -> u64 {
        let c = self.estimator.cost();
        c.full_gradients + c.subset_gradients / self.ls.n_subsets() as u64
    }

    fn prox_calls(&self) -> u64 {
        self.state.prox_calls
    }
}

/// Iterates until the tolerance or a budget is hit, logging a row at the
/// start, at every completed data pass and at the stop.
pub fn run<O: ProjectionOperator + ?Sized>(
    config: &SolverConfig,
    problem: &Problem<'_, O>,
    x0: &ImageGrid,
    monitor: &Monitor<'_>,
) -> Result<RunOutput> {
    let mut clock = CpuStopwatch::new();
    clock.start();
    let solver = ProxSkip::new(config, problem, x0);
    clock.stop();
    let mut solver = solver?;
    drive(&mut solver, clock, &config.stopping, problem, monitor)
}
