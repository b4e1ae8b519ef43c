use crate::error::{Error, Result};
use crate::estimators::LeastSquares;
use crate::image::{all_finite, ImageGrid};
use crate::regularizers::TvDualState;
use crate::timing::CpuStopwatch;
use crate::tomo::ProjectionOperator;

use super::driver::{drive, Iterative, Monitor};
use super::record::RunOutput;
use super::{Problem, SolverConfig};

/// FISTA with `t₁ = 1`, `t_{k+1} = (1 + √(1 + 4t_k²))/2`, full gradients and
/// a prox of weight γ at every iteration.
pub struct Fista<'p, 'a, O: ProjectionOperator + ?Sized> {
    problem: &'p Problem<'a, O>,
    ls: LeastSquares<'a, O>,
    gamma: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    t: f64,
    tv_warm: Option<TvDualState>,
    iterations: u64,
}

impl<'p, 'a, O: ProjectionOperator + ?Sized> Fista<'p, 'a, O> {
    pub fn new(gamma: f64, problem: &'p Problem<'a, O>, x0: &ImageGrid) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma must be positive"));
        }
        problem.check_init(x0)?;
        Ok(Self {
            problem,
            ls: problem.least_squares(1)?,
            gamma,
            x: x0.values().to_vec(),
            y: x0.values().to_vec(),
            t: 1.0,
            tv_warm: None,
            iterations: 0,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn step(&mut self) -> Result<()> {
        let g = self.ls.full_gradient(&self.y);
        let arg: Vec<f64> = self.y.iter().zip(&g).map(|(y, gi)| y - self.gamma * gi).collect();
        let (w, h) = self.problem.dims();
        let next = self
            .problem
            .regularizer
            .prox(&ImageGrid::from_vec_unchecked(w, h, arg), self.gamma, &mut self.tv_warm)?
            .into_values();
        let t_next = (1.0 + (1.0 + 4.0 * self.t * self.t).sqrt()) / 2.0;
        let momentum = (self.t - 1.0) / t_next;
        for ((y, &xn), &xo) in self.y.iter_mut().zip(&next).zip(&self.x) {
            *y = xn + momentum * (xn - xo);
        }
        self.x = next;
        self.t = t_next;
        self.iterations += 1;
        if !all_finite(&self.x) {
            return Err(Error::Divergence { iteration: self.iterations, gamma: self.gamma, partial: None });
        }
        Ok(())
    }
}

impl<O: ProjectionOperator + ?Sized> Iterative for Fista<'_, '_, O> {
    fn step(&mut self) -> Result<()> {
        Fista::step(self)
    }

    fn x(&self) -> &[f64] {
        &self.x
    }

    fn iterations(&self) -> u64 {
        self.iterations
    }

    fn data_passes(&self) -> f64 {
        self.iterations as f64
    }

    fn whole_passes(&self) -> u64 {
        self.iterations
    }

    fn prox_calls(&self) -> u64 {
        self.iterations
    }
}

/// FISTA under the same stopping and logging rules as [`super::run`].
/// The config's skip probability, subset count and estimator are ignored.
pub fn run_fista<O: ProjectionOperator + ?Sized>(
    config: &SolverConfig,
    problem: &Problem<'_, O>,
    x0: &ImageGrid,
    monitor: &Monitor<'_>,
) -> Result<RunOutput> {
    config.stopping.validate()?;
    let mut solver = Fista::new(config.gamma, problem, x0)?;
    drive(&mut solver, CpuStopwatch::new(), &config.stopping, problem, monitor)
}
