//! Proximal gradient solvers: the skip-capable variance-reduced loop, FISTA
//! and the preconditioned PDHG reference solver.

mod config;
mod driver;
mod fista;
mod pdhg;
mod proxskip;
mod record;

pub use config::{optimal_p, Algorithm, SolverConfig, StoppingRule};
pub use driver::Monitor;
pub use fista::{run_fista, Fista};
pub use pdhg::{run_pdhg_reference, Pdhg};
pub use proxskip::{run, IterateState, ProxSkip, StepOutcome};
pub use record::{RunOutput, RunRecord, RunRow, StopReason, CSV_HEADER};

use crate::error::{Error, Result};
use crate::estimators::LeastSquares;
use crate::image::ImageGrid;
use crate::regularizers::Regularizer;
use crate::tomo::{build_staggered_partition, ProjectionOperator};

/// Runs a named algorithm: FISTA through its own loop, everything else
/// through [`run`].
pub fn run_algorithm<O: ProjectionOperator + ?Sized>(
    algorithm: Algorithm,
    config: &SolverConfig,
    problem: &Problem<'_, O>,
    x0: &ImageGrid,
    monitor: &Monitor<'_>,
) -> Result<RunOutput> {
    match algorithm {
        Algorithm::Fista => run_fista(config, problem, x0, monitor),
        _ => run(config, problem, x0, monitor),
    }
}

/// `min ½‖Ax − b‖² + g(x)` over images of the operator's shape.
pub struct Problem<'a, O: ProjectionOperator + ?Sized> {
    pub operator: &'a O,
    pub data: &'a [f64],
    pub regularizer: Regularizer,
}

impl<'a, O: ProjectionOperator + ?Sized> Problem<'a, O> {
    pub fn new(operator: &'a O, data: &'a [f64], regularizer: Regularizer) -> Result<Self> {
        let m = operator.n_views() * operator.view_len();
        if data.len() != m {
            return Err(Error::shape(format!("data has {} values, operator range is {m}", data.len())));
        }
        regularizer.validate()?;
        Ok(Self { operator, data, regularizer })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.operator.image_dims()
    }

    pub fn least_squares(&self, n_subsets: usize) -> Result<LeastSquares<'a, O>> {
        let partition = build_staggered_partition(self.operator.n_views(), n_subsets)?;
        LeastSquares::new(self.operator, self.data, partition)
    }

    /// `½‖Ax − b‖² + g(x)` with indicator terms dropped; `None` in
    /// plug-and-play mode.
    pub fn objective(&self, x: &ImageGrid) -> Option<f64> {
        let reg = self.regularizer.value(x)?;
        let ls = self.least_squares(1).ok()?;
        Some(ls.value(x.values()) + reg)
    }

    pub(crate) fn check_init(&self, x0: &ImageGrid) -> Result<()> {
        let (w, h) = self.dims();
        if x0.width() != w || x0.height() != h {
            return Err(Error::shape(format!("initial image is {}x{}, problem is {w}x{h}", x0.width(), x0.height())));
        }
        Ok(())
    }
}
