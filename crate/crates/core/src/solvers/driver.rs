use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::metrics::{data_range, psnr, relative_error_sq_slice, ssim};
use crate::timing::CpuStopwatch;
use crate::tomo::ProjectionOperator;

use super::record::{RunOutput, RunRecord, RunRow, StopReason};
use super::{Problem, StoppingRule};

/// What to evaluate at logging events. Evaluation happens outside the timed
/// region.
#[derive(Clone, Copy, Debug, Default)]
pub struct Monitor<'a> {
    /// High-accuracy solution `x*` for the relative error and the tolerance stop.
    pub reference: Option<&'a ImageGrid>,
    /// Ground truth for PSNR and SSIM.
    pub ground_truth: Option<&'a ImageGrid>,
    pub objective: bool,
}

impl<'a> Monitor<'a> {
    pub fn with_reference(reference: &'a ImageGrid) -> Self {
        Self { reference: Some(reference), ..Self::default() }
    }
}

pub(crate) trait Iterative {
    fn step(&mut self) -> Result<()>;
    fn x(&self) -> &[f64];
    fn iterations(&self) -> u64;
    fn data_passes(&self) -> f64;
    /// Number of whole data passes completed.
    fn whole_passes(&self) -> u64;
    fn prox_calls(&self) -> u64;
}

pub(crate) fn drive<S, O>(
    solver: &mut S,
    mut clock: CpuStopwatch,
    stopping: &StoppingRule,
    problem: &Problem<'_, O>,
    monitor: &Monitor<'_>,
) -> Result<RunOutput>
where
    S: Iterative,
    O: ProjectionOperator + ?Sized,
{
    let (w, h) = problem.dims();
    let range = monitor.ground_truth.map(data_range);
    let rel_err = |x: &[f64]| -> Option<f64> { monitor.reference.and_then(|r| relative_error_sq_slice(x, r.values()).ok()) };
    let make_row = |solver: &S, clock: &CpuStopwatch, err: Option<f64>| -> RunRow {
        let needs_image = monitor.ground_truth.is_some() || monitor.objective;
        let image = needs_image.then(|| ImageGrid::from_vec_unchecked(w, h, solver.x().to_vec()));
        let (psnr_v, ssim_v) = match (monitor.ground_truth, &image) {
            (Some(gt), Some(img)) => (psnr(img, gt, range.unwrap_or(1.0)).ok(), ssim(img, gt).ok()),
            _ => (None, None),
        };
        let objective = match (&image, monitor.objective) {
            (Some(img), true) => problem.objective(img),
            _ => None,
        };
        RunRow {
            iteration: solver.iterations(),
            data_passes: solver.data_passes(),
            wall_seconds: clock.seconds(),
            rel_err: err,
            psnr: psnr_v,
            ssim: ssim_v,
            prox_calls: solver.prox_calls(),
            objective,
        }
    };
    let satisfied = |err: Option<f64>| stopping.tolerance == f64::INFINITY || err.is_some_and(|e| e < stopping.tolerance);

    let mut record = RunRecord::default();
    let err = rel_err(solver.x());
    record.rows.push(make_row(solver, &clock, err));
    let mut last_boundary = solver.whole_passes();
    if satisfied(err) {
        record.stop_reason = Some(StopReason::Tolerance);
        record.iterations = solver.iterations();
        return Ok(finish(solver, record, w, h));
    }

    loop {
        let budget_stop = if solver.data_passes() >= stopping.max_data_passes {
            Some(StopReason::DataPasses)
        } else if stopping.max_iterations.is_some_and(|m| solver.iterations() >= m) {
            Some(StopReason::Iterations)
        } else if stopping.time_budget.is_some_and(|t| clock.seconds() >= t) {
            Some(StopReason::Time)
        } else {
            None
        };
        if let Some(reason) = budget_stop {
            if record.rows.last().is_some_and(|r| r.iteration != solver.iterations()) {
                let err = rel_err(solver.x());
                record.rows.push(make_row(solver, &clock, err));
            }
            record.stop_reason = Some(reason);
            break;
        }

        clock.start();
        let stepped = solver.step();
        clock.stop();
        if let Err(e) = stepped {
            record.iterations = solver.iterations();
            return Err(match e {
                Error::Divergence { iteration, gamma, .. } => Error::Divergence { iteration, gamma, partial: Some(Box::new(record)) },
                other => other,
            });
        }

        let err = rel_err(solver.x());
        let boundary = solver.whole_passes();
        if satisfied(err) {
            record.rows.push(make_row(solver, &clock, err));
            record.stop_reason = Some(StopReason::Tolerance);
            break;
        }
        if boundary > last_boundary {
            record.rows.push(make_row(solver, &clock, err));
            last_boundary = boundary;
        }
    }
    record.iterations = solver.iterations();
    Ok(finish(solver, record, w, h))
}

fn finish<S: Iterative>(solver: &S, record: RunRecord, w: usize, h: usize) -> RunOutput {
    RunOutput { x: ImageGrid::from_vec_unchecked(w, h, solver.x().to_vec()), record }
}
