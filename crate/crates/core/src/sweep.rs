//! The benchmark grid: every (algorithm, N, p, inner iterations, seed,
//! repetition) cell run to a tolerance, one CSV per cell and a summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::regularizers::{skip_sigma, Regularizer};
use crate::solvers::{run_algorithm, Algorithm, Monitor, Problem, RunRecord, SolverConfig, StoppingRule};
use crate::tomo::ProjectionOperator;

/// Written in place of a time or count when the tolerance was not reached.
pub const NOT_REACHED: &str = "--";

pub const SUMMARY_HEADER: &str = "algorithm,n_subsets,p,inner_iterations,seed,repetition,status,\
iterations,data_passes,prox_calls,prox_z,final_rel_err,final_psnr,final_ssim,\
time_to_eps,iterations_to_eps,data_passes_to_eps,prox_calls_to_eps,speedup";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub algorithms: Vec<Algorithm>,
    /// Subset counts; deterministic algorithms always use one subset.
    #[serde(default = "default_n")]
    pub n_subsets: Vec<usize>,
    /// Prox probabilities; non-skipping algorithms always use 1.
    #[serde(default = "default_p")]
    pub probabilities: Vec<f64>,
    /// FGP inner iteration counts; ignored unless the regulariser is TV.
    #[serde(default)]
    pub inner_iterations: Vec<usize>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_n() -> Vec<usize> {
    vec![10]
}
fn default_p() -> Vec<f64> {
    vec![0.1]
}
fn default_reps() -> usize {
    1
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() || self.n_subsets.is_empty() || self.probabilities.is_empty() || self.seeds.is_empty() {
            return Err(Error::param("sweep axes must be non-empty"));
        }
        if self.repetitions == 0 {
            return Err(Error::param("repetitions must be at least 1"));
        }
        if self.n_subsets.contains(&0) || self.inner_iterations.contains(&0) {
            return Err(Error::param("subset and inner-iteration counts must be positive"));
        }
        if self.probabilities.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::param("probabilities must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Cells in a fixed order, with axes that do not apply collapsed.
    pub fn cells(&self, tv: bool) -> Vec<Cell> {
        let inner: Vec<Option<usize>> =
            if tv && !self.inner_iterations.is_empty() { self.inner_iterations.iter().map(|&i| Some(i)).collect() } else { vec![None] };
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            let ns: Vec<usize> = if algorithm.estimator().is_stochastic() { self.n_subsets.clone() } else { vec![1] };
            let ps: Vec<f64> = if algorithm.skips() { self.probabilities.clone() } else { vec![1.0] };
            for &n in &ns {
                for &p in &ps {
                    for &it in &inner {
                        for &seed in &self.seeds {
                            for repetition in 0..self.repetitions {
                                out.push(Cell { algorithm, n_subsets: n, p, inner_iterations: it, seed, repetition });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub n_subsets: usize,
    pub p: f64,
    pub inner_iterations: Option<usize>,
    pub seed: u64,
    pub repetition: usize,
}

impl Cell {
    /// Seed actually handed to the solver.
    pub fn run_seed(&self) -> u64 {
        self.seed.wrapping_add((self.repetition as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn label(&self) -> String {
        let inner = self.inner_iterations.map(|i| format!("_it{i}")).unwrap_or_default();
        format!("{}_N{}_p{}{}_s{}_r{}", self.algorithm, self.n_subsets, self.p, inner, self.seed, self.repetition)
    }
}

#[derive(Clone, Debug)]
pub struct SweepSettings {
    pub stopping: StoppingRule,
    /// Lipschitz constant of the full least-squares gradient.
    pub lipschitz: f64,
    /// Multiplies each algorithm's default step size.
    pub gamma_scale: f64,
    /// Worker threads; 1 for timing-grade runs.
    pub jobs: usize,
    /// Use `σ/√p` for the denoiser of skipping algorithms.
    pub scale_denoiser_sigma: bool,
}

impl SweepSettings {
    pub fn new(lipschitz: f64, stopping: StoppingRule) -> Self {
        Self { stopping, lipschitz, gamma_scale: 1.0, jobs: 1, scale_denoiser_sigma: true }
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub cell: Cell,
    pub record: RunRecord,
    /// Divergence or other failure; the record then holds the partial log.
    pub error: Option<String>,
    pub diverged: bool,
}

impl CellResult {
    pub fn reached(&self, tolerance: f64) -> Option<&crate::solvers::RunRow> {
        self.record.reached(tolerance)
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub tolerance: f64,
    pub cells: Vec<CellResult>,
}

impl SweepReport {
    /// `time(non-skip) / time(skip)` for a skipping cell against its
    /// counterpart at the same N, inner iterations, seed and repetition.
    pub fn speedup(&self, index: usize) -> Option<f64> {
        let c = &self.cells[index];
        if !c.cell.algorithm.skips() {
            return None;
        }
        let base = c.cell.algorithm.non_skip();
        let other = self.cells.iter().find(|o| {
            o.cell.algorithm == base
                && o.cell.n_subsets == c.cell.n_subsets
                && o.cell.inner_iterations == c.cell.inner_iterations
                && o.cell.seed == c.cell.seed
                && o.cell.repetition == c.cell.repetition
        })?;
        let t_skip = c.reached(self.tolerance)?.wall_seconds;
        let t_base = other.reached(self.tolerance)?.wall_seconds;
        (t_skip > 0.0).then(|| t_base / t_skip)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for (i, c) in self.cells.iter().enumerate() {
            let last = c.record.last();
            let hit = c.reached(self.tolerance);
            let iterations = c.record.iterations;
            let prox = last.map_or(0, |r| r.prox_calls);
            let var = iterations as f64 * c.cell.p * (1.0 - c.cell.p);
            let z = if var > 0.0 { (prox as f64 - c.cell.p * iterations as f64) / var.sqrt() } else { 0.0 };
            let speedup = if c.cell.algorithm.skips() {
                self.speedup(i).map(|s| format!("{s:.4}")).unwrap_or_else(|| NOT_REACHED.into())
            } else {
                String::new()
            };
            let hit_field = |f: &dyn Fn(&crate::solvers::RunRow) -> String| hit.map(f).unwrap_or_else(|| NOT_REACHED.into());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{:.4},{},{},{},{},{},{},{},{}",
                c.cell.algorithm,
                c.cell.n_subsets,
                c.cell.p,
                c.cell.inner_iterations.map(|i| i.to_string()).unwrap_or_default(),
                c.cell.seed,
                c.cell.repetition,
                match (&c.error, c.diverged) { (None, _) => "ok", (Some(_), true) => "diverged", (Some(_), false) => "failed" },
                iterations,
                last.map_or(String::new(), |r| format!("{}", r.data_passes)),
                prox,
                z,
                opt(last.and_then(|r| r.rel_err)),
                opt(last.and_then(|r| r.psnr)),
                opt(last.and_then(|r| r.ssim)),
                hit_field(&|r| format!("{:.6}", r.wall_seconds)),
                hit_field(&|r| r.iteration.to_string()),
                hit_field(&|r| r.data_passes.to_string()),
                hit_field(&|r| r.prox_calls.to_string()),
                speedup,
            );
        }
        out
    }

    /// Writes `summary.csv` and, per cell, `cells/<label>.csv` and
    /// `cells/<label>.dat` (gnuplot columns).
    pub fn write(&self, dir: &Path) -> Result<()> {
        let cells = dir.join("cells");
        fs::create_dir_all(&cells)?;
        for c in &self.cells {
            let label = c.cell.label();
            fs::write(cells.join(format!("{label}.csv")), c.record.to_csv())?;
            fs::write(cells.join(format!("{label}.dat")), c.record.to_gnuplot())?;
        }
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        Ok(())
    }
}

fn cell_regularizer(base: &Regularizer, cell: &Cell, scale_sigma: bool) -> Result<Regularizer> {
    Ok(match base {
        Regularizer::Tv(cfg) => {
            let mut cfg = cfg.clone();
            if let Some(it) = cell.inner_iterations {
                cfg.inner_iterations = it;
            }
            Regularizer::Tv(cfg)
        }
        Regularizer::Denoiser(spec) if scale_sigma && cell.algorithm.skips() => {
            Regularizer::Denoiser(spec.with_sigma(skip_sigma(spec.sigma, cell.p)?))
        }
        other => other.clone(),
    })
}

fn run_cell<O: ProjectionOperator + ?Sized>(
    cell: &Cell,
    problem: &Problem<'_, O>,
    settings: &SweepSettings,
    monitor: &Monitor<'_>,
) -> CellResult {
    let outcome = (|| {
        let regularizer = cell_regularizer(&problem.regularizer, cell, settings.scale_denoiser_sigma)?;
        let cell_problem = Problem::new(problem.operator, problem.data, regularizer)?;
        let mut config = SolverConfig::for_algorithm(cell.algorithm, settings.lipschitz, cell.n_subsets, cell.p, cell.run_seed());
        config.gamma *= settings.gamma_scale;
        config.stopping = settings.stopping.clone();
        let (w, h) = problem.dims();
        run_algorithm(cell.algorithm, &config, &cell_problem, &ImageGrid::zeros(w, h), monitor)
    })();
    match outcome {
        Ok(out) => CellResult { cell: *cell, record: out.record, error: None, diverged: false },
        Err(Error::Divergence { iteration, gamma, partial }) => CellResult {
            cell: *cell,
            record: partial.map(|b| *b).unwrap_or_default(),
            error: Some(format!("diverged at iteration {iteration} with gamma {gamma}")),
            diverged: true,
        },
        Err(e) => CellResult { cell: *cell, record: RunRecord::default(), error: Some(e.to_string()), diverged: false },
    }
}

/// Runs every cell. A failing cell is recorded and the sweep continues;
/// only invalid settings abort it.
pub fn run_sweep<O: ProjectionOperator + ?Sized>(
    grid: &SweepGrid,
    settings: &SweepSettings,
    problem: &Problem<'_, O>,
    monitor: &Monitor<'_>,
) -> Result<SweepReport> {
    grid.validate()?;
    settings.stopping.validate()?;
    if !(settings.lipschitz > 0.0) || !(settings.gamma_scale > 0.0) || settings.jobs == 0 {
        return Err(Error::param("sweep needs a positive Lipschitz constant, step scale and job count"));
    }
    let cells = grid.cells(matches!(problem.regularizer, Regularizer::Tv(_)));
    let results = if settings.jobs == 1 {
        cells.iter().map(|c| run_cell(c, problem, settings, monitor)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.jobs)
            .build()
            .map_err(|e| Error::param(e.to_string()))?;
        pool.install(|| cells.par_iter().map(|c| run_cell(c, problem, settings, monitor)).collect())
    };
    Ok(SweepReport { tolerance: settings.stopping.tolerance, cells: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::{operator_norm_sq, ParallelGeometry, Projector};
    use crate::TvProxConfig;

    fn grid() -> SweepGrid {
        SweepGrid {
            algorithms: vec![Algorithm::Ista, Algorithm::ProxSvrg, Algorithm::ProxSvrgSkip],
            n_subsets: vec![4],
            probabilities: vec![0.3, 0.5],
            inner_iterations: vec![5],
            repetitions: 1,
            seeds: vec![2],
        }
    }

    #[test]
    fn cells_collapse_unused_axes() {
        let cells = grid().cells(true);
        assert_eq!(cells.len(), 1 + 1 + 2);
        assert_eq!(cells[0].n_subsets, 1);
        assert_eq!(cells[0].p, 1.0);
        assert!(grid().cells(false).iter().all(|c| c.inner_iterations.is_none()));
    }

    #[test]
    fn summary_marks_unreached_and_is_deterministic() {
        let g = ParallelGeometry::uniform(8, 13).unwrap();
        let op = Projector::new(&g, 8, 8).unwrap();
        let truth = crate::phantoms::disc_phantom(8, 0.6).unwrap();
        let b = op.project(&truth, None).unwrap();
        let reg = Regularizer::Tv(TvProxConfig { alpha: 0.01, inner_iterations: 5, warm_start: true, nonneg: true });
        let problem = Problem::new(&op, &b, reg).unwrap();
        let l = operator_norm_sq(&op, 50, 0).unwrap();
        let stopping = StoppingRule { tolerance: 0.0, max_data_passes: 3.0, max_iterations: None, time_budget: None };
        let settings = SweepSettings::new(l * 1.01, stopping);
        let monitor = Monitor::with_reference(&truth);
        let a = run_sweep(&grid(), &settings, &problem, &monitor).unwrap();
        let b2 = run_sweep(&grid(), &SweepSettings { jobs: 3, ..settings }, &problem, &monitor).unwrap();
        let strip = |s: String| {
            s.lines()
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    let keep: Vec<&str> = f.iter().enumerate().filter(|(i, _)| *i != 14 && *i != 18).map(|(_, v)| *v).collect();
                    keep.join(",")
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(a.summary_csv()), strip(b2.summary_csv()));
        let summary = a.summary_csv();
        let row = summary.lines().nth(1).unwrap();
        assert!(row.contains(NOT_REACHED));
        for (x, y) in a.cells.iter().zip(&b2.cells) {
            assert_eq!(x.record.without_timing(), y.record.without_timing());
        }
    }

    #[test]
    fn writes_files() {
        let g = ParallelGeometry::uniform(4, 7).unwrap();
        let op = Projector::new(&g, 4, 4).unwrap();
        let b = op.project(&ImageGrid::filled(4, 4, 1.0), None).unwrap();
        let problem = Problem::new(&op, &b, Regularizer::Nonneg).unwrap();
        let stopping = StoppingRule { tolerance: 1e-3, max_data_passes: 2.0, max_iterations: None, time_budget: None };
        let settings = SweepSettings::new(operator_norm_sq(&op, 30, 0).unwrap() * 1.01, stopping);
        let grid = SweepGrid { algorithms: vec![Algorithm::Ista], ..grid() };
        let truth = ImageGrid::filled(4, 4, 1.0);
        let report = run_sweep(&grid, &settings, &problem, &Monitor::with_reference(&truth)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("cells").join(format!("{}.csv", report.cells[0].cell.label())).exists());
    }
}
