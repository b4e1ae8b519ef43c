use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use proxskip::io::{load_image, load_sinogram, save_image, save_pgm, save_sinogram};
use proxskip::phantoms::{fbp, foam_phantom, shepp_logan, simulate_sinogram, NoiseSpec};
use proxskip::regularizers::skip_sigma;
use proxskip::selfcheck::run_self_checks;
use proxskip::solvers::{run_algorithm, run_pdhg_reference, Monitor, RunRecord};
use proxskip::sweep::{run_sweep, SweepSettings};
use proxskip::tomo::operator_norm_sq;
use proxskip::{Error, ImageGrid, ParallelGeometry, Problem, Projector, Regularizer, Sinogram};

use crate::config::{load_foam, InitKind, RunConfigFile, DEFAULT_POWER_ITERATIONS, LIPSCHITZ_MARGIN};
use crate::error::{config_error, CliResult, SweepDiverged};
use crate::{Command, FbpArgs, PhantomArgs, PhantomKind, ProjectArgs, ReconstructArgs, ReferenceArgs, SweepArgs, ValidateArgs};

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Phantom(a) => phantom(&a),
        Command::Project(a) => project(&a),
        Command::Fbp(a) => fbp_command(&a),
        Command::Reference(a) => reference(&a),
        Command::Reconstruct(a) => reconstruct(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Validate(a) => validate(&a),
    }
}

fn read_image(path: &Path) -> CliResult<ImageGrid> {
    load_image(path).map_err(|e| config_error(format!("cannot read image {}: {e}", path.display())))
}

fn read_sinogram(path: &Path) -> CliResult<Sinogram> {
    load_sinogram(path).map_err(|e| config_error(format!("cannot read sinogram {}: {e}", path.display())))
}

fn write_image(path: &Path, image: &ImageGrid) -> CliResult<()> {
    save_image(path, image).with_context(|| format!("writing {}", path.display()))
}

fn write_pgm(path: Option<&PathBuf>, image: &ImageGrid) -> CliResult<()> {
    if let Some(p) = path {
        save_pgm(p, image).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn phantom(a: &PhantomArgs) -> CliResult<()> {
    let image = match a.kind {
        PhantomKind::Foam => {
            let spec = load_foam(a.spec.as_deref(), a.size, a.seed)?;
            let foam = foam_phantom(&spec)?;
            if let Some(w) = &foam.warning {
                eprintln!("warning: {w}");
            }
            foam.image
        }
        PhantomKind::SheppLogan => {
            if a.spec.is_some() || a.seed.is_some() {
                return Err(config_error("--spec and --seed apply to foam phantoms only"));
            }
            shepp_logan(a.size.ok_or_else(|| config_error("--size is required"))?)?
        }
    };
    write_image(&a.out, &image)?;
    write_pgm(a.pgm.as_ref(), &image)
}

/// Odd bin count covering the image diagonal with two spare bins each side.
pub fn default_bins(width: usize, height: usize, pixel_size: f64, bin_spacing: f64) -> usize {
    let diag = ((width * width + height * height) as f64).sqrt() * pixel_size / bin_spacing;
    let n = diag.ceil() as usize + 4;
    n | 1
}

fn project(a: &ProjectArgs) -> CliResult<()> {
    let image = read_image(&a.phantom)?;
    let bins = a.bins.unwrap_or_else(|| default_bins(image.width(), image.height(), a.pixel_size, a.bin_spacing));
    let geometry = ParallelGeometry::uniform(a.angles, bins)?.with_spacings(a.bin_spacing, a.pixel_size)?;
    let sino = simulate_sinogram(&image, &geometry, &NoiseSpec::gaussian(a.noise, a.noise_seed))?;
    save_sinogram(&a.out, &sino).with_context(|| format!("writing {}", a.out.display()))
}

fn square_or(size: Option<usize>, width: Option<usize>, height: Option<usize>) -> CliResult<(usize, usize)> {
    match (size, width, height) {
        (Some(s), None, None) => Ok((s, s)),
        (None, Some(w), Some(h)) => Ok((w, h)),
        _ => Err(config_error("give either --size or both --width and --height")),
    }
}

fn fbp_command(a: &FbpArgs) -> CliResult<()> {
    let sino = read_sinogram(&a.sinogram)?;
    let (w, h) = square_or(a.size, a.width, a.height)?;
    let image = fbp(&sino, w, h)?;
    write_image(&a.out, &image)?;
    write_pgm(a.pgm.as_ref(), &image)
}

/// Everything a run needs that comes from files.
struct Inputs {
    sinogram: Sinogram,
    projector: Projector,
    reference: Option<ImageGrid>,
    truth: Option<ImageGrid>,
}

impl Inputs {
    fn load(cfg: &RunConfigFile) -> CliResult<Self> {
        let p = &cfg.problem;
        let path = p.sinogram.as_ref().ok_or_else(|| config_error("problem.sinogram (--sinogram) is required"))?;
        let sinogram = read_sinogram(path)?;
        let reference = p.reference.as_deref().map(read_image).transpose()?;
        let truth = p.ground_truth.as_deref().map(read_image).transpose()?;
        let known = reference.as_ref().or(truth.as_ref()).map(|i| (i.width(), i.height()));
        let (w, h) = match (p.width, p.height, known) {
            (Some(w), Some(h), _) => (w, h),
            (None, None, Some(dims)) => dims,
            (Some(w), None, Some((_, h))) => (w, h),
            (None, Some(h), Some((w, _))) => (w, h),
            _ => return Err(config_error("image size unknown: set problem.width and problem.height")),
        };
        for (name, image) in [("reference", &reference), ("ground truth", &truth)] {
            if let Some(i) = image {
                if (i.width(), i.height()) != (w, h) {
                    return Err(config_error(format!("{name} is {}x{}, image size is {w}x{h}", i.width(), i.height())));
                }
            }
        }
        let projector = Projector::new(&sinogram.geometry, w, h)?;
        Ok(Self { sinogram, projector, reference, truth })
    }

    fn lipschitz(&self, cfg: &RunConfigFile) -> CliResult<f64> {
        if let Some(l) = cfg.problem.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return Err(config_error("problem.lipschitz must be positive"));
            }
            return Ok(l);
        }
        let iterations = cfg.problem.power_iterations.unwrap_or(DEFAULT_POWER_ITERATIONS);
        Ok(operator_norm_sq(&self.projector, iterations, 0)? * LIPSCHITZ_MARGIN)
    }

    fn monitor(&self) -> Monitor<'_> {
        Monitor { reference: self.reference.as_ref(), ground_truth: self.truth.as_ref(), objective: true }
    }
}

fn reference(a: &ReferenceArgs) -> CliResult<()> {
    let cfg = RunConfigFile::load(a.problem.config.as_deref())?.overlay(a.overlay());
    let out = cfg.output.image.clone().ok_or_else(|| config_error("--out (output.image) is required"))?;
    let inputs = Inputs::load(&cfg)?;
    let problem = Problem::new(&inputs.projector, inputs.sinogram.values(), cfg.resolve_regularizer()?)?;
    let x = run_pdhg_reference(&problem, a.iterations)?;
    if let Some(obj) = problem.objective(&x) {
        println!("objective {obj:.12e} after {} PDHG iterations", a.iterations);
    }
    write_image(&out, &x)?;
    write_pgm(cfg.output.pgm.as_ref(), &x)
}

fn write_log(path: &Path, record: &RunRecord) -> CliResult<()> {
    fs::write(path, record.to_csv()).with_context(|| format!("writing {}", path.display()))
}

fn default_log_path(image: &Path) -> PathBuf {
    let mut name = image.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".csv");
    image.with_file_name(name)
}

fn reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let cfg = RunConfigFile::load(a.problem.config.as_deref())?.overlay(a.overlay());
    let out = cfg.output.image.clone().ok_or_else(|| config_error("--out (output.image) is required"))?;
    let log = cfg.output.log.clone().unwrap_or_else(|| default_log_path(&out));
    let inputs = Inputs::load(&cfg)?;
    let lipschitz = inputs.lipschitz(&cfg)?;
    let algorithm = cfg.algorithm();
    let solver = cfg.resolve_solver(lipschitz)?;
    let mut regularizer = cfg.resolve_regularizer()?;
    if let Regularizer::Denoiser(spec) = &regularizer {
        if cfg.scale_sigma() && solver.skip_probability < 1.0 {
            regularizer = Regularizer::Denoiser(spec.with_sigma(skip_sigma(spec.sigma, solver.skip_probability)?));
        }
    }
    let problem = Problem::new(&inputs.projector, inputs.sinogram.values(), regularizer)?;
    let (w, h) = problem.dims();
    let x0 = match cfg.problem.init.unwrap_or(InitKind::Zero) {
        InitKind::Zero => ImageGrid::zeros(w, h),
        InitKind::Fbp => fbp(&inputs.sinogram, w, h)?,
    };
    let output = match run_algorithm(algorithm, &solver, &problem, &x0, &inputs.monitor()) {
        Ok(o) => o,
        Err(Error::Divergence { iteration, gamma, partial }) => {
            if let Some(rec) = &partial {
                write_log(&log, rec)?;
            }
            return Err(Error::Divergence { iteration, gamma, partial }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_image(&out, &output.x)?;
    write_log(&log, &output.record)?;
    if let Some(p) = &cfg.output.gnuplot {
        fs::write(p, output.record.to_gnuplot()).with_context(|| format!("writing {}", p.display()))?;
    }
    write_pgm(cfg.output.pgm.as_ref(), &output.x)?;
    let last = output.record.last();
    println!(
        "{algorithm}: {} iterations, {:.3} data passes, {} prox calls, stop {:?}{}",
        output.record.iterations,
        last.map_or(0.0, |r| r.data_passes),
        last.map_or(0, |r| r.prox_calls),
        output.record.stop_reason,
        last.and_then(|r| r.rel_err).map_or(String::new(), |e| format!(", rel_err {e:.3e}")),
    );
    Ok(())
}

fn sweep(a: &SweepArgs) -> CliResult<()> {
    let cfg = RunConfigFile::load(a.problem.config.as_deref())?.overlay(a.overlay());
    let dir = cfg.output.dir.clone().ok_or_else(|| config_error("--out (output.dir) is required"))?;
    let grid = cfg.resolve_grid()?;
    let inputs = Inputs::load(&cfg)?;
    if inputs.reference.is_none() {
        eprintln!("warning: no problem.reference; time-to-tolerance columns will be empty");
    }
    let settings = SweepSettings {
        stopping: cfg.resolve_stopping()?,
        lipschitz: inputs.lipschitz(&cfg)?,
        gamma_scale: cfg.sweep.gamma_scale.unwrap_or(1.0),
        jobs: cfg.sweep.jobs.unwrap_or(1),
        scale_denoiser_sigma: cfg.scale_sigma(),
    };
    if settings.jobs == 0 {
        return Err(config_error("sweep.jobs must be at least 1"));
    }
    let problem = Problem::new(&inputs.projector, inputs.sinogram.values(), cfg.resolve_regularizer()?)?;
    let report = run_sweep(&grid, &settings, &problem, &inputs.monitor())?;
    report.write(&dir).with_context(|| format!("writing {}", dir.display()))?;
    for c in &report.cells {
        if let Some(e) = &c.error {
            eprintln!("cell {}: {e}", c.cell.label());
        }
    }
    println!("{} cells written to {}", report.cells.len(), dir.display());
    let diverged = report.cells.iter().filter(|c| c.diverged).count();
    if diverged > 0 {
        return Err(SweepDiverged(diverged).into());
    }
    if let Some(c) = report.cells.iter().find(|c| c.error.is_some()) {
        anyhow::bail!("cell {} failed: {}", c.cell.label(), c.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn validate(a: &ValidateArgs) -> CliResult<()> {
    let outcomes = run_self_checks(a.seed);
    let mut failed = 0;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        anyhow::bail!("{failed} of {} checks failed", outcomes.len());
    }
    Ok(())
}
