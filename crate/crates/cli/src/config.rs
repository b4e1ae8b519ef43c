//! The run configuration file read by `reconstruct`, `reference` and `sweep`.
//!
//! Every field is optional. Command-line flags are parsed into the same
//! structure and laid over the file with [`RunConfigFile::overlay`], so the
//! precedence is flags, then file, then the defaults applied by the
//! `resolve_*` methods.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use proxskip::phantoms::FoamSpec;
use proxskip::solvers::{optimal_p, StoppingRule};
use proxskip::sweep::SweepGrid;
use proxskip::{Algorithm, DenoiserKind, DenoiserSpec, EstimatorKind, Regularizer, SolverConfig, TvProxConfig};

use crate::error::{config_error, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub regularizer: RegularizerSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub stopping: StoppingSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub sinogram: Option<PathBuf>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub reference: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub lipschitz: Option<f64>,
    pub power_iterations: Option<usize>,
    pub init: Option<InitKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Zero,
    Fbp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    None,
    Nonneg,
    Tv,
    Gaussian,
    Median,
    External,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSection {
    pub kind: Option<RegularizerKind>,
    pub alpha: Option<f64>,
    pub inner_iterations: Option<usize>,
    pub warm_start: Option<bool>,
    pub nonneg: Option<bool>,
    pub sigma: Option<f64>,
    pub scale_sigma: Option<bool>,
    pub program: Option<String>,
    pub args: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub algorithm: Option<Algorithm>,
    pub estimator: Option<EstimatorKind>,
    pub gamma: Option<f64>,
    pub skip_probability: Option<f64>,
    pub n_subsets: Option<usize>,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSection {
    pub tolerance: Option<f64>,
    pub max_data_passes: Option<f64>,
    pub max_iterations: Option<u64>,
    pub time_budget: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub algorithms: Option<Vec<Algorithm>>,
    pub n_subsets: Option<Vec<usize>>,
    pub probabilities: Option<Vec<f64>>,
    pub inner_iterations: Option<Vec<usize>>,
    pub repetitions: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub gamma_scale: Option<f64>,
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub image: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub gnuplot: Option<PathBuf>,
    pub pgm: Option<PathBuf>,
    pub dir: Option<PathBuf>,
}

pub const DEFAULT_POWER_ITERATIONS: usize = 200;
/// The power-method estimate is inflated by this factor before use.
pub const LIPSCHITZ_MARGIN: f64 = 1.01;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_INNER_ITERATIONS: usize = 20;
pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_P: f64 = 0.1;
pub const DEFAULT_SUBSETS: usize = 10;

/// `(key, description)` for every key of [`RunConfigFile`], shown by `--help`.
pub const RUN_CONFIG_KEYS: &[(&str, &str)] = &[
    ("problem.sinogram", "sinogram file (metadata JSON with a .raw payload)"),
    ("problem.width", "image width in pixels; defaults to the reference or ground truth width"),
    ("problem.height", "image height in pixels; defaults like width"),
    ("problem.reference", "high-accuracy solution x*; enables rel_err and the tolerance stop"),
    ("problem.ground_truth", "phantom image; enables psnr and ssim"),
    ("problem.lipschitz", "Lipschitz constant L of the data term; default: power method x 1.01"),
    ("problem.power_iterations", "power-method iterations for L [200]"),
    ("problem.init", "initial image: zero | fbp [zero]"),
    ("regularizer.kind", "none | nonneg | tv | gaussian | median | external [tv]"),
    ("regularizer.alpha", "TV weight [1.0]"),
    ("regularizer.inner_iterations", "FGP iterations per TV prox [20]"),
    ("regularizer.warm_start", "warm-start FGP from the previous dual [true]"),
    ("regularizer.nonneg", "add the nonnegativity constraint to TV [true]"),
    ("regularizer.sigma", "denoiser strength; pixels for gaussian [0.05]"),
    ("regularizer.scale_sigma", "use sigma/sqrt(p) for skipping algorithms [true]"),
    ("regularizer.program", "external denoiser executable (raw-image protocol on stdin/stdout)"),
    ("regularizer.args", "arguments passed to the external denoiser [[]]"),
    ("solver.algorithm", "ista | fista | prox-skip | prox-{sgd,saga,svrg,lsvrg}[-skip] [ista]"),
    ("solver.estimator", "override the algorithm's estimator: full | sgd | saga | svrg | lsvrg"),
    ("solver.gamma", "step size; default 1.99/L (ista, prox-skip), 1/(3L) (saga), 1/L otherwise"),
    ("solver.skip_probability", "prox probability p of skipping algorithms [0.1, or sqrt(mu/L) if mu is set]"),
    ("solver.n_subsets", "angle subsets N for stochastic estimators [10]"),
    ("solver.mu", "strong-convexity constant, used to pick p"),
    ("solver.seed", "seed for subset sampling and prox coin flips [0]"),
    ("stopping.tolerance", "stop once ||x - x*||^2/||x*||^2 < tolerance [1e-5]"),
    ("stopping.max_data_passes", "data-pass budget [200]"),
    ("stopping.max_iterations", "iteration budget [none]"),
    ("stopping.time_budget", "solver CPU-second budget [none]"),
    ("sweep.algorithms", "algorithms to run (required for sweep)"),
    ("sweep.n_subsets", "subset counts [[10]]"),
    ("sweep.probabilities", "prox probabilities [[0.1]]"),
    ("sweep.inner_iterations", "FGP inner-iteration counts; empty keeps regularizer.inner_iterations [[]]"),
    ("sweep.repetitions", "repetitions per cell, each with its own stream [1]"),
    ("sweep.seeds", "base seeds [[0]]"),
    ("sweep.gamma_scale", "multiplier on every default step size [1.0]"),
    ("sweep.jobs", "worker threads; keep 1 for timing-grade runs [1]"),
    ("output.image", "reconstructed image file"),
    ("output.log", "run log CSV [<image>.csv]"),
    ("output.gnuplot", "whitespace-separated error-versus-time data"),
    ("output.pgm", "8-bit PGM preview of the result"),
    ("output.dir", "sweep output directory"),
];

/// `(key, description)` for the foam description read by `phantom --spec`.
pub const FOAM_KEYS: &[(&str, &str)] = &[
    ("size", "image side in pixels (overridden by --size)"),
    ("cylinder_radius", "cylinder radius in normalised units [0.9]"),
    ("bubbles", "requested number of holes [40]"),
    ("radius_min", "smallest hole radius [0.03]"),
    ("radius_max", "largest hole radius [0.12]"),
    ("min_separation", "minimum gap between holes and to the cylinder wall [0.02]"),
    ("seed", "placement seed (overridden by --seed) [0]"),
    ("max_attempts", "rejection-sampling attempt cap [20000]"),
];

pub fn key_table(title: &str, keys: &[(&str, &str)]) -> String {
    let width = keys.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = format!("{title}:\n");
    for (key, doc) in keys {
        out.push_str(&format!("  {key:width$}  {doc}\n"));
    }
    out
}

/// Reads TOML, or JSON when the extension is `.json`.
pub fn read_document<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => read_document(p),
            None => Ok(Self::default()),
        }
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfigFile) -> Self {
        let (b, t) = (&mut self.problem, top.problem);
        overlay_fields!(b, t; sinogram, width, height, reference, ground_truth, lipschitz, power_iterations, init);
        let (b, t) = (&mut self.regularizer, top.regularizer);
        overlay_fields!(b, t; kind, alpha, inner_iterations, warm_start, nonneg, sigma, scale_sigma, program, args);
        let (b, t) = (&mut self.solver, top.solver);
        overlay_fields!(b, t; algorithm, estimator, gamma, skip_probability, n_subsets, mu, seed);
        let (b, t) = (&mut self.stopping, top.stopping);
        overlay_fields!(b, t; tolerance, max_data_passes, max_iterations, time_budget);
        let (b, t) = (&mut self.sweep, top.sweep);
        overlay_fields!(b, t; algorithms, n_subsets, probabilities, inner_iterations, repetitions, seeds, gamma_scale, jobs);
        let (b, t) = (&mut self.output, top.output);
        overlay_fields!(b, t; image, log, gnuplot, pgm, dir);
        self
    }

    /// A document with every key set. Written without `..Default::default()`
    /// so that adding a field breaks the build until it is listed here.
    pub fn example() -> Self {
        Self {
            problem: ProblemSection {
                sinogram: Some("data.sino".into()),
                width: Some(64),
                height: Some(64),
                reference: Some("xstar.img".into()),
                ground_truth: Some("truth.img".into()),
                lipschitz: Some(1.0e4),
                power_iterations: Some(DEFAULT_POWER_ITERATIONS),
                init: Some(InitKind::Zero),
            },
            regularizer: RegularizerSection {
                kind: Some(RegularizerKind::Tv),
                alpha: Some(2.0),
                inner_iterations: Some(DEFAULT_INNER_ITERATIONS),
                warm_start: Some(true),
                nonneg: Some(true),
                sigma: Some(DEFAULT_SIGMA),
                scale_sigma: Some(true),
                program: Some("my-denoiser".into()),
                args: Some(vec!["--fast".into()]),
            },
            solver: SolverSection {
                algorithm: Some(Algorithm::ProxSvrgSkip),
                estimator: Some(EstimatorKind::Svrg),
                gamma: Some(1.0e-4),
                skip_probability: Some(DEFAULT_P),
                n_subsets: Some(DEFAULT_SUBSETS),
                mu: Some(1.0),
                seed: Some(0),
            },
            stopping: StoppingSection {
                tolerance: Some(1e-3),
                max_data_passes: Some(200.0),
                max_iterations: Some(10_000),
                time_budget: Some(60.0),
            },
            sweep: SweepSection {
                algorithms: Some(vec![Algorithm::ProxSvrg, Algorithm::ProxSvrgSkip]),
                n_subsets: Some(vec![10]),
                probabilities: Some(vec![0.05, 0.1]),
                inner_iterations: Some(vec![100]),
                repetitions: Some(1),
                seeds: Some(vec![0]),
                gamma_scale: Some(1.0),
                jobs: Some(1),
            },
            output: OutputSection {
                image: Some("recon.img".into()),
                log: Some("recon.csv".into()),
                gnuplot: Some("recon.dat".into()),
                pgm: Some("recon.pgm".into()),
                dir: Some("sweep-out".into()),
            },
        }
    }

    pub fn resolve_regularizer(&self) -> CliResult<Regularizer> {
        let r = &self.regularizer;
        let kind = r.kind.unwrap_or(RegularizerKind::Tv);
        let tv_keys = [("alpha", r.alpha.is_some()), ("inner_iterations", r.inner_iterations.is_some()), ("warm_start", r.warm_start.is_some()), ("nonneg", r.nonneg.is_some())];
        let denoiser_keys = [("sigma", r.sigma.is_some()), ("scale_sigma", r.scale_sigma.is_some())];
        let external_keys = [("program", r.program.is_some()), ("args", r.args.is_some())];
        let allowed: &[&str] = match kind {
            RegularizerKind::None | RegularizerKind::Nonneg => &[],
            RegularizerKind::Tv => &["alpha", "inner_iterations", "warm_start", "nonneg"],
            RegularizerKind::Gaussian | RegularizerKind::Median => &["sigma", "scale_sigma"],
            RegularizerKind::External => &["sigma", "scale_sigma", "program", "args"],
        };
        for (key, set) in tv_keys.iter().chain(&denoiser_keys).chain(&external_keys) {
            if *set && !allowed.contains(key) {
                return Err(config_error(format!("regularizer.{key} does not apply to regularizer kind {kind:?}")));
            }
        }
        let denoiser = |kind: DenoiserKind| DenoiserSpec { kind, sigma: r.sigma.unwrap_or(DEFAULT_SIGMA) };
        let reg = match kind {
            RegularizerKind::None => Regularizer::None,
            RegularizerKind::Nonneg => Regularizer::Nonneg,
            RegularizerKind::Tv => Regularizer::Tv(TvProxConfig {
                alpha: r.alpha.unwrap_or(DEFAULT_ALPHA),
                inner_iterations: r.inner_iterations.unwrap_or(DEFAULT_INNER_ITERATIONS),
                warm_start: r.warm_start.unwrap_or(true),
                nonneg: r.nonneg.unwrap_or(true),
            }),
            RegularizerKind::Gaussian => Regularizer::Denoiser(denoiser(DenoiserKind::BuiltinGaussian)),
            RegularizerKind::Median => Regularizer::Denoiser(denoiser(DenoiserKind::BuiltinMedian)),
            RegularizerKind::External => {
                let program = r.program.clone().ok_or_else(|| config_error("regularizer.program is required for kind external"))?;
                Regularizer::Denoiser(denoiser(DenoiserKind::ExternalCommand { program, args: r.args.clone().unwrap_or_default() }))
            }
        };
        reg.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(reg)
    }

    pub fn scale_sigma(&self) -> bool {
        self.regularizer.scale_sigma.unwrap_or(true)
    }

    pub fn resolve_stopping(&self) -> CliResult<StoppingRule> {
        let s = &self.stopping;
        let d = StoppingRule::default();
        let rule = StoppingRule {
            tolerance: s.tolerance.unwrap_or(d.tolerance),
            max_data_passes: s.max_data_passes.unwrap_or(d.max_data_passes),
            max_iterations: s.max_iterations.or(d.max_iterations),
            time_budget: s.time_budget.or(d.time_budget),
        };
        rule.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(rule)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.solver.algorithm.unwrap_or(Algorithm::Ista)
    }

    pub fn resolve_solver(&self, lipschitz: f64) -> CliResult<SolverConfig> {
        let s = &self.solver;
        let algorithm = self.algorithm();
        let p = match (s.skip_probability, s.mu) {
            (Some(p), _) => p,
            (None, Some(mu)) => optimal_p(mu, lipschitz).map_err(|e| config_error(e.to_string()))?,
            (None, None) => DEFAULT_P,
        };
        let mut config = SolverConfig::for_algorithm(algorithm, lipschitz, s.n_subsets.unwrap_or(DEFAULT_SUBSETS), p, s.seed.unwrap_or(0));
        if let Some(estimator) = s.estimator {
            if algorithm == Algorithm::Fista && estimator != EstimatorKind::Full {
                return Err(config_error("fista only supports the full estimator"));
            }
            config.estimator = estimator;
            config.n_subsets = if estimator.is_stochastic() { s.n_subsets.unwrap_or(DEFAULT_SUBSETS) } else { 1 };
            // The default step follows the estimator actually used.
            if algorithm != Algorithm::Fista {
                config.gamma = with_estimator(algorithm, estimator).default_gamma(lipschitz);
            }
        }
        if s.skip_probability.is_some() {
            // A non-skipping name with an explicit p behaves as its skipping twin.
            config.skip_probability = p;
        }
        if let Some(gamma) = s.gamma {
            config.gamma = gamma;
        }
        config.mu = s.mu;
        config.stopping = self.resolve_stopping()?;
        config.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(config)
    }

    pub fn resolve_grid(&self) -> CliResult<SweepGrid> {
        let s = &self.sweep;
        let algorithms = s.algorithms.clone().ok_or_else(|| config_error("sweep.algorithms is required"))?;
        let grid = SweepGrid {
            algorithms,
            n_subsets: s.n_subsets.clone().unwrap_or_else(|| vec![DEFAULT_SUBSETS]),
            probabilities: s.probabilities.clone().unwrap_or_else(|| vec![DEFAULT_P]),
            inner_iterations: s.inner_iterations.clone().unwrap_or_default(),
            repetitions: s.repetitions.unwrap_or(1),
            seeds: s.seeds.clone().unwrap_or_else(|| vec![0]),
        };
        grid.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(grid)
    }
}

/// The family member with `estimator` and the same skipping behaviour.
fn with_estimator(algorithm: Algorithm, estimator: EstimatorKind) -> Algorithm {
    Algorithm::ALL
        .into_iter()
        .find(|a| *a != Algorithm::Fista && a.estimator() == estimator && a.skips() == algorithm.skips())
        .unwrap_or(algorithm)
}

/// Reads a foam description, or the defaults when no file is given.
pub fn load_foam(path: Option<&Path>, size: Option<usize>, seed: Option<u64>) -> CliResult<FoamSpec> {
    let mut spec = match path {
        Some(p) => read_document::<FoamSpec>(p)?,
        None => FoamSpec::new(size.ok_or_else(|| config_error("--size is required"))?, 0),
    };
    if let Some(size) = size {
        spec.size = size;
    }
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate().map_err(|e| config_error(e.to_string()))?;
    Ok(spec)
}
