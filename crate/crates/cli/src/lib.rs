//! Command-line front end: argument parsing, config layering and the
//! subcommands. `main.rs` only forwards to [`main_with_args`].

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use proxskip::{Algorithm, EstimatorKind};

use config::{key_table, InitKind, RegularizerKind, RunConfigFile, FOAM_KEYS, RUN_CONFIG_KEYS};
use error::{exit_code, EXIT_OK};

#[derive(Parser, Debug)]
#[command(name = "proxskip", version, about = "Stochastic proximal-gradient tomographic reconstruction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a foam or Shepp-Logan phantom.
    Phantom(PhantomArgs),
    /// Simulate a parallel-beam sinogram of an image, optionally noisy.
    Project(ProjectArgs),
    /// Filtered back-projection of a sinogram.
    Fbp(FbpArgs),
    /// Compute a high-accuracy solution x* with preconditioned PDHG.
    Reference(ReferenceArgs),
    /// Run one algorithm and write the image and its run log.
    Reconstruct(ReconstructArgs),
    /// Run a grid of algorithms and write summary CSVs.
    Sweep(SweepArgs),
    /// Run the built-in oracle and property checks.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhantomKind {
    Foam,
    SheppLogan,
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    #[arg(long, value_enum)]
    pub kind: PhantomKind,
    /// Image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Foam placement seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Foam description (TOML, or JSON by extension); keys listed below.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an 8-bit PGM preview.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Input image.
    #[arg(long)]
    pub phantom: PathBuf,
    /// Number of uniformly spaced angles in [0, pi).
    #[arg(long, default_value_t = 60)]
    pub angles: usize,
    /// Detector bins; default covers the image diagonal plus a margin.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub bin_spacing: f64,
    #[arg(long, default_value_t = 1.0)]
    pub pixel_size: f64,
    /// Gaussian noise std as a fraction of the largest sinogram value.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FbpArgs {
    #[arg(long)]
    pub sinogram: PathBuf,
    /// Square output side; alternatively give --width and --height.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

/// Flags shared by the commands that read a run config.
#[derive(Args, Debug, Default)]
pub struct ProblemFlags {
    /// Run config (TOML, or JSON by extension); keys listed below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sinogram: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long, value_enum)]
    pub regularizer: Option<RegularizerKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub inner_iterations: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

/// Stopping-rule flags.
#[derive(Args, Debug, Default)]
pub struct StoppingFlags {
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_passes: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    /// Solver CPU seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub problem: ProblemFlags,
    /// PDHG iterations.
    #[arg(long, default_value_t = 5000)]
    pub iterations: u64,
    /// Output image (or output.image).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub problem: ProblemFlags,
    #[command(flatten)]
    pub stopping: StoppingFlags,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Prox probability.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub n_subsets: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub init: Option<InitKind>,
    /// Output image (or output.image).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run log CSV (or output.log).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Full,
    Sgd,
    Saga,
    Svrg,
    Lsvrg,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Full => EstimatorKind::Full,
            EstimatorArg::Sgd => EstimatorKind::Sgd,
            EstimatorArg::Saga => EstimatorKind::Saga,
            EstimatorArg::Svrg => EstimatorKind::Svrg,
            EstimatorArg::Lsvrg => EstimatorKind::Lsvrg,
        }
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemFlags,
    #[command(flatten)]
    pub stopping: StoppingFlags,
    /// Worker threads (or sweep.jobs); keep 1 for timing-grade runs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory (or output.dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ProblemFlags {
    pub fn overlay(&self) -> RunConfigFile {
        let mut c = RunConfigFile::default();
        c.problem.sinogram = self.sinogram.clone();
        c.problem.width = self.width;
        c.problem.height = self.height;
        c.problem.reference = self.reference.clone();
        c.problem.ground_truth = self.ground_truth.clone();
        c.problem.lipschitz = self.lipschitz;
        c.regularizer.kind = self.regularizer;
        c.regularizer.alpha = self.alpha;
        c.regularizer.inner_iterations = self.inner_iterations;
        c.regularizer.sigma = self.sigma;
        c
    }
}

impl StoppingFlags {
    fn apply(&self, c: &mut RunConfigFile) {
        c.stopping.tolerance = self.tolerance;
        c.stopping.max_data_passes = self.max_passes;
        c.stopping.max_iterations = self.max_iterations;
        c.stopping.time_budget = self.time_budget;
    }
}

impl ReferenceArgs {
    pub fn overlay(&self) -> RunConfigFile {
        let mut c = self.problem.overlay();
        c.output.image = self.out.clone();
        c
    }
}

impl ReconstructArgs {
    pub fn overlay(&self) -> RunConfigFile {
        let mut c = self.problem.overlay();
        self.stopping.apply(&mut c);
        c.problem.init = self.init;
        c.solver.algorithm = self.algorithm;
        c.solver.estimator = self.estimator.map(Into::into);
        c.solver.gamma = self.gamma;
        c.solver.skip_probability = self.p;
        c.solver.n_subsets = self.n_subsets;
        c.solver.mu = self.mu;
        c.solver.seed = self.seed;
        c.output.image = self.out.clone();
        c.output.log = self.log.clone();
        c.output.gnuplot = self.gnuplot.clone();
        c.output.pgm = self.pgm.clone();
        c
    }
}

impl SweepArgs {
    pub fn overlay(&self) -> RunConfigFile {
        let mut c = self.problem.overlay();
        self.stopping.apply(&mut c);
        c.sweep.jobs = self.jobs;
        c.output.dir = self.out.clone();
        c
    }
}

/// The clap command with the config key tables attached to the help of
/// the commands that read them.
pub fn command() -> clap::Command {
    let run_keys = key_table("Config keys (flags override the file, the file overrides defaults)", RUN_CONFIG_KEYS);
    let exit_codes = "Exit codes: 0 success, 1 runtime failure, 2 config error, 3 divergence.";
    Cli::command()
        .after_help(exit_codes)
        .mut_subcommand("phantom", |c| c.after_help(key_table("Foam spec keys", FOAM_KEYS)))
        .mut_subcommand("reference", |c| c.after_help(run_keys.clone()))
        .mut_subcommand("reconstruct", |c| c.after_help(run_keys.clone()))
        .mut_subcommand("sweep", |c| c.after_help(run_keys.clone()))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
