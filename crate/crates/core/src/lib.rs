//! Stochastic proximal-gradient reconstruction for 2D parallel-beam tomography.
//!
//! The crate is organised bottom-up:
//!
//! - [`tomo`]: the discrete Radon transform, its adjoint, staggered angle
//!   subsets and operator-norm estimation.
//! - [`regularizers`]: isotropic TV and its FGP proximal map, the
//!   nonnegativity projection and the plug-and-play denoiser slot.
//! - [`estimators`]: full, SGD, SAGA, SVRG and loopless SVRG gradient
//!   estimators for `f(x) = ½‖Ax − b‖²` split over angle subsets.
//! - [`solvers`]: the skip-capable proximal gradient loop, FISTA and a
//!   diagonally preconditioned PDHG reference solver.
//! - [`phantoms`] and [`io`]: test objects, simulated data, FBP and files.
//! - [`metrics`] and [`sweep`]: image-quality metrics and the benchmark grid.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod regularizers;
pub mod selfcheck;
pub mod solvers;
pub mod sweep;
pub mod timing;
pub mod tomo;

pub use error::{Error, Result};
pub use estimators::EstimatorKind;
pub use image::ImageGrid;
pub use regularizers::{DenoiserKind, DenoiserSpec, Regularizer, TvDualState, TvProxConfig};
pub use solvers::{Algorithm, Problem, RunRecord, SolverConfig};
pub use tomo::{ParallelGeometry, ProjectionOperator, Projector, Sinogram, SubsetPartition};
