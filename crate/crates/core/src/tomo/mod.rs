//! Discrete parallel-beam Radon transform.
//!
//! Rays are traced with Joseph-style linear interpolation: one ray per
//! detector bin through the bin centre, stepping along whichever image axis
//! the ray is closer to parallel with. Pixels outside the grid are zero.

mod dense;
mod geometry;
mod norm;
mod partition;
mod projector;

pub use dense::{assemble_dense, assemble_dense_with_cap, DenseMatrix, DenseOperator, DEFAULT_DENSE_CAP};
pub use geometry::{ParallelGeometry, Sinogram};
pub use norm::operator_norm_sq;
pub use partition::{build_staggered_partition, SubsetPartition};
pub use projector::{back_project, forward_project, Projector};

/// A linear map from images to sinograms whose rows are grouped into views
/// (projection angles). Subset restriction selects whole views.
pub trait ProjectionOperator: Sync {
    /// `(width, height)` of the image domain.
    fn image_dims(&self) -> (usize, usize);

    fn n_views(&self) -> usize;

    /// Number of rows per view (detector bins).
    fn view_len(&self) -> usize;

    /// Writes `views.len() * view_len()` entries, view-major in the order given.
    fn forward_into(&self, image: &[f64], views: &[usize], out: &mut [f64]);

    /// Overwrites `out` (image-sized) with the adjoint applied to the given views.
    fn adjoint_into(&self, sino: &[f64], views: &[usize], out: &mut [f64]);

    fn image_len(&self) -> usize {
        let (w, h) = self.image_dims();
        w * h
    }

    fn all_views(&self) -> Vec<usize> {
        (0..self.n_views()).collect()
    }

    fn forward(&self, image: &[f64], views: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; views.len() * self.view_len()];
        self.forward_into(image, views, &mut out);
        out
    }

    fn adjoint(&self, sino: &[f64], views: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.image_len()];
        self.adjoint_into(sino, views, &mut out);
        out
    }
}
