use crate::error::{Error, Result};
use crate::image::ImageGrid;

use super::{ParallelGeometry, ProjectionOperator, Projector};

/// Refuse to assemble matrices with more entries than this by default.
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }
}

/// Dense matrix of the projector, column `j` = projection of the `j`-th unit image.
pub fn assemble_dense(geometry: &ParallelGeometry, width: usize, height: usize) -> Result<DenseMatrix> {
    assemble_dense_with_cap(geometry, width, height, DEFAULT_DENSE_CAP)
}

pub fn assemble_dense_with_cap(
    geometry: &ParallelGeometry,
    width: usize,
    height: usize,
    cap: usize,
) -> Result<DenseMatrix> {
    let n = width * height;
    let m = geometry.sinogram_len();
    if n.checked_mul(m).is_none_or(|e| e > cap) {
        return Err(Error::param(format!("dense matrix of {m}x{n} exceeds the cap of {cap} entries")));
    }
    let projector = Projector::new(geometry, width, height)?;
    let views = projector.all_views();
    let mut matrix = DenseMatrix::zeros(m, n);
    let mut basis = ImageGrid::zeros(width, height);
    for j in 0..n {
        basis.values_mut()[j] = 1.0;
        let column = projector.forward(basis.values(), &views);
        for (i, v) in column.into_iter().enumerate() {
            matrix.data[i * n + j] = v;
        }
        basis.values_mut()[j] = 0.0;
    }
    Ok(matrix)
}

/// A dense matrix viewed as a projection operator with `n_views` row blocks of
/// `view_len` rows each. Used for toy problems and as a test oracle.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    matrix: DenseMatrix,
    width: usize,
    height: usize,
    view_len: usize,
}

impl DenseOperator {
    pub fn new(matrix: DenseMatrix, width: usize, height: usize, view_len: usize) -> Result<Self> {
        if matrix.cols != width * height {
            return Err(Error::shape("matrix columns must equal width*height"));
        }
        if view_len == 0 || !matrix.rows.is_multiple_of(view_len) {
            return Err(Error::shape("matrix rows must be a multiple of view_len"));
        }
        Ok(Self { matrix, width, height, view_len })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl ProjectionOperator for DenseOperator {
    fn image_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn n_views(&self) -> usize {
        self.matrix.rows / self.view_len
    }

    fn view_len(&self) -> usize {
        self.view_len
    }

    fn forward_into(&self, image: &[f64], views: &[usize], out: &mut [f64]) {
        let n = self.matrix.cols;
        for (chunk, &v) in out.chunks_exact_mut(self.view_len).zip(views) {
            for (k, slot) in chunk.iter_mut().enumerate() {
                let row = &self.matrix.data[(v * self.view_len + k) * n..][..n];
                *slot = row.iter().zip(image).map(|(a, b)| a * b).sum();
            }
        }
    }

    fn adjoint_into(&self, sino: &[f64], views: &[usize], out: &mut [f64]) {
        let n = self.matrix.cols;
        out.fill(0.0);
        for (chunk, &v) in sino.chunks_exact(self.view_len).zip(views) {
            for (k, &y) in chunk.iter().enumerate() {
                let row = &self.matrix.data[(v * self.view_len + k) * n..][..n];
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * y;
                }
            }
        }
    }
}
