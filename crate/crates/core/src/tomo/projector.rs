use crate::error::{Error, Result};
use crate::image::ImageGrid;

use super::{ParallelGeometry, ProjectionOperator};

/// Sparse rows of one view: row `b` owns `cols[offsets[b]..offsets[b + 1]]`.
#[derive(Clone, Debug)]
struct ViewRows {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

/// Joseph-interpolation projector with precomputed ray weights.
///
/// Forward and adjoint share the same weight table, so the adjoint is exact
/// up to floating-point rounding. Each forward entry is a dot product in a
/// fixed order; the adjoint scatters views in the order requested.
#[derive(Clone, Debug)]
pub struct Projector {
    geometry: ParallelGeometry,
    width: usize,
    height: usize,
    views: Vec<ViewRows>,
}

impl Projector {
    pub fn new(geometry: &ParallelGeometry, width: usize, height: usize) -> Result<Self> {
        geometry.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::shape("image dimensions must be positive"));
        }
        if width * height > u32::MAX as usize {
            return Err(Error::shape("image too large for the projector index type"));
        }
        let views = geometry
            .angles
            .iter()
            .map(|&theta| trace_view(geometry, theta, width, height))
            .collect();
        Ok(Self { geometry: geometry.clone(), width, height, views })
    }

    pub fn geometry(&self) -> &ParallelGeometry {
        &self.geometry
    }

    /// Number of stored nonzero weights.
    pub fn nnz(&self) -> usize {
        self.views.iter().map(|v| v.weights.len()).sum()
    }

    /// Visits the nonzero weights of ray `(view, bin)` as `(pixel, weight)`.
    pub fn for_each_weight(&self, view: usize, bin: usize, mut f: impl FnMut(usize, f64)) {
        let rows = &self.views[view];
        for k in rows.offsets[bin]..rows.offsets[bin + 1] {
            f(rows.cols[k] as usize, rows.weights[k]);
        }
    }

    fn check_views(&self, views: &[usize]) -> Result<()> {
        match views.iter().find(|&&v| v >= self.views.len()) {
            Some(v) => Err(Error::shape(format!("angle index {v} out of range for {} angles", self.views.len()))),
            None => Ok(()),
        }
    }

    pub fn project(&self, image: &ImageGrid, subset: Option<&[usize]>) -> Result<Vec<f64>> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::shape(format!(
                "image is {}x{}, projector expects {}x{}",
                image.width(),
                image.height(),
                self.width,
                self.height
            )));
        }
        let all;
        let views = match subset {
            Some(v) => v,
            None => {
                all = self.all_views();
                &all
            }
        };
        self.check_views(views)?;
        Ok(self.forward(image.values(), views))
    }

    pub fn back(&self, sino: &[f64], subset: Option<&[usize]>) -> Result<ImageGrid> {
        let all;
        let views = match subset {
            Some(v) => v,
            None => {
                all = self.all_views();
                &all
            }
        };
        self.check_views(views)?;
        let expected = views.len() * self.geometry.n_bins;
        if sino.len() != expected {
            return Err(Error::shape(format!("sinogram slice has {} values, expected {expected}", sino.len())));
        }
        Ok(ImageGrid::from_vec_unchecked(self.width, self.height, self.adjoint(sino, views)))
    }
}

impl ProjectionOperator for Projector {
    fn image_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn n_views(&self) -> usize {
        self.views.len()
    }

    fn view_len(&self) -> usize {
        self.geometry.n_bins
    }

    fn forward_into(&self, image: &[f64], views: &[usize], out: &mut [f64]) {
        let n_bins = self.geometry.n_bins;
        assert_eq!(image.len(), self.width * self.height);
        assert_eq!(out.len(), views.len() * n_bins);
        for (chunk, &v) in out.chunks_exact_mut(n_bins).zip(views) {
            let rows = &self.views[v];
            for (bin, slot) in chunk.iter_mut().enumerate() {
                let range = rows.offsets[bin]..rows.offsets[bin + 1];
                let mut acc = 0.0;
                for (&c, &w) in rows.cols[range.clone()].iter().zip(&rows.weights[range]) {
                    acc += w * image[c as usize];
                }
                *slot = acc;
            }
        }
    }

    fn adjoint_into(&self, sino: &[f64], views: &[usize], out: &mut [f64]) {
        let n_bins = self.geometry.n_bins;
        assert_eq!(out.len(), self.width * self.height);
        assert_eq!(sino.len(), views.len() * n_bins);
        out.fill(0.0);
        for (chunk, &v) in sino.chunks_exact(n_bins).zip(views) {
            let rows = &self.views[v];
            for (bin, &y) in chunk.iter().enumerate() {
                if y == 0.0 {
                    continue;
                }
                let range = rows.offsets[bin]..rows.offsets[bin + 1];
                for (&c, &w) in rows.cols[range.clone()].iter().zip(&rows.weights[range]) {
                    out[c as usize] += w * y;
                }
            }
        }
    }
}

fn trace_view(geometry: &ParallelGeometry, theta: f64, width: usize, height: usize) -> ViewRows {
    let (sin, cos) = theta.sin_cos();
    let ps = geometry.pixel_size;
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;

    let mut offsets = Vec::with_capacity(geometry.n_bins + 1);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);

    // Ray through detector offset s: (s cos − t sin, s sin + t cos).
    let push = |cols: &mut Vec<u32>, weights: &mut Vec<f64>, idx: usize, w: f64| {
        if w > 0.0 {
            cols.push(idx as u32);
            weights.push(w);
        }
    };
    for bin in 0..geometry.n_bins {
        let s = geometry.bin_offset(bin);
        if cos.abs() >= sin.abs() {
            // Mostly vertical: one sample per image row.
            let scale = ps / cos.abs();
            for row in 0..height {
                let y = (cy - row as f64) * ps;
                let t = (y - s * sin) / cos;
                let x = s * cos - t * sin;
                let u = x / ps + cx;
                let i0 = u.floor();
                let frac = u - i0;
                let i0 = i0 as isize;
                if i0 >= 0 && (i0 as usize) < width {
                    push(&mut cols, &mut weights, row * width + i0 as usize, (1.0 - frac) * scale);
                }
                if i0 + 1 >= 0 && ((i0 + 1) as usize) < width {
                    push(&mut cols, &mut weights, row * width + (i0 + 1) as usize, frac * scale);
                }
            }
        } else {
            // Mostly horizontal: one sample per image column.
            let scale = ps / sin.abs();
            for col in 0..width {
                let x = (col as f64 - cx) * ps;
                let t = (s * cos - x) / sin;
                let y = s * sin + t * cos;
                let v = cy - y / ps;
                let j0 = v.floor();
                let frac = v - j0;
                let j0 = j0 as isize;
                if j0 >= 0 && (j0 as usize) < height {
                    push(&mut cols, &mut weights, j0 as usize * width + col, (1.0 - frac) * scale);
                }
                if j0 + 1 >= 0 && ((j0 + 1) as usize) < height {
                    push(&mut cols, &mut weights, (j0 + 1) as usize * width + col, frac * scale);
                }
            }
        }
        offsets.push(weights.len());
    }
    ViewRows { offsets, cols, weights }
}

/// Forward projection of `image`, restricted to the listed angle indices
/// (all angles when `subset` is `None`). Output is angle-major in subset order.
pub fn forward_project(image: &ImageGrid, geometry: &ParallelGeometry, subset: Option<&[usize]>) -> Result<Vec<f64>> {
    Projector::new(geometry, image.width(), image.height())?.project(image, subset)
}

/// Adjoint of [`forward_project`] with the same interpolation weights.
pub fn back_project(
    sino: &[f64],
    geometry: &ParallelGeometry,
    width: usize,
    height: usize,
    subset: Option<&[usize]>,
) -> Result<ImageGrid> {
    Projector::new(geometry, width, height)?.back(sino, subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_image_projects_to_zero() {
        let g = ParallelGeometry::uniform(7, 11).unwrap();
        let sino = forward_project(&ImageGrid::zeros(8, 8), &g, None).unwrap();
        assert!(sino.iter().all(|&v| v == 0.0));
        let back = back_project(&vec![0.0; 77], &g, 8, 8, None).unwrap();
        assert!(back.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centre_pixel_hits_only_the_central_bin() {
        let g = ParallelGeometry::uniform(12, 9).unwrap();
        let mut img = ImageGrid::zeros(5, 5);
        img.values_mut()[12] = 1.0;
        let sino = forward_project(&img, &g, None).unwrap();
        for (a, row) in sino.chunks(9).enumerate() {
            let theta = g.angles[a];
            let expected = 1.0 / theta.cos().abs().max(theta.sin().abs());
            for (bin, &v) in row.iter().enumerate() {
                if bin == 4 {
                    assert!((v - expected).abs() < 1e-12, "angle {a}: {v} vs {expected}");
                } else {
                    assert!(v.abs() < 1e-12, "angle {a} bin {bin}: {v}");
                }
            }
        }
    }

    #[test]
    fn single_pixel_single_ray_is_pixel_size() {
        let g = ParallelGeometry::new(vec![0.0], 1, 1.0, 0.5).unwrap();
        let p = Projector::new(&g, 1, 1).unwrap();
        let out = p.project(&ImageGrid::filled(1, 1, 2.0), None).unwrap();
        assert_eq!(out, vec![1.0]);
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = ParallelGeometry::uniform(6, 13).unwrap();
        let p = Projector::new(&g, 8, 8).unwrap();
        for _ in 0..20 {
            let x = random(64, &mut rng);
            let y = random(78, &mut rng);
            let lhs = dot(&p.forward(&x, &p.all_views()), &y);
            let rhs = dot(&x, &p.adjoint(&y, &p.all_views()));
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn subset_rows_are_bitwise_restrictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = ParallelGeometry::uniform(9, 15).unwrap();
        let p = Projector::new(&g, 10, 10).unwrap();
        let x = random(100, &mut rng);
        let full = p.forward(&x, &p.all_views());
        let part = p.forward(&x, &[7, 2]);
        assert_eq!(&part[..15], &full[7 * 15..8 * 15]);
        assert_eq!(&part[15..], &full[2 * 15..3 * 15]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let g = ParallelGeometry::uniform(3, 5).unwrap();
        let p = Projector::new(&g, 4, 4).unwrap();
        assert!(matches!(p.project(&ImageGrid::zeros(3, 4), None), Err(Error::Shape(_))));
        assert!(matches!(p.back(&[0.0; 4], None), Err(Error::Shape(_))));
        assert!(matches!(p.project(&ImageGrid::zeros(4, 4), Some(&[5])), Err(Error::Shape(_))));
    }
}
