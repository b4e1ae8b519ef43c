//! Primal–dual hybrid gradient with diagonal preconditioning for
//! `min ½‖Ax − b‖² + α‖∇x‖_{2,1} (+ 𝕀_{x≥0})`, using the stacked operator
//! `K = [A; ∇]`. Step sizes are `σ_i = 1/Σ_j|K_ij|` (dual) and
//! `τ_j = 1/Σ_i|K_ij|` (primal).

use crate::error::{Error, Result};
use crate::image::{all_finite, ImageGrid};
use crate::regularizers::{gradient, gradient_adjoint, Regularizer};
use crate::tomo::ProjectionOperator;

use super::Problem;

pub struct Pdhg<'p, 'a, O: ProjectionOperator + ?Sized> {
    problem: &'p Problem<'a, O>,
    views: Vec<usize>,
    alpha: f64,
    nonneg: bool,
    tau: Vec<f64>,
    sigma_data: Vec<f64>,
    sigma_grad_x: Vec<f64>,
    sigma_grad_y: Vec<f64>,
    x: Vec<f64>,
    y_data: Vec<f64>,
    y_gx: Vec<f64>,
    y_gy: Vec<f64>,
    iterations: u64,
}

impl<'p, 'a, O: ProjectionOperator + ?Sized> Pdhg<'p, 'a, O> {
    pub fn new(problem: &'p Problem<'a, O>, x0: &ImageGrid) -> Result<Self> {
        problem.check_init(x0)?;
        let (alpha, nonneg) = match &problem.regularizer {
            Regularizer::None => (0.0, false),
            Regularizer::Nonneg => (0.0, true),
            Regularizer::Tv(cfg) => (cfg.alpha, cfg.nonneg),
            Regularizer::Denoiser(_) => {
                return Err(Error::Unsupported("PDHG needs an explicit regulariser, not a denoiser".into()))
            }
        };
        let op = problem.operator;
        let (w, h) = op.image_dims();
        let n = w * h;
        let views = op.all_views();

        let recip = |v: f64| if v > 0.0 { 1.0 / v } else { 0.0 };
        let (row_abs, col_abs) = absolute_sums(op, &views);
        let sigma_data: Vec<f64> = row_abs.iter().map(|&v| recip(v)).collect();

        let mut col = col_abs;
        let (mut sigma_grad_x, mut sigma_grad_y) = (vec![0.0; n], vec![0.0; n]);
        if alpha > 0.0 {
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    let degree = (c > 0) as u32 + (c + 1 < w) as u32 + (r > 0) as u32 + (r + 1 < h) as u32;
                    col[i] += degree as f64;
                    sigma_grad_x[i] = if c + 1 < w { 0.5 } else { 0.0 };
                    sigma_grad_y[i] = if r + 1 < h { 0.5 } else { 0.0 };
                }
            }
        }
        let tau = col.iter().map(|&v| recip(v)).collect();

        Ok(Self {
            problem,
            views,
            alpha,
            nonneg,
            tau,
            sigma_data,
            sigma_grad_x,
            sigma_grad_y,
            x: x0.values().to_vec(),
            y_data: vec![0.0; problem.data.len()],
            y_gx: vec![0.0; n],
            y_gy: vec![0.0; n],
            iterations: 0,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn image(&self) -> ImageGrid {
        let (w, h) = self.problem.dims();
        ImageGrid::from_vec_unchecked(w, h, self.x.clone())
    }

    pub fn iterate(&mut self, n: u64) -> Result<()> {
        let op = self.problem.operator;
        let (w, h) = op.image_dims();
        let len = w * h;
        let mut kty = vec![0.0; len];
        let mut div = vec![0.0; len];
        let mut x_bar = vec![0.0; len];
        let mut ax = vec![0.0; self.y_data.len()];
        let (mut gx, mut gy) = (vec![0.0; len], vec![0.0; len]);
        let b = self.problem.data;

        for _ in 0..n {
            op.adjoint_into(&self.y_data, &self.views, &mut kty);
            if self.alpha > 0.0 {
                gradient_adjoint(&self.y_gx, &self.y_gy, w, h, &mut div);
                kty.iter_mut().zip(&div).for_each(|(k, d)| *k += d);
            }
            for i in 0..len {
                let mut xn = self.x[i] - self.tau[i] * kty[i];
                if self.nonneg {
                    xn = xn.max(0.0);
                }
                x_bar[i] = 2.0 * xn - self.x[i];
                self.x[i] = xn;
            }

            op.forward_into(&x_bar, &self.views, &mut ax);
            for ((y, &s), (&a, &bi)) in self.y_data.iter_mut().zip(&self.sigma_data).zip(ax.iter().zip(b)) {
                *y = (*y + s * (a - bi)) / (1.0 + s);
            }
            if self.alpha > 0.0 {
                gradient(&x_bar, w, h, &mut gx, &mut gy);
                for i in 0..len {
                    let p = self.y_gx[i] + self.sigma_grad_x[i] * gx[i];
                    let q = self.y_gy[i] + self.sigma_grad_y[i] * gy[i];
                    let norm = p.hypot(q);
                    let scale = if norm > self.alpha { self.alpha / norm } else { 1.0 };
                    self.y_gx[i] = p * scale;
                    self.y_gy[i] = q * scale;
                }
            }
            self.iterations += 1;
            if self.iterations.is_multiple_of(64) && !all_finite(&self.x) {
                return Err(Error::Divergence { iteration: self.iterations, gamma: f64::NAN, partial: None });
            }
        }
        if !all_finite(&self.x) {
            return Err(Error::Divergence { iteration: self.iterations, gamma: f64::NAN, partial: None });
        }
        Ok(())
    }
}

/// Row and column sums of `|A|`, probed with ones and with the sign pattern
/// of a nonnegative operator. Exact when `A ≥ 0` entrywise.
fn absolute_sums<O: ProjectionOperator + ?Sized>(op: &O, views: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let ones_img = vec![1.0; op.image_len()];
    let ones_sino = vec![1.0; views.len() * op.view_len()];
    let rows = op.forward(&ones_img, views);
    let cols = op.adjoint(&ones_sino, views);
    (rows.into_iter().map(f64::abs).collect(), cols.into_iter().map(f64::abs).collect())
}

/// Runs `n_iterations` of preconditioned PDHG from the zero image.
pub fn run_pdhg_reference<O: ProjectionOperator + ?Sized>(problem: &Problem<'_, O>, n_iterations: u64) -> Result<ImageGrid> {
    if n_iterations == 0 {
        return Err(Error::param("PDHG needs at least one iteration"));
    }
    let (w, h) = problem.dims();
    let mut solver = Pdhg::new(problem, &ImageGrid::zeros(w, h))?;
    solver.iterate(n_iterations)?;
    Ok(solver.image())
}
