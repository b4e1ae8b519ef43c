//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use proxskip::metrics::{SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
use proxskip::phantoms::{foam_phantom, simulate_sinogram, FoamSpec, NoiseSpec};
use proxskip::tomo::operator_norm_sq;
use proxskip::{ImageGrid, ParallelGeometry, Projector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageGrid {
    ImageGrid::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------------------
// Projector

/// Linear-interpolation ray matrix built straight from the line equation
/// `x cos θ + y sin θ = s`, one sample per pixel row (steep rays) or column.
pub fn naive_ray_matrix(g: &ParallelGeometry, w: usize, h: usize) -> Vec<Vec<f64>> {
    let ps = g.pixel_size;
    let mut rows = Vec::new();
    for &theta in &g.angles {
        let (sn, cs) = (theta.sin(), theta.cos());
        for bin in 0..g.n_bins {
            let s = (bin as f64 - (g.n_bins as f64 - 1.0) / 2.0) * g.bin_spacing;
            let mut row = vec![0.0; w * h];
            if cs.abs() >= sn.abs() {
                for r in 0..h {
                    let y = ((h as f64 - 1.0) / 2.0 - r as f64) * ps;
                    let x = (s - y * sn) / cs;
                    let u = x / ps + (w as f64 - 1.0) / 2.0;
                    let c0 = u.floor();
                    let f = u - c0;
                    for (c, wt) in [(c0 as i64, 1.0 - f), (c0 as i64 + 1, f)] {
                        if c >= 0 && (c as usize) < w {
                            row[r * w + c as usize] += wt * ps / cs.abs();
                        }
                    }
                }
            } else {
                for c in 0..w {
                    let x = (c as f64 - (w as f64 - 1.0) / 2.0) * ps;
                    let y = (s - x * cs) / sn;
                    let v = (h as f64 - 1.0) / 2.0 - y / ps;
                    let r0 = v.floor();
                    let f = v - r0;
                    for (r, wt) in [(r0 as i64, 1.0 - f), (r0 as i64 + 1, f)] {
                        if r >= 0 && (r as usize) < h {
                            row[r as usize * w + c] += wt * ps / sn.abs();
                        }
                    }
                }
            }
            rows.push(row);
        }
    }
    rows
}

pub fn dense_matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

// ---------------------------------------------------------------------------
// TV prox oracle

/// Dense forward-difference matrix with a replicate boundary: rows are
/// `(∂x, ∂y)` per pixel, stacked as `[Dx; Dy]`.
pub fn dense_gradient(w: usize, h: usize) -> Vec<Vec<f64>> {
    let n = w * h;
    let mut d = vec![vec![0.0; n]; 2 * n];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                d[i][i] = -1.0;
                d[i][i + 1] = 1.0;
            }
            if r + 1 < h {
                d[n + i][i] = -1.0;
                d[n + i][i + w] = 1.0;
            }
        }
    }
    d
}

/// Solves `min_z ½‖z − b‖² + λ Σ_i ‖(Dz)_i‖₂ (+ z ≥ 0)` through its dual QP
/// `min ½‖b − λDᵀw + u‖²` over `‖w_i‖ ≤ 1` (and `u ≥ 0`) by plain projected
/// gradient, returning the primal point `b − λDᵀw + u`.
pub fn tv_prox_qp(b: &[f64], w: usize, h: usize, lambda: f64, nonneg: bool, iterations: usize) -> Vec<f64> {
    let n = w * h;
    let d = dense_gradient(w, h);
    let mut dual = vec![0.0; 2 * n];
    let mut u = vec![0.0; n];
    // Lipschitz constant of the joint gradient: ‖[λDᵀ, I]‖² ≤ 8λ² + 1.
    let step = 1.0 / (8.0 * lambda * lambda + if nonneg { 1.0 } else { 0.0 });
    let primal = |dual: &[f64], u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let dt: f64 = (0..2 * n).map(|i| d[i][j] * dual[i]).sum();
                b[j] - lambda * dt + u[j]
            })
            .collect()
    };
    for _ in 0..iterations {
        let z = primal(&dual, &u);
        // ∂/∂w = −λ D z, ∂/∂u = z.
        for i in 0..2 * n {
            let dz: f64 = (0..n).map(|j| d[i][j] * z[j]).sum();
            dual[i] += step * lambda * dz;
        }
        for i in 0..n {
            let norm = dual[i].hypot(dual[n + i]);
            if norm > 1.0 {
                dual[i] /= norm;
                dual[n + i] /= norm;
            }
        }
        if nonneg {
            for j in 0..n {
                u[j] = (u[j] - step * z[j]).max(0.0);
            }
        }
    }
    primal(&dual, &u)
}

// ---------------------------------------------------------------------------
// Metrics

pub fn naive_rel_err(x: &[f64], r: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        num += (x[i] - r[i]) * (x[i] - r[i]);
        den += r[i] * r[i];
    }
    num / den
}

pub fn naive_psnr(x: &[f64], r: &[f64], range: f64) -> f64 {
    let mut mse = 0.0;
    for i in 0..x.len() {
        mse += (x[i] - r[i]) * (x[i] - r[i]);
    }
    mse /= x.len() as f64;
    if mse == 0.0 {
        300.0
    } else {
        10.0 * (range * range / mse).log10()
    }
}

/// Mean SSIM over all fully contained 11×11 windows, each window weighted by
/// the 2D Gaussian evaluated directly.
pub fn naive_ssim(x: &ImageGrid, r: &ImageGrid) -> f64 {
    let (w, h) = (x.width(), x.height());
    let lo = r.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = r.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let k = SSIM_WINDOW;
    let half = (k / 2) as f64;
    let mut weights = vec![0.0; k * k];
    let mut total = 0.0;
    for a in 0..k {
        for bb in 0..k {
            let d2 = (a as f64 - half).powi(2) + (bb as f64 - half).powi(2);
            weights[a * k + bb] = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            total += weights[a * k + bb];
        }
    }
    weights.iter_mut().for_each(|v| *v /= total);
    let mut acc = 0.0;
    let mut count = 0;
    for r0 in 0..=h - k {
        for c0 in 0..=w - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..k {
                for bb in 0..k {
                    let wt = weights[a * k + bb];
                    mx += wt * x.get(r0 + a, c0 + bb);
                    my += wt * r.get(r0 + a, c0 + bb);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for a in 0..k {
                for bb in 0..k {
                    let wt = weights[a * k + bb];
                    let dx = x.get(r0 + a, c0 + bb) - mx;
                    let dy = r.get(r0 + a, c0 + bb) - my;
                    vx += wt * dx * dx;
                    vy += wt * dy * dy;
                    cov += wt * dx * dy;
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

// ---------------------------------------------------------------------------
// Desk-scale problem

pub const DESK_SIZE: usize = 64;
pub const DESK_ANGLES: usize = 60;
pub const DESK_BINS: usize = 95;
pub const DESK_NOISE: f64 = 0.01;

pub struct Desk {
    pub truth: ImageGrid,
    pub geometry: ParallelGeometry,
    pub op: Projector,
    pub data: Vec<f64>,
    /// Upper estimate of ‖A‖².
    pub lipschitz: f64,
}

pub fn desk() -> Desk {
    let truth = foam_phantom(&FoamSpec::new(DESK_SIZE, 1)).unwrap().image;
    let geometry = ParallelGeometry::uniform(DESK_ANGLES, DESK_BINS).unwrap();
    let op = Projector::new(&geometry, DESK_SIZE, DESK_SIZE).unwrap();
    let data = simulate_sinogram(&truth, &geometry, &NoiseSpec::gaussian(DESK_NOISE, 2)).unwrap().into_values();
    let lipschitz = operator_norm_sq(&op, 200, 0).unwrap() * 1.01;
    Desk { truth, geometry, op, data, lipschitz }
}
