//! Isotropic total variation and its proximal map via fast gradient
//! projection (FGP) on the dual, with optional nonnegativity.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::ImageGrid;

use super::check_positive;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvProxConfig {
    pub alpha: f64,
    pub inner_iterations: usize,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    #[serde(default = "default_true")]
    pub nonneg: bool,
}

fn default_true() -> bool {
    true
}

impl TvProxConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("alpha", self.alpha)?;
        if self.inner_iterations == 0 {
            return Err(crate::Error::param("inner_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Dual variables of the FGP inner solver, kept between outer iterations
/// for warm starting.
#[derive(Clone, Debug, PartialEq)]
pub struct TvDualState {
    pub width: usize,
    pub height: usize,
    /// Horizontal dual field; `hypot(p, q) ≤ 1` pointwise.
    pub p: Vec<f64>,
    /// Vertical dual field.
    pub q: Vec<f64>,
    /// Extrapolated (momentum) copies of `p` and `q`.
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub t: f64,
    /// The combined weight `τ·α` this state was computed for.
    pub weight: f64,
}

impl TvDualState {
    pub fn zeros(width: usize, height: usize, weight: f64) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            p: vec![0.0; n],
            q: vec![0.0; n],
            r: vec![0.0; n],
            s: vec![0.0; n],
            t: 1.0,
            weight,
        }
    }

    /// Largest pointwise dual norm.
    pub fn max_dual_norm(&self) -> f64 {
        self.p.iter().zip(&self.q).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
    }

    fn reusable_for(&self, width: usize, height: usize, weight: f64) -> bool {
        self.width == width && self.height == height && (self.weight - weight).abs() <= 1e-12 * weight.abs()
    }
}

/// Forward differences with replicate boundary: the last column of `gx` and
/// the last row of `gy` are zero.
pub fn gradient(x: &[f64], width: usize, height: usize, gx: &mut [f64], gy: &mut [f64]) {
    for r in 0..height {
        let row = r * width;
        for c in 0..width {
            let i = row + c;
            gx[i] = if c + 1 < width { x[i + 1] - x[i] } else { 0.0 };
            gy[i] = if r + 1 < height { x[i + width] - x[i] } else { 0.0 };
        }
    }
}

/// Adjoint of [`gradient`] (negative discrete divergence).
pub fn gradient_adjoint(p: &[f64], q: &[f64], width: usize, height: usize, out: &mut [f64]) {
    for r in 0..height {
        let row = r * width;
        for c in 0..width {
            let i = row + c;
            let mut v = 0.0;
            if c > 0 {
                v += p[i - 1];
            }
            if c + 1 < width {
                v -= p[i];
            }
            if r > 0 {
                v += q[i - width];
            }
            if r + 1 < height {
                v -= q[i];
            }
            out[i] = v;
        }
    }
}

/// `Σ √((∂ₕx)² + (∂ᵥx)²)` with forward differences and replicate boundary.
pub fn tv_value(image: &ImageGrid) -> f64 {
    let (w, h) = (image.width(), image.height());
    let x = image.values();
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let dx = if c + 1 < w { x[i + 1] - x[i] } else { 0.0 };
            let dy = if r + 1 < h { x[i + w] - x[i] } else { 0.0 };
            total += (dx * dx + dy * dy).sqrt();
        }
    }
    total
}

/// `prox_{τ·α·TV (+ 𝕀_{x≥0})}(image)` by exactly `inner_iterations` FGP steps.
///
/// The dual starts from `warm` when it matches the image shape and the
/// combined weight `τ·α`; the momentum parameter always restarts at 1, and
/// again whenever the extrapolated step stops making progress.
pub fn tv_prox(
    image: &ImageGrid,
    tau: f64,
    config: &TvProxConfig,
    warm: Option<&TvDualState>,
) -> Result<(ImageGrid, TvDualState)> {
    check_positive("tau", tau)?;
    config.validate()?;
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let lambda = tau * config.alpha;
    let step = 1.0 / (8.0 * lambda);
    let b = image.values();

    let mut state = match warm {
        Some(s) if s.reusable_for(w, h, lambda) => {
            let mut s = s.clone();
            s.r.clone_from(&s.p);
            s.s.clone_from(&s.q);
            s.t = 1.0;
            s.weight = lambda;
            s
        }
        _ => TvDualState::zeros(w, h, lambda),
    };

    let mut z = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut next_p = vec![0.0; n];
    let mut next_q = vec![0.0; n];
    let project = |v: f64| if config.nonneg { v.max(0.0) } else { v };

    for _ in 0..config.inner_iterations {
        gradient_adjoint(&state.r, &state.s, w, h, &mut z);
        for (zi, &bi) in z.iter_mut().zip(b) {
            *zi = project(bi - lambda * *zi);
        }
        gradient(&z, w, h, &mut gx, &mut gy);

        let mut restart = 0.0;
        for i in 0..n {
            let mut pn = state.r[i] + step * gx[i];
            let mut qn = state.s[i] + step * gy[i];
            let norm = pn.hypot(qn);
            if norm > 1.0 {
                pn /= norm;
                qn /= norm;
            }
            restart += (state.r[i] - pn) * (pn - state.p[i]) + (state.s[i] - qn) * (qn - state.q[i]);
            next_p[i] = pn;
            next_q[i] = qn;
        }
        // Adaptive restart: drop the momentum when it points uphill.
        let t_next = if restart > 0.0 { 1.0 } else { (1.0 + (1.0 + 4.0 * state.t * state.t).sqrt()) / 2.0 };
        let momentum = if restart > 0.0 { 0.0 } else { (state.t - 1.0) / t_next };
        for i in 0..n {
            let (pn, qn) = (next_p[i], next_q[i]);
            state.r[i] = pn + momentum * (pn - state.p[i]);
            state.s[i] = qn + momentum * (qn - state.q[i]);
            state.p[i] = pn;
            state.q[i] = qn;
        }
        state.t = t_next;
    }

    gradient_adjoint(&state.p, &state.q, w, h, &mut z);
    for (zi, &bi) in z.iter_mut().zip(b) {
        *zi = project(bi - lambda * *zi);
    }
    Ok((ImageGrid::from_vec_unchecked(w, h, z), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(alpha: f64, iters: usize, nonneg: bool) -> TvProxConfig {
        TvProxConfig { alpha, inner_iterations: iters, warm_start: true, nonneg }
    }

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
        ImageGrid::new(w, h, (0..w * h).map(|_| rng.random_range(-0.5..1.5)).collect()).unwrap()
    }

    fn prox_objective(z: &ImageGrid, b: &ImageGrid, weight: f64) -> f64 {
        let d: f64 = z.values().iter().zip(b.values()).map(|(a, c)| (a - c) * (a - c)).sum();
        0.5 * d + weight * tv_value(z)
    }

    #[test]
    fn tv_of_constant_and_step() {
        assert_eq!(tv_value(&ImageGrid::filled(4, 3, 2.5)), 0.0);
        assert_eq!(tv_value(&ImageGrid::new(2, 1, vec![0.0, 1.0]).unwrap()), 1.0);
    }

    #[test]
    fn tv_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(5, 5, &mut rng);
        let mut naive = 0.0;
        for r in 0..5 {
            for c in 0..5 {
                let here = img.get(r, c);
                let right = if c == 4 { here } else { img.get(r, c + 1) };
                let down = if r == 4 { here } else { img.get(r + 1, c) };
                naive += ((right - here).powi(2) + (down - here).powi(2)).sqrt();
            }
        }
        assert!((tv_value(&img) - naive).abs() < 1e-14);
    }

    #[test]
    fn gradient_adjoint_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (w, h) = (7, 4);
        let x: Vec<f64> = (0..28).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p: Vec<f64> = (0..28).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q: Vec<f64> = (0..28).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Entries the gradient never writes.
        for r in 0..h {
            p[r * w + w - 1] = 0.0;
        }
        for c in 0..w {
            q[(h - 1) * w + c] = 0.0;
        }
        let (mut gx, mut gy, mut dt) = (vec![0.0; 28], vec![0.0; 28], vec![0.0; 28]);
        gradient(&x, w, h, &mut gx, &mut gy);
        gradient_adjoint(&p, &q, w, h, &mut dt);
        let lhs = dot(&gx, &p) + dot(&gy, &q);
        assert!((lhs - dot(&x, &dt)).abs() < 1e-13);
    }

    #[test]
    fn vanishing_alpha_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_image(6, 5, &mut rng);
        let (out, _) = tv_prox(&img, 1.0, &cfg(1e-300, 20, true), None).unwrap();
        for (o, v) in out.values().iter().zip(img.values()) {
            assert_eq!(*o, v.max(0.0));
        }
        let (out, _) = tv_prox(&img, 1.0, &cfg(1e-300, 20, false), None).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_is_fixed() {
        for alpha in [1e-3, 0.5, 10.0] {
            let img = ImageGrid::filled(5, 4, 0.7);
            let (out, _) = tv_prox(&img, 1.0, &cfg(alpha, 50, true), None).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn nonpositive_tau_rejected() {
        let img = ImageGrid::filled(2, 2, 1.0);
        assert!(tv_prox(&img, 0.0, &cfg(1.0, 5, true), None).is_err());
        assert!(tv_prox(&img, -1.0, &cfg(1.0, 5, true), None).is_err());
    }

    #[test]
    fn scaling_law_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = random_image(8, 8, &mut rng);
        let (a, _) = tv_prox(&img, 0.37, &cfg(0.9, 30, true), None).unwrap();
        let (b, _) = tv_prox(&img, 1.0, &cfg(0.37 * 0.9, 30, true), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cold_calls_are_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_image(8, 6, &mut rng);
        let mut c = cfg(0.2, 15, true);
        c.warm_start = false;
        let (a, _) = tv_prox(&img, 1.0, &c, None).unwrap();
        let (b, _) = tv_prox(&img, 1.0, &c, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dual_stays_feasible_every_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = random_image(9, 7, &mut rng);
        let mut state = None;
        for k in 1..40 {
            let (_, s) = tv_prox(&img, 1.0, &cfg(0.3, 1, k % 2 == 0), state.as_ref()).unwrap();
            assert!(s.max_dual_norm() <= 1.0 + 1e-15);
            state = Some(s);
        }
    }

    #[test]
    fn warm_state_discarded_when_weight_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(6, 6, &mut rng);
        let c = cfg(0.3, 10, true);
        let (_, warm) = tv_prox(&img, 1.0, &c, None).unwrap();
        let (cold, _) = tv_prox(&img, 2.0, &c, None).unwrap();
        let (rewarmed, _) = tv_prox(&img, 2.0, &c, Some(&warm)).unwrap();
        assert_eq!(cold, rewarmed);
        let (same_weight, _) = tv_prox(&img, 1.0, &c, Some(&warm)).unwrap();
        let (fresh, _) = tv_prox(&img, 1.0, &c, None).unwrap();
        assert_ne!(same_weight, fresh);
    }

    #[test]
    fn output_objective_not_worse_than_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let w = rng.random_range(2..9);
            let h = rng.random_range(2..9);
            // Nonnegative inputs keep the indicator finite at the starting point.
            let b = random_image(w, h, &mut rng).map(f64::abs);
            let weight = rng.random_range(0.01..2.0);
            let iters = rng.random_range(1..60);
            let (z, _) = tv_prox(&b, 1.0, &cfg(weight, iters, true), None).unwrap();
            assert!(z.values().iter().all(|&v| v >= 0.0));
            assert!(prox_objective(&z, &b, weight) <= prox_objective(&b, &b, weight) + 1e-12);
        }
    }

    #[test]
    fn nonexpansive_at_high_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = cfg(0.25, 2000, true);
        for _ in 0..20 {
            let u = random_image(5, 5, &mut rng);
            let v = random_image(5, 5, &mut rng);
            let (pu, _) = tv_prox(&u, 1.0, &c, None).unwrap();
            let (pv, _) = tv_prox(&v, 1.0, &c, None).unwrap();
            let d_out: f64 = pu.values().iter().zip(pv.values()).map(|(a, b)| (a - b).powi(2)).sum();
            let d_in: f64 = u.values().iter().zip(v.values()).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(d_out.sqrt() <= d_in.sqrt() + 1e-6);
        }
    }
}
