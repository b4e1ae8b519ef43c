use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::norm_sq;

use super::ProjectionOperator;

/// Power-method estimate of `σ_max(A)²`, i.e. the Lipschitz constant of
/// `∇½‖Ax − b‖²`. Returns the Rayleigh quotient `‖Ax‖²/‖x‖²` of the last
/// iterate, which never exceeds the true value.
pub fn operator_norm_sq<O: ProjectionOperator + ?Sized>(op: &O, iterations: usize, seed: u64) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::param("power method needs at least one iteration"));
    }
    let n = op.image_len();
    let views = op.all_views();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let mut nrm = norm_sq(&x).sqrt();
        while nrm == 0.0 || !nrm.is_finite() {
            x.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            nrm = norm_sq(&x).sqrt();
        }
        x.iter_mut().for_each(|v| *v /= nrm);
        let ax = op.forward(&x, &views);
        estimate = norm_sq(&ax);
        x = op.adjoint(&ax, &views);
    }
    Ok(estimate)
}
