//! Fast oracle and property checks, run by `proxskip validate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::estimators::{saga_estimate_update, sgd_estimate, svrg_estimate, GradientEstimator, RefreshRule, SagaState, SvrgState};
use crate::image::{dot, ImageGrid};
use crate::metrics::{psnr, relative_error_sq, ssim};
use crate::regularizers::{tv_prox, Regularizer, TvProxConfig};
use crate::solvers::{run, Algorithm, Monitor, Problem, SolverConfig, StoppingRule};
use crate::tomo::{assemble_dense, operator_norm_sq, ParallelGeometry, ProjectionOperator, Projector};
use crate::EstimatorKind;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, value: f64, limit: f64) -> CheckOutcome {
    CheckOutcome { name, passed: value <= limit, detail: format!("{value:.3e} (limit {limit:.0e})") }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn adjoint_identity(op: &Projector, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let views = op.all_views();
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let x = random_vec(rng, op.image_len());
        let y = random_vec(rng, views.len() * op.view_len());
        let lhs = dot(&op.forward(&x, &views), &y);
        let rhs = dot(&x, &op.adjoint(&y, &views));
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300));
    }
    outcome("adjoint identity <Ax,y> = <x,A^T y>", worst, 1e-10)
}

fn dense_equivalence(op: &Projector, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let (w, h) = op.image_dims();
    let dense = match assemble_dense(op.geometry(), w, h) {
        Ok(d) => d,
        Err(e) => return CheckOutcome { name: "dense matrix equivalence", passed: false, detail: e.to_string() },
    };
    let x = random_vec(rng, w * h);
    let y = op.forward(&x, &op.all_views());
    let z = dense.matvec(&x);
    outcome("dense matrix equivalence", max_abs_diff(&y, &z) / max_abs(&y).max(1e-300), 1e-12)
}

fn unbiasedness(op: &Projector, b: &[f64], rng: &mut ChaCha8Rng) -> CheckOutcome {
    let problem = match Problem::new(op, b, Regularizer::None) {
        Ok(p) => p,
        Err(e) => return CheckOutcome { name: "estimator unbiasedness", passed: false, detail: e.to_string() },
    };
    let mut worst = 0.0_f64;
    for n in [2usize, 5, 10] {
        let ls = problem.least_squares(n).expect("valid partition");
        let x = random_vec(rng, ls.image_len());
        let full = ls.full_gradient(&x);
        let scale = max_abs(&full).max(1e-300);
        let mut saga = SagaState::zeros(n, ls.image_len());
        for i in 0..n {
            let y = random_vec(rng, ls.image_len());
            saga_estimate_update(&ls, &y, i, &mut saga).unwrap();
        }
        let snap = SvrgState::at(&ls, &random_vec(rng, ls.image_len()), RefreshRule::Periodic);
        let mut sums = [vec![0.0; x.len()], vec![0.0; x.len()], vec![0.0; x.len()]];
        for i in 0..n {
            let mut table = saga.clone();
            let estimates = [
                sgd_estimate(&ls, &x, i).unwrap(),
                saga_estimate_update(&ls, &x, i, &mut table).unwrap(),
                svrg_estimate(&ls, &x, i, &snap).unwrap(),
            ];
            for (s, e) in sums.iter_mut().zip(&estimates) {
                s.iter_mut().zip(e).for_each(|(a, v)| *a += v / n as f64);
            }
        }
        for s in &sums {
            worst = worst.max(max_abs_diff(s, &full) / scale);
        }
    }
    outcome("estimator unbiasedness over all subsets", worst, 1e-10)
}

fn single_subset_collapse(op: &Projector, b: &[f64], rng: &mut ChaCha8Rng) -> CheckOutcome {
    let problem = Problem::new(op, b, Regularizer::None).unwrap();
    let ls = problem.least_squares(1).unwrap();
    let x0 = random_vec(rng, ls.image_len());
    let x = random_vec(rng, ls.image_len());
    let full = ls.full_gradient(&x);
    let mut mismatches = 0;
    for kind in [EstimatorKind::Sgd, EstimatorKind::Saga, EstimatorKind::Svrg, EstimatorKind::Lsvrg] {
        let mut est = GradientEstimator::new(kind, &ls, &x0, ChaCha8Rng::seed_from_u64(1), ChaCha8Rng::seed_from_u64(2)).unwrap();
        for _ in 0..3 {
            let g = est.estimate(&ls, &x).unwrap();
            if g.iter().zip(&full).any(|(a, b)| a.to_bits() != b.to_bits()) {
                mismatches += 1;
            }
        }
    }
    CheckOutcome {
        name: "N = 1 collapses every estimator to the full gradient",
        passed: mismatches == 0,
        detail: format!("{mismatches} non-bitwise estimates"),
    }
}

fn ista_reduction(op: &Projector, b: &[f64]) -> CheckOutcome {
    let cfg = TvProxConfig { alpha: 0.05, inner_iterations: 10, warm_start: false, nonneg: true };
    let problem = Problem::new(op, b, Regularizer::Tv(cfg.clone())).unwrap();
    let l = operator_norm_sq(op, 100, 0).unwrap() * 1.01;
    let iterations = 25;
    let mut config = SolverConfig::for_algorithm(Algorithm::ProxSkip, l, 1, 1.0, 3);
    config.stopping = StoppingRule { tolerance: 0.0, max_data_passes: f64::INFINITY, max_iterations: Some(iterations), time_budget: None };
    let (w, h) = op.image_dims();
    let out = run(&config, &problem, &ImageGrid::zeros(w, h), &Monitor::default()).unwrap();

    let ls = problem.least_squares(1).unwrap();
    let mut x = ImageGrid::zeros(w, h);
    for _ in 0..iterations {
        let g = ls.full_gradient(x.values());
        let arg: Vec<f64> = x.values().iter().zip(&g).map(|(xi, gi)| xi - config.gamma * gi).collect();
        x = tv_prox(&ImageGrid::new(w, h, arg).unwrap(), config.gamma, &cfg, None).unwrap().0;
    }
    let same = out.x.values().iter().zip(x.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    CheckOutcome {
        name: "p = 1 with the full gradient is ISTA bitwise",
        passed: same,
        detail: format!("max |diff| {:.3e}", max_abs_diff(out.x.values(), x.values())),
    }
}

fn tv_prox_properties(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let cfg = TvProxConfig { alpha: 0.2, inner_iterations: 200, warm_start: false, nonneg: false };
    let constant = ImageGrid::filled(6, 5, 0.7);
    let fixed = tv_prox(&constant, 1.0, &cfg, None).unwrap().0;
    let const_err = max_abs_diff(fixed.values(), constant.values());
    let noisy = ImageGrid::new(6, 5, random_vec(rng, 30)).unwrap();
    let (_, dual) = tv_prox(&noisy, 1.0, &cfg, None).unwrap();
    let excess = (dual.max_dual_norm() - 1.0).max(0.0);
    outcome("TV prox fixes constants and keeps the dual feasible", const_err.max(excess), 1e-12)
}

fn metric_cases(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let a = ImageGrid::new(16, 16, random_vec(rng, 256)).unwrap();
    let scaled = a.map(|v| 1.1 * v);
    let offset = ImageGrid::filled(16, 16, 0.1);
    let zero = ImageGrid::zeros(16, 16);
    let errs = [
        relative_error_sq(&a, &a).unwrap(),
        (relative_error_sq(&zero, &a).unwrap() - 1.0).abs(),
        (relative_error_sq(&scaled, &a).unwrap() - 0.01).abs(),
        (psnr(&a, &a, 1.0).unwrap() - 300.0).abs(),
        (psnr(&offset, &zero, 1.0).unwrap() - 20.0).abs(),
        (ssim(&a, &a).unwrap() - 1.0).abs(),
    ];
    outcome("metric identities", errs.iter().fold(0.0, |m: f64, v| m.max(*v)), 1e-10)
}

/// Runs all checks on small fixed instances.
pub fn run_self_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = ParallelGeometry::uniform(12, 23).expect("valid geometry");
    let op = Projector::new(&g, 16, 16).expect("valid projector");
    let truth = crate::phantoms::shepp_logan(16).expect("valid phantom");
    let b = op.project(&truth, None).expect("shapes match");
    vec![
        adjoint_identity(&op, &mut rng),
        dense_equivalence(&op, &mut rng),
        unbiasedness(&op, &b, &mut rng),
        single_subset_collapse(&op, &b, &mut rng),
        ista_reduction(&op, &b),
        tv_prox_properties(&mut rng),
        metric_cases(&mut rng),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_self_checks_pass() {
        for c in run_self_checks(7) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
