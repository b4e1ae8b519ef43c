//! Unbiased gradient estimators for `f(x) = ½‖Ax − b‖² = Σᵢ ½‖Aᵢx − bᵢ‖²`.
//!
//! Subsets are the angle blocks of a [`SubsetPartition`]. Every estimator
//! returns an image-sized vector whose expectation over the uniformly drawn
//! subset index is the full gradient `Aᵀ(Ax − b)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::norm_sq;
use crate::tomo::{ProjectionOperator, SubsetPartition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Full,
    Sgd,
    Saga,
    Svrg,
    Lsvrg,
}

impl EstimatorKind {
    pub fn is_stochastic(self) -> bool {
        !matches!(self, EstimatorKind::Full)
    }
}

/// The least-squares data term split over a partition of the views.
pub struct LeastSquares<'a, O: ProjectionOperator + ?Sized> {
    op: &'a O,
    data: &'a [f64],
    partition: SubsetPartition,
    all_views: Vec<usize>,
    subset_data: Vec<Vec<f64>>,
}

impl<'a, O: ProjectionOperator + ?Sized> LeastSquares<'a, O> {
    pub fn new(op: &'a O, data: &'a [f64], partition: SubsetPartition) -> Result<Self> {
        let m = op.n_views() * op.view_len();
        if data.len() != m {
            return Err(Error::shape(format!("data has {} values, operator range is {m}", data.len())));
        }
        if partition.n_angles() != op.n_views() {
            return Err(Error::shape(format!(
                "partition covers {} angles, operator has {}",
                partition.n_angles(),
                op.n_views()
            )));
        }
        let len = op.view_len();
        let subset_data = partition
            .subsets()
            .iter()
            .map(|s| s.iter().flat_map(|&v| data[v * len..(v + 1) * len].iter().copied()).collect())
            .collect();
        Ok(Self { op, data, partition, all_views: op.all_views(), subset_data })
    }

    pub fn operator(&self) -> &'a O {
        self.op
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }

    pub fn partition(&self) -> &SubsetPartition {
        &self.partition
    }

    pub fn n_subsets(&self) -> usize {
        self.partition.n_subsets()
    }

    pub fn image_len(&self) -> usize {
        self.op.image_len()
    }

    fn check_image(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.op.image_len() {
            return Err(Error::shape(format!("image has {} values, operator expects {}", x.len(), self.op.image_len())));
        }
        Ok(())
    }

    /// `½‖Ax − b‖²`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut r = self.op.forward(x, &self.all_views);
        r.iter_mut().zip(self.data).for_each(|(ri, bi)| *ri -= bi);
        0.5 * norm_sq(&r)
    }

    /// `Aᵀ(Ax − b)` evaluated in one sweep over all views.
    pub fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.op.forward(x, &self.all_views);
        r.iter_mut().zip(self.data).for_each(|(ri, bi)| *ri -= bi);
        self.op.adjoint(&r, &self.all_views)
    }

    /// `Σᵢ Aᵢᵀ(Aᵢx − bᵢ)` accumulated subset by subset.
    pub fn full_gradient_split(&self, x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; x.len()];
        for i in 0..self.n_subsets() {
            let g = self.subset_gradient(x, i);
            total.iter_mut().zip(&g).for_each(|(t, gi)| *t += gi);
        }
        total
    }

    /// `∇fᵢ(x) = Aᵢᵀ(Aᵢx − bᵢ)`.
    pub fn subset_gradient(&self, x: &[f64], i: usize) -> Vec<f64> {
        let views = self.partition.subset(i);
        let mut r = self.op.forward(x, views);
        r.iter_mut().zip(&self.subset_data[i]).for_each(|(ri, bi)| *ri -= bi);
        self.op.adjoint(&r, views)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n_subsets() {
            return Err(Error::param(format!("subset index {i} out of range for {} subsets", self.n_subsets())));
        }
        Ok(())
    }
}

/// Full gradient, optionally computed as a sum over the partition's subsets.
pub fn full_gradient<O: ProjectionOperator + ?Sized>(ls: &LeastSquares<'_, O>, x: &[f64], split: bool) -> Result<Vec<f64>> {
    ls.check_image(x)?;
    Ok(if split { ls.full_gradient_split(x) } else { ls.full_gradient(x) })
}

/// `N·∇f_{i}(x)`.
pub fn sgd_estimate<O: ProjectionOperator + ?Sized>(ls: &LeastSquares<'_, O>, x: &[f64], i: usize) -> Result<Vec<f64>> {
    ls.check_image(x)?;
    ls.check_index(i)?;
    let n = ls.n_subsets() as f64;
    let mut g = ls.subset_gradient(x, i);
    if ls.n_subsets() > 1 {
        g.iter_mut().for_each(|v| *v *= n);
    }
    Ok(g)
}

/// Gradient table `{vⁱ}` and its running sum `v̄ = Σ vⁱ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SagaState {
    pub table: Vec<Vec<f64>>,
    pub running_sum: Vec<f64>,
}

impl SagaState {
    /// All-zero table.
    pub fn zeros(n_subsets: usize, image_len: usize) -> Self {
        Self { table: vec![vec![0.0; image_len]; n_subsets], running_sum: vec![0.0; image_len] }
    }

    pub fn table_bytes(&self) -> usize {
        self.table.len() * self.running_sum.len() * std::mem::size_of::<f64>()
    }

    /// Relative deviation of the running sum from a fresh sum of the table.
    pub fn consistency_error(&self) -> f64 {
        let mut fresh = vec![0.0; self.running_sum.len()];
        for row in &self.table {
            fresh.iter_mut().zip(row).for_each(|(f, v)| *f += v);
        }
        let diff: f64 = fresh.iter().zip(&self.running_sum).map(|(a, b)| (a - b) * (a - b)).sum();
        let scale = norm_sq(&fresh).max(norm_sq(&self.running_sum));
        if scale == 0.0 {
            diff.sqrt()
        } else {
            (diff / scale).sqrt()
        }
    }
}

/// `N(∇f_{i}(x) − vⁱ) + v̄`, then `vⁱ ← ∇f_{i}(x)` with an incremental sum update.
pub fn saga_estimate_update<O: ProjectionOperator + ?Sized>(
    ls: &LeastSquares<'_, O>,
    x: &[f64],
    i: usize,
    state: &mut SagaState,
) -> Result<Vec<f64>> {
    ls.check_image(x)?;
    ls.check_index(i)?;
    if state.table.len() != ls.n_subsets() || state.running_sum.len() != x.len() {
        return Err(Error::shape("SAGA table does not match the problem"));
    }
    let g = ls.subset_gradient(x, i);
    if ls.n_subsets() == 1 {
        // v̄ = v⁰ here, so the estimate is exactly ∇f(x).
        state.table[0].clone_from(&g);
        state.running_sum.clone_from(&g);
        return Ok(g);
    }
    let n = ls.n_subsets() as f64;
    let old = &state.table[i];
    let estimate = g
        .iter()
        .zip(old)
        .zip(&state.running_sum)
        .map(|((gi, vi), s)| n * (gi - vi) + s)
        .collect();
    for ((s, gi), vi) in state.running_sum.iter_mut().zip(&g).zip(old) {
        *s += gi - vi;
    }
    state.table[i] = g;
    Ok(estimate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefreshRule {
    /// Refresh every `N` iterations.
    Periodic,
    /// Refresh with probability `1/N` at each iteration.
    Loopless,
}

/// Snapshot `x̃` and the stored full gradient `∇f(x̃)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SvrgState {
    pub snapshot: Vec<f64>,
    pub full_grad: Vec<f64>,
    pub iterations_since_refresh: u64,
    pub rule: RefreshRule,
    /// `N`: the refresh period, or the inverse refresh probability.
    pub n_subsets: usize,
}

impl SvrgState {
    /// Takes `x` as the snapshot and evaluates the full gradient there.
    pub fn at<O: ProjectionOperator + ?Sized>(ls: &LeastSquares<'_, O>, x: &[f64], rule: RefreshRule) -> Self {
        Self {
            snapshot: x.to_vec(),
            full_grad: ls.full_gradient(x),
            iterations_since_refresh: 0,
            rule,
            n_subsets: ls.n_subsets(),
        }
    }

    pub fn refresh<O: ProjectionOperator + ?Sized>(&mut self, ls: &LeastSquares<'_, O>, x: &[f64]) {
        self.snapshot.clear();
        self.snapshot.extend_from_slice(x);
        self.full_grad = ls.full_gradient(x);
        self.iterations_since_refresh = 0;
    }
}

/// `N(∇f_{i}(x) − ∇f_{i}(x̃)) + ∇f(x̃)`. Does not touch the state.
pub fn svrg_estimate<O: ProjectionOperator + ?Sized>(
    ls: &LeastSquares<'_, O>,
    x: &[f64],
    i: usize,
    state: &SvrgState,
) -> Result<Vec<f64>> {
    ls.check_image(x)?;
    ls.check_index(i)?;
    if state.snapshot.len() != x.len() || state.n_subsets != ls.n_subsets() {
        return Err(Error::StaleState("snapshot does not match the problem".into()));
    }
    if state.rule == RefreshRule::Periodic && state.iterations_since_refresh > state.n_subsets as u64 {
        return Err(Error::StaleState(format!(
            "{} iterations since the last refresh, period is {}",
            state.iterations_since_refresh, state.n_subsets
        )));
    }
    if ls.n_subsets() == 1 {
        return Ok(ls.subset_gradient(x, 0));
    }
    let n = ls.n_subsets() as f64;
    let g = ls.subset_gradient(x, i);
    let g_snap = ls.subset_gradient(&state.snapshot, i);
    Ok(g.iter()
        .zip(&g_snap)
        .zip(&state.full_grad)
        .map(|((a, b), f)| n * (a - b) + f)
        .collect())
}

/// Whether the snapshot should be refreshed before this iteration's draw.
pub fn refresh_policy(state: &SvrgState, rng: &mut ChaCha8Rng) -> bool {
    match state.rule {
        RefreshRule::Periodic => state.iterations_since_refresh >= state.n_subsets as u64,
        RefreshRule::Loopless => rng.random::<f64>() < 1.0 / state.n_subsets as f64,
    }
}

/// Work done by an estimator, in gradient evaluations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GradientCost {
    pub full_gradients: u64,
    pub subset_gradients: u64,
}

impl GradientCost {
    /// One data pass is one full gradient or `N` subset gradients.
    pub fn data_passes(&self, n_subsets: usize) -> f64 {
        self.full_gradients as f64 + self.subset_gradients as f64 / n_subsets as f64
    }
}

#[derive(Clone, Debug)]
enum EstimatorState {
    Full,
    Sgd,
    Saga(SagaState),
    Svrg { state: SvrgState, at_snapshot: bool },
}

/// Stateful driver for one estimator kind: owns the auxiliary memory and
/// the subset-index and refresh random streams, and counts gradient work.
#[derive(Clone, Debug)]
pub struct GradientEstimator {
    kind: EstimatorKind,
    state: EstimatorState,
    index_rng: ChaCha8Rng,
    refresh_rng: ChaCha8Rng,
    cost: GradientCost,
    last_index: Option<usize>,
}

impl GradientEstimator {
    /// Sets up the estimator at `x0`. SVRG-type estimators evaluate the
    /// initial snapshot gradient here, which is charged as one full pass
    /// (nothing when `N = 1`, where they reduce to the full gradient).
    pub fn new<O: ProjectionOperator + ?Sized>(
        kind: EstimatorKind,
        ls: &LeastSquares<'_, O>,
        x0: &[f64],
        index_rng: ChaCha8Rng,
        refresh_rng: ChaCha8Rng,
    ) -> Result<Self> {
        ls.check_image(x0)?;
        let mut cost = GradientCost::default();
        let state = match kind {
            EstimatorKind::Full => EstimatorState::Full,
            EstimatorKind::Sgd => EstimatorState::Sgd,
            EstimatorKind::Saga => EstimatorState::Saga(SagaState::zeros(ls.n_subsets(), x0.len())),
            EstimatorKind::Svrg | EstimatorKind::Lsvrg => {
                let rule = if kind == EstimatorKind::Svrg { RefreshRule::Periodic } else { RefreshRule::Loopless };
                if ls.n_subsets() > 1 {
                    cost.full_gradients += 1;
                }
                EstimatorState::Svrg { state: SvrgState::at(ls, x0, rule), at_snapshot: true }
            }
        };
        Ok(Self { kind, state, index_rng, refresh_rng, cost, last_index: None })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn cost(&self) -> GradientCost {
        self.cost
    }

    /// Subset drawn at the last call, if any.
    pub fn last_index(&self) -> Option<usize> {
        self.last_index
    }

    pub fn saga_state(&self) -> Option<&SagaState> {
        match &self.state {
            EstimatorState::Saga(s) => Some(s),
            _ => None,
        }
    }

    pub fn svrg_state(&self) -> Option<&SvrgState> {
        match &self.state {
            EstimatorState::Svrg { state, .. } => Some(state),
            _ => None,
        }
    }

    fn draw(&mut self, n: usize) -> usize {
        let i = self.index_rng.random_range(0..n);
        self.last_index = Some(i);
        i
    }

    /// `G_k(x)` for the current iteration, advancing internal state.
    pub fn estimate<O: ProjectionOperator + ?Sized>(&mut self, ls: &LeastSquares<'_, O>, x: &[f64]) -> Result<Vec<f64>> {
        let n = ls.n_subsets();
        self.last_index = None;
        match &mut self.state {
            EstimatorState::Full => {
                ls.check_image(x)?;
                self.cost.full_gradients += 1;
                Ok(ls.full_gradient(x))
            }
            EstimatorState::Sgd => {
                let i = self.draw(n);
                self.cost.subset_gradients += 1;
                sgd_estimate(ls, x, i)
            }
            EstimatorState::Saga(_) => {
                let i = self.draw(n);
                self.cost.subset_gradients += 1;
                let EstimatorState::Saga(state) = &mut self.state else { unreachable!() };
                saga_estimate_update(ls, x, i, state)
            }
            EstimatorState::Svrg { state, at_snapshot } => {
                if n == 1 {
                    ls.check_image(x)?;
                    self.cost.subset_gradients += 1;
                    return Ok(ls.subset_gradient(x, 0));
                }
                if refresh_policy(state, &mut self.refresh_rng) {
                    state.refresh(ls, x);
                    self.cost.full_gradients += 1;
                    *at_snapshot = true;
                }
                if *at_snapshot {
                    // x is the snapshot: the estimate collapses to the stored gradient.
                    *at_snapshot = false;
                    state.iterations_since_refresh += 1;
                    return Ok(state.full_grad.clone());
                }
                let i = self.index_rng.random_range(0..n);
                self.last_index = Some(i);
                let g = svrg_estimate(ls, x, i, state)?;
                state.iterations_since_refresh += 1;
                self.cost.subset_gradients += 2;
                Ok(g)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::{build_staggered_partition, DenseMatrix, DenseOperator, ParallelGeometry, Projector};
    use rand::SeedableRng;

    fn toy() -> (DenseOperator, Vec<f64>) {
        // Two 1x1 blocks a₁ = 1, a₂ = 2; b = 0.
        let op = DenseOperator::new(DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(), 1, 1, 1).unwrap();
        (op, vec![0.0, 0.0])
    }

    fn desk(n_angles: usize, side: usize, seed: u64) -> (Projector, Vec<f64>, Vec<f64>) {
        let g = ParallelGeometry::uniform(n_angles, side + side / 2).unwrap();
        let p = Projector::new(&g, side, side).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..g.sinogram_len()).map(|_| rng.random_range(0.0..3.0)).collect();
        (p, x, b)
    }

    fn close(a: &[f64], b: &[f64], rel: f64) -> bool {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        d <= rel * norm_sq(b).sqrt().max(1e-300)
    }

    #[test]
    fn scalar_sgd_enumeration() {
        let (op, b) = toy();
        let ls = LeastSquares::new(&op, &b, build_staggered_partition(2, 2).unwrap()).unwrap();
        let e0 = sgd_estimate(&ls, &[1.0], 0).unwrap()[0];
        let e1 = sgd_estimate(&ls, &[1.0], 1).unwrap()[0];
        assert_eq!((e0, e1), (2.0, 8.0));
        assert_eq!(full_gradient(&ls, &[1.0], false).unwrap(), vec![5.0]);
    }

    #[test]
    fn scalar_saga_enumeration() {
        let (op, b) = toy();
        let ls = LeastSquares::new(&op, &b, build_staggered_partition(2, 2).unwrap()).unwrap();
        let mut estimates = vec![];
        for i in 0..2 {
            let mut st = SagaState::zeros(2, 1);
            estimates.push(saga_estimate_update(&ls, &[1.0], i, &mut st).unwrap()[0]);
        }
        assert_eq!(estimates, vec![2.0, 8.0]);
    }

    #[test]
    fn index_out_of_range() {
        let (op, b) = toy();
        let ls = LeastSquares::new(&op, &b, build_staggered_partition(2, 2).unwrap()).unwrap();
        assert!(sgd_estimate(&ls, &[1.0], 2).is_err());
        assert!(saga_estimate_update(&ls, &[1.0], 5, &mut SagaState::zeros(2, 1)).is_err());
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let (p, x, _) = desk(6, 8, 1);
        let b = p.forward(&x, &p.all_views());
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(6, 3).unwrap()).unwrap();
        assert!(ls.full_gradient(&x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn split_gradient_matches_monolithic() {
        let (p, x, b) = desk(12, 10, 2);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(12, 5).unwrap()).unwrap();
        assert!(close(&ls.full_gradient_split(&x), &ls.full_gradient(&x), 1e-10));
    }

    #[test]
    fn saga_table_matching_gradients_gives_full_gradient() {
        let (p, x, b) = desk(10, 8, 3);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(10, 5).unwrap()).unwrap();
        let table: Vec<Vec<f64>> = (0..5).map(|i| ls.subset_gradient(&x, i)).collect();
        let mut sum = vec![0.0; x.len()];
        for t in &table {
            sum.iter_mut().zip(t).for_each(|(s, v)| *s += v);
        }
        let mut state = SagaState { table, running_sum: sum };
        let est = saga_estimate_update(&ls, &x, 2, &mut state).unwrap();
        assert!(close(&est, &ls.full_gradient(&x), 1e-10));
    }

    #[test]
    fn saga_running_sum_stays_consistent() {
        let (p, _, b) = desk(12, 8, 4);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(12, 6).unwrap()).unwrap();
        let mut state = SagaState::zeros(6, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
            let i = rng.random_range(0..6);
            saga_estimate_update(&ls, &x, i, &mut state).unwrap();
        }
        assert!(state.consistency_error() <= 1e-8);
    }

    #[test]
    fn svrg_at_snapshot_has_zero_variance() {
        let (p, x, b) = desk(10, 8, 6);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(10, 5).unwrap()).unwrap();
        let state = SvrgState::at(&ls, &x, RefreshRule::Periodic);
        for i in 0..5 {
            assert_eq!(svrg_estimate(&ls, &x, i, &state).unwrap(), state.full_grad);
        }
    }

    #[test]
    fn svrg_stale_state_detected() {
        let (p, x, b) = desk(4, 6, 7);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(4, 2).unwrap()).unwrap();
        let mut state = SvrgState::at(&ls, &x, RefreshRule::Periodic);
        state.iterations_since_refresh = 3;
        assert!(matches!(svrg_estimate(&ls, &x, 0, &state), Err(Error::StaleState(_))));
    }

    #[test]
    fn periodic_refresh_schedule() {
        let (p, x, b) = desk(4, 6, 8);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(4, 4).unwrap()).unwrap();
        let mut state = SvrgState::at(&ls, &x, RefreshRule::Periodic);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(!refresh_policy(&state, &mut rng));
        state.iterations_since_refresh = 4;
        assert!(refresh_policy(&state, &mut rng));
    }

    #[test]
    fn loopless_refresh_rate() {
        let (p, x, b) = desk(10, 4, 9);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(10, 10).unwrap()).unwrap();
        let state = SvrgState::at(&ls, &x, RefreshRule::Loopless);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let hits = (0..100_000).filter(|_| refresh_policy(&state, &mut rng)).count();
        let rate = hits as f64 / 1e5;
        assert!((rate - 0.1).abs() <= 0.005, "rate {rate}");
    }

    #[test]
    fn driver_charges_data_passes() {
        let (p, x, b) = desk(10, 6, 10);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(10, 5).unwrap()).unwrap();
        let rng = || ChaCha8Rng::seed_from_u64(1);
        let mut svrg = GradientEstimator::new(EstimatorKind::Svrg, &ls, &x, rng(), rng()).unwrap();
        assert_eq!(svrg.cost().data_passes(5), 1.0);
        // First call sits on the snapshot; the next four are stochastic.
        for _ in 0..5 {
            svrg.estimate(&ls, &x).unwrap();
        }
        assert_eq!(svrg.cost(), GradientCost { full_gradients: 1, subset_gradients: 8 });
        svrg.estimate(&ls, &x).unwrap();
        assert_eq!(svrg.cost().full_gradients, 2);

        let mut saga = GradientEstimator::new(EstimatorKind::Saga, &ls, &x, rng(), rng()).unwrap();
        for _ in 0..5 {
            saga.estimate(&ls, &x).unwrap();
        }
        assert_eq!(saga.cost().data_passes(5), 1.0);
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let (p, x, b) = desk(10, 6, 11);
        let ls = LeastSquares::new(&p, &b, build_staggered_partition(10, 5).unwrap()).unwrap();
        for kind in [EstimatorKind::Sgd, EstimatorKind::Saga, EstimatorKind::Svrg, EstimatorKind::Lsvrg] {
            let mk = || {
                GradientEstimator::new(kind, &ls, &x, ChaCha8Rng::seed_from_u64(3), ChaCha8Rng::seed_from_u64(4))
                    .unwrap()
            };
            let (mut a, mut c) = (mk(), mk());
            for _ in 0..20 {
                assert_eq!(a.estimate(&ls, &x).unwrap(), c.estimate(&ls, &x).unwrap());
                assert_eq!(a.last_index(), c.last_index());
            }
        }
    }
}
