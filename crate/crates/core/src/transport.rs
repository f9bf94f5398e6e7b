//! Entropic transport plans under uniform marginals.
//!
//! The plan sub-problem maximises the reward `(1 - beta) <Pi, C>` minus the
//! entropic penalty `eps * sum pi (log pi - 1)`, so the Gibbs kernel is
//! `exp(+(1 - beta) C / eps)`. Note the sign: this is the opposite of the
//! usual cost-minimising convention.
//!
//! The solver keeps dual potentials `f`, `g` in the log domain and runs
//! ordinary scaling iterations on a stabilised kernel
//! `exp((f_i + g_j + (1 - beta) C_ij) / eps)`. Whenever the scaling vectors
//! drift outside `[1/ABSORB, ABSORB]` they are folded back into the
//! potentials and the kernel is rebuilt with exact log-sum-exp updates.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ABSORB: f64 = 1e30;
/// exp() arguments below this are flushed to zero (avoids denormals).
const EXP_FLOOR: f64 = -700.0;

/// Nonnegative `n_x x n_y` coupling with row sums `1/n_x` and column sums `1/n_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pi: Array2<f64>,
}

impl TransportPlan {
    /// The plan with every entry equal to `1 / (n_x n_y)`.
    pub fn uniform(nx: usize, ny: usize) -> Self {
        let v = 1.0 / (nx as f64 * ny as f64);
        Self {
            pi: Array2::from_elem((nx, ny), v),
        }
    }

    /// Wrap a matrix as a plan. Entries must be finite and nonnegative;
    /// marginals are not enforced here (see [`Self::max_marginal_violation`]).
    pub fn from_matrix(pi: Array2<f64>) -> Result<Self> {
        if pi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("plan"));
        }
        if pi.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("plan entries must be nonnegative".into()));
        }
        Ok(Self { pi })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.pi.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.pi
    }

    pub fn nx(&self) -> usize {
        self.pi.nrows()
    }

    pub fn ny(&self) -> usize {
        self.pi.ncols()
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.pi.sum_axis(ndarray::Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.pi.sum_axis(ndarray::Axis(0))
    }

    /// Largest absolute deviation of any row or column sum from its target.
    pub fn max_marginal_violation(&self) -> f64 {
        let a = 1.0 / self.nx() as f64;
        let b = 1.0 / self.ny() as f64;
        let r = self.row_sums().iter().fold(0.0f64, |m, &s| m.max((s - a).abs()));
        let c = self.col_sums().iter().fold(0.0f64, |m, &s| m.max((s - b).abs()));
        r.max(c)
    }

    /// Frobenius distance to another plan of the same shape.
    pub fn frobenius_distance(&self, other: &TransportPlan) -> f64 {
        Zip::from(&self.pi)
            .and(&other.pi)
            .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
            .sqrt()
    }

    /// `sum_ij pi_ij * m_ij`.
    pub fn inner(&self, m: ArrayView2<'_, f64>) -> f64 {
        Zip::from(&self.pi).and(&m).fold(0.0, |acc, &p, &c| acc + p * c)
    }

    /// Copy of the plan with rows and columns reordered: entry `(i, j)` of the
    /// result is entry `(rows[i], cols[j])` of `self`.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> TransportPlan {
        let pi = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| self.pi[[rows[i], cols[j]]]);
        TransportPlan { pi }
    }
}

/// Negative entropy `sum_ij pi_ij (log pi_ij - 1)`, with `0 log 0 = 0`.
pub fn plan_entropy(plan: &TransportPlan) -> f64 {
    plan.pi
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p.ln() - 1.0))
        .sum()
}

/// `C_alpha = K^T diag(alpha) L`, of rank at most `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(pub Array2<f64>);

impl CostMatrix {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }
}

/// `C[i, j] = sum_l alpha_l K[l, i] L[l, j]`.
pub fn cost_matrix(
    alpha: ArrayView1<'_, f64>,
    k_unpair: ArrayView2<'_, f64>,
    l_unpair: ArrayView2<'_, f64>,
) -> Result<CostMatrix> {
    let b = alpha.len();
    if k_unpair.nrows() != b || l_unpair.nrows() != b {
        return Err(Error::Shape(format!(
            "alpha has length {b}, K has {} rows, L has {} rows",
            k_unpair.nrows(),
            l_unpair.nrows()
        )));
    }
    let mut scaled = k_unpair.to_owned();
    for (mut row, &a) in scaled.outer_iter_mut().zip(alpha.iter()) {
        row *= a;
    }
    Ok(CostMatrix(scaled.t().dot(&l_unpair)))
}

/// Inner-loop settings for [`sinkhorn_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornParams {
    /// Entropic weight, strictly positive.
    pub epsilon: f64,
    pub max_inner_iters: usize,
    /// Absolute tolerance on the largest marginal violation.
    pub marginal_tol: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            epsilon: 0.3,
            max_inner_iters: 1000,
            marginal_tol: 1e-9,
        }
    }
}

impl SinkhornParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.marginal_tol.is_finite() && self.marginal_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "marginal_tol must be positive, got {}",
                self.marginal_tol
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidParameter("max_inner_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dual potentials, in the units of the cost: `pi_ij = exp((f_i + g_j + (1-beta) C_ij) / eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
}

impl DualPotentials {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            f: Array1::zeros(nx),
            g: Array1::zeros(ny),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    pub plan: TransportPlan,
    pub potentials: DualPotentials,
    /// Scaling iterations performed (each is one row and one column update).
    pub iterations: usize,
    /// False when the iteration cap was hit before `marginal_tol` was met.
    pub converged: bool,
    pub max_violation: f64,
}

/// Solve the entropic plan sub-problem from scratch.
pub fn sinkhorn_solve(cost: &CostMatrix, beta: f64, params: &SinkhornParams) -> Result<SinkhornOutput> {
    sinkhorn_solve_warm(cost, beta, params, None)
}

/// [`sinkhorn_solve`] starting from previously computed potentials.
pub fn sinkhorn_solve_warm(
    cost: &CostMatrix,
    beta: f64,
    params: &SinkhornParams,
    warm: Option<&DualPotentials>,
) -> Result<SinkhornOutput> {
    params.validate()?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    let c = &cost.0;
    let (nx, ny) = c.dim();
    if nx == 0 || ny == 0 {
        return Err(Error::Shape("cost matrix has an empty side".into()));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }

    if nx == 1 || ny == 1 {
        return Ok(SinkhornOutput {
            plan: TransportPlan::uniform(nx, ny),
            potentials: DualPotentials::zeros(nx, ny),
            iterations: 0,
            converged: true,
            max_violation: 0.0,
        });
    }

    let mut solver = Solver::new(c.view(), 1.0 - beta, params.epsilon, warm);
    solver.rebuild();

    let a = 1.0 / nx as f64;
    let b = 1.0 / ny as f64;
    let mut u = Array1::from_elem(nx, 1.0);
    let mut v = Array1::from_elem(ny, 1.0);
    let mut rowsum = Array1::zeros(nx);
    let mut colsum = Array1::zeros(ny);

    let mut iterations = 0;
    let mut converged = false;
    let mut violation = f64::INFINITY;
    while iterations < params.max_inner_iters {
        iterations += 1;

        solver.mat_vec(v.view(), &mut rowsum);
        let prev_u = u.clone();
        Zip::from(&mut u).and(&rowsum).for_each(|ui, &r| *ui = a / r);

        solver.mat_t_vec(u.view(), &mut colsum);
        violation = Zip::from(&v)
            .and(&colsum)
            .fold(0.0f64, |m, &vj, &cj| m.max((vj * cj - b).abs()));
        if !u.iter().all(|x| x.is_finite() && *x > 0.0) || !violation.is_finite() {
            // Underflow in a row: fold the last good scalings and redo the
            // update exactly in the log domain.
            solver.absorb(prev_u.view(), v.view());
            u.fill(1.0);
            v.fill(1.0);
            continue;
        }
        if violation <= params.marginal_tol {
            converged = true;
            break;
        }

        let prev_v = v.clone();
        Zip::from(&mut v).and(&colsum).for_each(|vj, &cj| *vj = b / cj);
        let out_of_range = |x: &f64| !(x.is_finite() && *x > 1.0 / ABSORB && *x < ABSORB);
        if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            solver.absorb(u.view(), prev_v.view());
            u.fill(1.0);
            v.fill(1.0);
        } else if u.iter().any(out_of_range) || v.iter().any(out_of_range) {
            solver.absorb(u.view(), v.view());
            u.fill(1.0);
            v.fill(1.0);
        }
    }

    if !converged {
        log::warn!(
            "sinkhorn hit the iteration cap ({}) with marginal violation {violation:.3e}",
            params.max_inner_iters
        );
    }

    let (plan, potentials) = solver.finish(u.view(), v.view());
    Ok(SinkhornOutput {
        plan: TransportPlan { pi: plan },
        potentials,
        iterations,
        converged,
        max_violation: violation,
    })
}

struct Solver<'a> {
    cost: ArrayView2<'a, f64>,
    weight: f64,
    eps: f64,
    f: Array1<f64>,
    g: Array1<f64>,
    kernel: Array2<f64>,
}

impl<'a> Solver<'a> {
    fn new(cost: ArrayView2<'a, f64>, weight: f64, eps: f64, warm: Option<&DualPotentials>) -> Self {
        let (nx, ny) = cost.dim();
        let (f, g) = match warm {
            Some(p) if p.f.len() == nx && p.g.len() == ny => (p.f.clone(), p.g.clone()),
            _ => (Array1::zeros(nx), Array1::zeros(ny)),
        };
        Self {
            cost,
            weight,
            eps,
            f,
            g,
            kernel: Array2::zeros((nx, ny)),
        }
    }

    /// Fold scaling vectors into the potentials and rebuild the kernel.
    fn absorb(&mut self, u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) {
        let eps = self.eps;
        Zip::from(&mut self.f).and(&u).for_each(|f, &x| *f += eps * x.ln());
        Zip::from(&mut self.g).and(&v).for_each(|g, &x| *g += eps * x.ln());
        self.rebuild();
    }

    /// Exact log-domain row update, then column update; leaves the kernel
    /// with exact column sums `1/n_y`.
    fn rebuild(&mut self) {
        let (nx, ny) = self.cost.dim();
        let inv_eps = 1.0 / self.eps;
        let w = self.weight;
        let log_a = -(nx as f64).ln();
        let log_b = -(ny as f64).ln();

        // Row update: f_i = eps (log a - LSE_j (g_j + w C_ij) / eps).
        for (i, crow) in self.cost.outer_iter().enumerate() {
            let mut m = f64::NEG_INFINITY;
            for (&c, &g) in crow.iter().zip(self.g.iter()) {
                m = m.max((g + w * c) * inv_eps);
            }
            let s: f64 = crow
                .iter()
                .zip(self.g.iter())
                .map(|(&c, &g)| floored_exp((g + w * c) * inv_eps - m))
                .sum();
            self.f[i] = self.eps * (log_a - (m + s.ln()));
        }

        // Column update, fused with the kernel build.
        let mut colmax = Array1::from_elem(ny, f64::NEG_INFINITY);
        for (crow, &f) in self.cost.outer_iter().zip(self.f.iter()) {
            Zip::from(&mut colmax)
                .and(&crow)
                .for_each(|m, &c| *m = m.max((f + w * c) * inv_eps));
        }
        let mut colsum = Array1::<f64>::zeros(ny);
        for ((crow, mut krow), &f) in self
            .cost
            .outer_iter()
            .zip(self.kernel.outer_iter_mut())
            .zip(self.f.iter())
        {
            Zip::from(&mut krow)
                .and(&crow)
                .and(&colmax)
                .and(&mut colsum)
                .for_each(|k, &c, &m, s| {
                    *k = floored_exp((f + w * c) * inv_eps - m);
                    *s += *k;
                });
        }
        let b = 1.0 / ny as f64;
        let scale = colsum.mapv(|s| b / s);
        let eps = self.eps;
        Zip::from(&mut self.g)
            .and(&colmax)
            .and(&colsum)
            .for_each(|g, &m, &s| *g = eps * (log_b - (m + s.ln())));
        for mut krow in self.kernel.outer_iter_mut() {
            krow *= &scale;
        }
    }

    fn mat_vec(&self, v: ArrayView1<'_, f64>, out: &mut Array1<f64>) {
        let v = v.as_slice().expect("contiguous");
        for (krow, o) in self.kernel.outer_iter().zip(out.iter_mut()) {
            *o = dot(krow.as_slice().expect("contiguous"), v);
        }
    }

    fn mat_t_vec(&self, u: ArrayView1<'_, f64>, out: &mut Array1<f64>) {
        out.fill(0.0);
        let o = out.as_slice_mut().expect("contiguous");
        for (krow, &ui) in self.kernel.outer_iter().zip(u.iter()) {
            for (oj, &k) in o.iter_mut().zip(krow.as_slice().expect("contiguous")) {
                *oj += ui * k;
            }
        }
    }

    fn finish(mut self, u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> (Array2<f64>, DualPotentials) {
        for (mut krow, &ui) in self.kernel.outer_iter_mut().zip(u.iter()) {
            Zip::from(&mut krow).and(&v).for_each(|k, &vj| *k *= ui * vj);
        }
        let eps = self.eps;
        Zip::from(&mut self.f).and(&u).for_each(|f, &x| *f += eps * x.ln());
        Zip::from(&mut self.g).and(&v).for_each(|g, &x| *g += eps * x.ln());
        (self.kernel, DualPotentials { f: self.f, g: self.g })
    }
}

#[inline]
fn floored_exp(x: f64) -> f64 {
    if x < EXP_FLOOR {
        0.0
    } else {
        x.exp()
    }
}

/// Dot product with four independent accumulators (fixed order, so deterministic).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(eps: f64) -> SinkhornParams {
        SinkhornParams {
            epsilon: eps,
            ..Default::default()
        }
    }

    fn random_cost(nx: usize, ny: usize, scale: f64, seed: u64) -> CostMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CostMatrix(Array2::from_shape_fn((nx, ny), |_| scale * (rng.random::<f64>() - 0.5)))
    }

    fn assert_feasible(plan: &TransportPlan, tol: f64) {
        assert!(plan.matrix().iter().all(|&p| p >= 0.0));
        assert!((plan.matrix().sum() - 1.0).abs() <= tol);
        assert!(plan.max_marginal_violation() <= tol, "{}", plan.max_marginal_violation());
    }

    #[test]
    fn cost_matrix_examples() {
        let k = array![[1.0, 0.5]];
        let l = array![[1.0, 0.2]];
        let c = cost_matrix(array![1.0].view(), k.view(), l.view()).unwrap();
        assert_eq!(c.0, array![[1.0, 0.2], [0.5, 0.1]]);

        let c = cost_matrix(array![0.0].view(), k.view(), l.view()).unwrap();
        assert!(c.0.iter().all(|&v| v == 0.0));

        assert!(cost_matrix(array![1.0, 2.0].view(), k.view(), l.view()).is_err());
    }

    #[test]
    fn zero_cost_gives_uniform_plan() {
        for beta in [0.0, 0.3, 1.0] {
            let out = sinkhorn_solve(&CostMatrix(Array2::zeros((3, 5))), beta, &params(0.3)).unwrap();
            assert!(out.converged);
            for &p in out.plan.matrix().iter() {
                assert!((p - 1.0 / 15.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn beta_one_ignores_cost() {
        let c = random_cost(4, 6, 50.0, 1);
        let out = sinkhorn_solve(&c, 1.0, &params(0.3)).unwrap();
        for &p in out.plan.matrix().iter() {
            assert!((p - 1.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        // (1 - beta) C / eps = I  ->  Pi ∝ [[1, e^-1], [e^-1, 1]] after scaling.
        let eps = 0.3;
        let beta = 0.25;
        let w = (1.0 - beta) / eps;
        let c = CostMatrix(array![[1.0 / w, 0.0], [0.0, 1.0 / w]]);
        let out = sinkhorn_solve(&c, beta, &params(eps)).unwrap();
        let e = (-1f64).exp();
        let z = 1.0 / (2.0 * (1.0 + e));
        let expected = array![[z, z * e], [z * e, z]];
        for (p, q) in out.plan.matrix().iter().zip(expected.iter()) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
        assert!((out.plan.matrix()[[0, 0]] - 0.36552).abs() < 1e-5);
        assert!((out.plan.matrix()[[0, 1]] - 0.13448).abs() < 1e-5);
    }

    #[test]
    fn degenerate_single_row_or_column() {
        let out = sinkhorn_solve(&random_cost(1, 4, 3.0, 2), 0.0, &params(0.3)).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.plan.matrix().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let out = sinkhorn_solve(&random_cost(3, 1, 3.0, 2), 0.0, &params(0.3)).unwrap();
        assert!(out.plan.matrix().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut c = random_cost(3, 3, 1.0, 0);
        assert!(sinkhorn_solve(&c, 0.5, &params(0.0)).is_err());
        assert!(sinkhorn_solve(&c, 1.5, &params(0.3)).is_err());
        c.0[[1, 1]] = f64::NAN;
        assert!(matches!(sinkhorn_solve(&c, 0.5, &params(0.3)), Err(Error::NonFinite(_))));
    }

    #[test]
    fn survives_huge_reward_range() {
        // exp(1000 / 0.01) overflows any naive kernel. Convergence is slow at
        // this contrast, hence the raised cap.
        let c = random_cost(30, 40, 2000.0, 7);
        let p = SinkhornParams {
            max_inner_iters: 200_000,
            ..params(0.01)
        };
        let out = sinkhorn_solve(&c, 0.0, &p).unwrap();
        assert!(out.plan.matrix().iter().all(|p| p.is_finite()));
        assert_feasible(&out.plan, 1e-6);
    }

    #[test]
    fn iteration_cap_returns_flagged_plan() {
        let c = random_cost(20, 20, 50.0, 3);
        let p = SinkhornParams {
            epsilon: 0.05,
            max_inner_iters: 2,
            marginal_tol: 1e-15,
        };
        let out = sinkhorn_solve(&c, 0.0, &p).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn warm_start_reaches_same_plan() {
        let c1 = random_cost(50, 60, 8.0, 4);
        let mut c2 = c1.clone();
        c2.0.mapv_inplace(|v| v * 1.05 + 0.01);
        let cold = sinkhorn_solve(&c2, 0.2, &params(0.3)).unwrap();
        let first = sinkhorn_solve(&c1, 0.2, &params(0.3)).unwrap();
        let warm = sinkhorn_solve_warm(&c2, 0.2, &params(0.3), Some(&first.potentials)).unwrap();
        assert!(warm.iterations <= cold.iterations);
        for (a, b) in cold.plan.matrix().iter().zip(warm.plan.matrix().iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn entropy_examples() {
        let h = plan_entropy(&TransportPlan::uniform(2, 2));
        assert!((h - (-(4f64).ln() - 1.0)).abs() < 1e-15);
        assert!((h + 2.386294).abs() < 1e-6);
        let h = plan_entropy(&TransportPlan::uniform(7, 3));
        assert!((h - (-(21f64).ln() - 1.0)).abs() < 1e-14);
        let p = TransportPlan::from_matrix(array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
        assert!((plan_entropy(&p) - (0.5f64.ln() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn plan_rejects_negative_entries() {
        assert!(TransportPlan::from_matrix(array![[0.5, -0.1]]).is_err());
        assert!(TransportPlan::from_matrix(array![[f64::NAN]]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn output_is_feasible(nx in 2usize..30, ny in 2usize..30, scale in 0.0..20.0f64, beta in 0.0..1.0f64, seed in 0u64..1000) {
            let c = random_cost(nx, ny, scale, seed);
            // High-contrast costs with few rows mix slowly; the default cap
            // is not the property under test.
            let p = SinkhornParams { max_inner_iters: 200_000, ..params(0.3) };
            let out = sinkhorn_solve(&c, beta, &p).unwrap();
            prop_assert!(out.converged);
            assert_feasible(&out.plan, 1e-9);
        }

        #[test]
        fn constant_shift_is_absorbed(nx in 2usize..15, ny in 2usize..15, shift in -20.0..20.0f64, seed in 0u64..1000) {
            let c = random_cost(nx, ny, 5.0, seed);
            let shifted = CostMatrix(c.0.mapv(|v| v + shift));
            let a = sinkhorn_solve(&c, 0.3, &params(0.3)).unwrap();
            let b = sinkhorn_solve(&shifted, 0.3, &params(0.3)).unwrap();
            for (p, q) in a.plan.matrix().iter().zip(b.plan.matrix().iter()) {
                prop_assert!((p - q).abs() < 1e-8);
            }
        }

        #[test]
        fn reward_at_least_uniform(nx in 2usize..20, ny in 2usize..20, seed in 0u64..1000) {
            let c = random_cost(nx, ny, 4.0, seed);
            let out = sinkhorn_solve(&c, 0.0, &params(0.3)).unwrap();
            let uniform = TransportPlan::uniform(nx, ny);
            prop_assert!(out.plan.inner(c.view()) >= uniform.inner(c.view()) - 1e-12);
            prop_assert!(plan_entropy(&out.plan) >= -((nx * ny) as f64).ln() - 1.0 - 1e-12);
        }

        #[test]
        fn larger_epsilon_is_more_diffuse(nx in 2usize..15, ny in 2usize..15, eps in 0.05..2.0f64, seed in 0u64..1000) {
            let c = random_cost(nx, ny, 3.0, seed);
            let a = sinkhorn_solve(&c, 0.0, &params(eps)).unwrap();
            let b = sinkhorn_solve(&c, 0.0, &params(2.0 * eps)).unwrap();
            // H is the negative entropy, so a more diffuse plan has a smaller value.
            prop_assert!(plan_entropy(&b.plan) < plan_entropy(&a.plan));
        }
    }
}
