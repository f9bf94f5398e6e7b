//! Alternating minimisation of the joint objective
//!
//! ```text
//! J(Pi, alpha) = 1/2 alpha^T H alpha - alpha^T h_{Pi,beta} + eps H(Pi) + lambda/2 ||alpha||^2
//! ```
//!
//! over the ratio coefficients `alpha` (closed-form ridge solve) and the
//! transport plan `Pi` (entropic Sinkhorn), plus the plug-in SMI estimates.

use std::time::{Duration, Instant};

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::density_ratio::{
    combine_lin_term, compute_quad_term, paired_mean_feature, solve_alpha, LinTerm, QuadTerm, RatioModel, RidgeSolver,
};
use crate::error::{Error, Result};
use crate::kernels::{feature_columns, sample_basis, BasisSet};
use crate::transport::{
    cost_matrix, plan_entropy, sinkhorn_solve_warm, DualPotentials, SinkhornParams, TransportPlan,
};

/// Hyperparameters for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Number of basis functions (clamped to the smaller pooled sample set).
    pub b: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub beta: f64,
    /// Maximum number of outer (alpha, Pi) iterations.
    pub max_iters: usize,
    /// Outer stopping threshold on `||Pi_t - Pi_{t-1}||_F`.
    pub eta: f64,
    pub seed: u64,
    pub max_inner_iters: usize,
    pub marginal_tol: f64,
    /// Reuse the previous dual potentials for each Sinkhorn solve.
    pub warm_start: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let sk = SinkhornParams::default();
        Self {
            b: 200,
            epsilon: 0.3,
            lambda: 0.01,
            beta: 0.8,
            max_iters: 20,
            eta: 1e-9,
            seed: 0,
            max_inner_iters: sk.max_inner_iters,
            marginal_tol: sk.marginal_tol,
            warm_start: true,
        }
    }
}

impl EstimatorConfig {
    pub fn sinkhorn_params(&self) -> SinkhornParams {
        SinkhornParams {
            epsilon: self.epsilon,
            max_inner_iters: self.max_inner_iters,
            marginal_tol: self.marginal_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.b == 0 {
            return bad("b must be at least 1".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        self.sinkhorn_params().validate()
    }
}

/// Paired samples plus unpaired marginal pools. Rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub paired_x: Array2<f64>,
    pub paired_y: Array2<f64>,
    pub unpaired_x: Array2<f64>,
    pub unpaired_y: Array2<f64>,
}

impl SampleSet {
    pub fn new(
        paired_x: Array2<f64>,
        paired_y: Array2<f64>,
        unpaired_x: Array2<f64>,
        unpaired_y: Array2<f64>,
    ) -> Result<Self> {
        let s = Self {
            paired_x,
            paired_y,
            unpaired_x,
            unpaired_y,
        };
        s.validate()?;
        Ok(s)
    }

    /// Shape checks. Unpaired pools must be both empty or both non-empty.
    pub fn validate(&self) -> Result<()> {
        if self.paired_x.nrows() != self.paired_y.nrows() {
            return Err(Error::Shape(format!(
                "{} paired x rows vs {} paired y rows",
                self.paired_x.nrows(),
                self.paired_y.nrows()
            )));
        }
        if self.paired_x.ncols() != self.unpaired_x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.paired_x.ncols(),
                got: self.unpaired_x.ncols(),
            });
        }
        if self.paired_y.ncols() != self.unpaired_y.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.paired_y.ncols(),
                got: self.unpaired_y.ncols(),
            });
        }
        if (self.nx() == 0) != (self.ny() == 0) {
            return Err(Error::Shape("unpaired pools must be both empty or both non-empty".into()));
        }
        if self.n() + self.nx() == 0 {
            return Err(Error::EmptyPool("sample set"));
        }
        let finite = |a: &Array2<f64>| a.iter().all(|v| v.is_finite());
        if !(finite(&self.paired_x) && finite(&self.paired_y) && finite(&self.unpaired_x) && finite(&self.unpaired_y))
        {
            return Err(Error::NonFinite("samples"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.paired_x.nrows()
    }

    pub fn nx(&self) -> usize {
        self.unpaired_x.nrows()
    }

    pub fn ny(&self) -> usize {
        self.unpaired_y.nrows()
    }

    pub fn dim_x(&self) -> usize {
        self.paired_x.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.paired_y.ncols()
    }

    /// Paired x followed by unpaired x.
    pub fn pooled_x(&self) -> Array2<f64> {
        concatenate(Axis(0), &[self.paired_x.view(), self.unpaired_x.view()]).expect("validated dims")
    }

    /// Paired y followed by unpaired y.
    pub fn pooled_y(&self) -> Array2<f64> {
        concatenate(Axis(0), &[self.paired_y.view(), self.unpaired_y.view()]).expect("validated dims")
    }
}

/// Output of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: RatioModel,
    pub plan: TransportPlan,
    /// `J(Pi_0, alpha_1)` followed by `J(Pi_t, alpha_t)` after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    /// True when the plan change dropped below `eta` before `max_iters`.
    pub converged: bool,
    /// Scaling iterations used by each Sinkhorn solve.
    pub inner_iterations: Vec<usize>,
    /// False if any Sinkhorn solve hit its iteration cap.
    pub sinkhorn_converged: bool,
    pub beta: f64,
    pub epsilon: f64,
}

/// Wall-clock time spent in each phase of a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FitTimings {
    pub prepare: Duration,
    pub alpha_updates: Duration,
    pub cost_matrix: Duration,
    pub sinkhorn: Duration,
    pub iterations: usize,
}

impl FitTimings {
    /// Mean time of one outer iteration (alpha update, cost matrix, Sinkhorn).
    pub fn per_iteration(&self) -> Duration {
        let total = self.alpha_updates + self.cost_matrix + self.sinkhorn;
        total / self.iterations.max(1) as u32
    }
}

/// `1/2 a^T H a - a^T h + eps H(Pi) + lambda/2 ||a||^2`.
pub fn objective(
    quad: &QuadTerm,
    lin: &LinTerm,
    alpha: ArrayView1<'_, f64>,
    plan: &TransportPlan,
    lambda: f64,
    epsilon: f64,
) -> f64 {
    let quadratic = 0.5 * alpha.dot(&quad.matrix.dot(&alpha));
    let linear = alpha.dot(&lin.h);
    quadratic - linear + epsilon * plan_entropy(plan) + 0.5 * lambda * alpha.dot(&alpha)
}

/// Everything about a dataset that does not depend on `(lambda, beta)`:
/// the basis, kernel feature matrices and the quadratic term.
#[derive(Debug, Clone)]
pub struct Problem {
    pub basis: BasisSet,
    pub k_pair: Array2<f64>,
    pub l_pair: Array2<f64>,
    pub k_unpair: Array2<f64>,
    pub l_unpair: Array2<f64>,
    pub quad: QuadTerm,
    paired_mean: Array1<f64>,
    /// `(K_all 1 ∘ L_all 1) / (N_x N_y)`, used by the SMI estimate.
    cross_mean: Array1<f64>,
}

impl Problem {
    /// Sample the basis (seeded) from the pooled sets and build all features.
    pub fn prepare(data: &SampleSet, b: usize, seed: u64) -> Result<Self> {
        data.validate()?;
        let basis = sample_basis(data.pooled_x().view(), data.pooled_y().view(), b, seed)?;
        Self::with_basis(data, basis)
    }

    pub fn with_basis(data: &SampleSet, basis: BasisSet) -> Result<Self> {
        data.validate()?;
        if basis.dim_x() != data.dim_x() || basis.dim_y() != data.dim_y() {
            return Err(Error::Shape("basis dimensions do not match the data".into()));
        }
        let (k_pair, l_pair) = feature_columns(&basis, data.paired_x.view(), data.paired_y.view())?;
        let (k_unpair, l_unpair) = feature_columns(&basis, data.unpaired_x.view(), data.unpaired_y.view())?;
        let k_all = concatenate(Axis(1), &[k_pair.view(), k_unpair.view()]).expect("same b");
        let l_all = concatenate(Axis(1), &[l_pair.view(), l_unpair.view()]).expect("same b");
        let quad = compute_quad_term(k_all.view(), l_all.view())?;
        let cross_mean = cross_mean(k_all.view(), l_all.view());
        let paired_mean = paired_mean_feature(k_pair.view(), l_pair.view())?;
        Ok(Self {
            basis,
            k_pair,
            l_pair,
            k_unpair,
            l_unpair,
            quad,
            paired_mean,
            cross_mean,
        })
    }

    pub fn n(&self) -> usize {
        self.k_pair.ncols()
    }

    pub fn nx(&self) -> usize {
        self.k_unpair.ncols()
    }

    pub fn ny(&self) -> usize {
        self.l_unpair.ncols()
    }

    /// `h_{Pi,beta}` for a given plan.
    pub fn lin_term(&self, plan: &TransportPlan, beta: f64) -> Result<LinTerm> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
        }
        if beta > 0.0 && self.n() == 0 {
            return Err(Error::NoPairedSamples(beta));
        }
        combine_lin_term(&self.paired_mean, self.k_unpair.view(), self.l_unpair.view(), plan, beta)
    }

    /// Ridge solution using the paired samples alone (`beta = 1`); no plan involved.
    pub fn paired_only_alpha(&self, lambda: f64) -> Result<Array1<f64>> {
        if self.n() == 0 {
            return Err(Error::NoPairedSamples(1.0));
        }
        let lin = LinTerm {
            h: self.paired_mean.clone(),
            beta: 1.0,
        };
        solve_alpha(&self.quad, &lin, lambda)
    }

    /// Plug-in SMI over all pooled cross combinations, from cached features.
    pub fn smi(&self, alpha: ArrayView1<'_, f64>) -> f64 {
        let v = 0.5 * alpha.dot(&self.quad.matrix.dot(&alpha)) - alpha.dot(&self.cross_mean) + 0.5;
        v.max(0.0)
    }

    /// Run the alternating minimisation.
    pub fn fit(&self, config: &EstimatorConfig) -> Result<FitResult> {
        self.fit_inner(config, None)
    }

    pub fn fit_timed(&self, config: &EstimatorConfig) -> Result<(FitResult, FitTimings)> {
        let mut t = FitTimings::default();
        let r = self.fit_inner(config, Some(&mut t))?;
        Ok((r, t))
    }

    fn fit_inner(&self, config: &EstimatorConfig, mut timings: Option<&mut FitTimings>) -> Result<FitResult> {
        config.validate()?;
        let beta = config.beta;
        let lambda = config.lambda;
        let eps = config.epsilon;
        let params = config.sinkhorn_params();
        if beta > 0.0 && self.n() == 0 {
            return Err(Error::NoPairedSamples(beta));
        }
        if beta < 1.0 && (self.nx() == 0 || self.ny() == 0) {
            return Err(Error::NoUnpairedSamples(beta));
        }

        let mut clock = Instant::now();
        let mut lap = |slot: fn(&mut FitTimings) -> &mut Duration, timings: &mut Option<&mut FitTimings>| {
            if let Some(t) = timings.as_deref_mut() {
                let now = Instant::now();
                *slot(t) += now - clock;
                clock = now;
            }
        };

        let mut plan = TransportPlan::uniform(self.nx(), self.ny());
        let mut potentials: Option<DualPotentials> = None;
        let mut trace = Vec::with_capacity(config.max_iters + 1);
        let mut inner_iterations = Vec::with_capacity(config.max_iters);
        let mut sinkhorn_converged = true;
        let mut converged = false;
        let mut iterations = 0;
        let mut alpha = Array1::zeros(self.basis.len());
        let ridge = RidgeSolver::new(&self.quad, lambda)?;
        let mut lin = self.lin_term(&plan, beta)?;

        for t in 1..=config.max_iters {
            alpha = ridge.solve(&lin)?;
            let current = objective(&self.quad, &lin, alpha.view(), &plan, lambda, eps);
            if t == 1 {
                trace.push(current);
            }
            lap(|t| &mut t.alpha_updates, &mut timings);

            let candidate = if beta == 1.0 {
                // The plan term carries zero weight: the entropy maximiser is uniform.
                inner_iterations.push(0);
                TransportPlan::uniform(self.nx(), self.ny())
            } else {
                let cost = cost_matrix(alpha.view(), self.k_unpair.view(), self.l_unpair.view())?;
                lap(|t| &mut t.cost_matrix, &mut timings);
                let warm = if config.warm_start { potentials.as_ref() } else { None };
                let out = sinkhorn_solve_warm(&cost, beta, &params, warm)?;
                lap(|t| &mut t.sinkhorn, &mut timings);
                inner_iterations.push(out.iterations);
                sinkhorn_converged &= out.converged;
                potentials = Some(out.potentials);
                out.plan
            };

            let next_lin = self.lin_term(&candidate, beta)?;
            let value = objective(&self.quad, &next_lin, alpha.view(), &candidate, lambda, eps);
            iterations = t;
            lap(|t| &mut t.alpha_updates, &mut timings);
            // Near the fixed point the inexact inner solve can return a plan
            // that is worse than the current one by a rounding-sized margin.
            // Keep the current plan then: no further progress is possible.
            if value > current {
                trace.push(current);
                converged = true;
                break;
            }
            let change = candidate.frobenius_distance(&plan);
            plan = candidate;
            lin = next_lin;
            trace.push(value);
            if change <= config.eta {
                converged = true;
                break;
            }
        }
        if let Some(t) = timings {
            t.iterations = iterations;
        }

        Ok(FitResult {
            model: RatioModel::new(self.basis.clone(), alpha, lambda)?,
            plan,
            objective_trace: trace,
            iterations_run: iterations,
            converged,
            inner_iterations,
            sinkhorn_converged,
            beta,
            epsilon: eps,
        })
    }
}

fn cross_mean(k_all: ArrayView2<'_, f64>, l_all: ArrayView2<'_, f64>) -> Array1<f64> {
    let (nx, ny) = (k_all.ncols() as f64, l_all.ncols() as f64);
    k_all.sum_axis(Axis(1)) * &l_all.sum_axis(Axis(1)) / (nx * ny)
}

/// Sample a basis from `data` and run the alternating minimisation.
pub fn fit(data: &SampleSet, config: &EstimatorConfig) -> Result<FitResult> {
    config.validate()?;
    Problem::prepare(data, config.b, config.seed)?.fit(config)
}

/// Plug-in SMI: `1 / (2 N_x N_y) sum_ij (r(x_i, y_j) - 1)^2` over all pooled
/// cross combinations, evaluated through the factored kernel features.
pub fn smi_estimate(model: &RatioModel, data: &SampleSet) -> Result<f64> {
    data.validate()?;
    let (k, l) = feature_columns(&model.basis, data.pooled_x().view(), data.pooled_y().view())?;
    let quad = compute_quad_term(k.view(), l.view())?;
    let m = cross_mean(k.view(), l.view());
    let a = model.alpha.view();
    Ok((0.5 * a.dot(&quad.matrix.dot(&a)) - a.dot(&m) + 0.5).max(0.0))
}

/// Plan-weighted SMI: `beta/(2n) sum_i r(x_i, y_i) + (1-beta)/2 sum_ij pi_ij r(x'_i, y'_j) - 1/2`.
pub fn smi_estimate_paired(model: &RatioModel, plan: &TransportPlan, data: &SampleSet, beta: f64) -> Result<f64> {
    data.validate()?;
    let (kp, lp) = feature_columns(&model.basis, data.paired_x.view(), data.paired_y.view())?;
    let (ku, lu) = feature_columns(&model.basis, data.unpaired_x.view(), data.unpaired_y.view())?;
    if beta > 0.0 && data.n() == 0 {
        return Err(Error::NoPairedSamples(beta));
    }
    let paired = paired_mean_feature(kp.view(), lp.view())?;
    let lin = combine_lin_term(&paired, ku.view(), lu.view(), plan, beta)?;
    Ok(0.5 * model.alpha.dot(&lin.h) - 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Bandwidth;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
    }

    fn linear_set(n: usize, nx: usize, ny: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = normal(n, 1, &mut rng);
        let py = &px * 0.5 + &(normal(n, 1, &mut rng) * 0.1);
        let ux = normal(nx, 1, &mut rng);
        let uy = &normal(ny, 1, &mut rng) * 0.5 + &(normal(ny, 1, &mut rng) * 0.1);
        SampleSet::new(px, py, ux, uy).unwrap()
    }

    fn small_config() -> EstimatorConfig {
        EstimatorConfig {
            b: 40,
            ..Default::default()
        }
    }

    #[test]
    fn objective_examples() {
        let quad = QuadTerm {
            matrix: Array2::eye(3),
        };
        let lin = LinTerm {
            h: array![1.0, 2.0, 3.0],
            beta: 0.5,
        };
        let plan = TransportPlan::uniform(2, 2);
        let j = objective(&quad, &lin, Array1::zeros(3).view(), &plan, 0.1, 0.3);
        assert!((j - 0.3 * (-(4f64).ln() - 1.0)).abs() < 1e-15);
        assert!((j + 0.715888).abs() < 1e-6);

        let quad = QuadTerm {
            matrix: array![[2.0, 0.5], [0.5, 1.0]],
        };
        let lin = LinTerm {
            h: array![0.3, -0.7],
            beta: 1.0,
        };
        let alpha = solve_alpha(&quad, &lin, 0.0).unwrap();
        let j = objective(&quad, &lin, alpha.view(), &plan, 0.0, 0.0);
        assert!((j + 0.5 * alpha.dot(&lin.h)).abs() < 1e-14);
    }

    #[test]
    fn objective_matches_term_by_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = 4;
        let a = normal(b, b, &mut rng);
        let quad = QuadTerm { matrix: a.dot(&a.t()) };
        let lin = LinTerm {
            h: normal(1, b, &mut rng).row(0).to_owned(),
            beta: 0.3,
        };
        let alpha = normal(1, b, &mut rng).row(0).to_owned();
        let raw = Array2::from_shape_fn((3, 5), |_| rng.random::<f64>() + 0.1);
        let plan = TransportPlan::from_matrix(&raw / raw.sum()).unwrap();
        let (lambda, eps) = (0.07, 0.4);

        let mut quadratic = 0.0;
        for i in 0..b {
            for j in 0..b {
                quadratic += alpha[i] * quad.matrix[[i, j]] * alpha[j];
            }
        }
        let linear: f64 = (0..b).map(|i| alpha[i] * lin.h[i]).sum();
        let mut ent = 0.0;
        for &p in plan.matrix().iter() {
            ent += p * (p.ln() - 1.0);
        }
        let ridge: f64 = (0..b).map(|i| alpha[i] * alpha[i]).sum();
        let oracle = 0.5 * quadratic - linear + eps * ent + 0.5 * lambda * ridge;
        let j = objective(&quad, &lin, alpha.view(), &plan, lambda, eps);
        assert!((j - oracle).abs() < 1e-12);
    }

    #[test]
    fn beta_one_converges_in_one_iteration() {
        let data = linear_set(20, 60, 60, 1);
        let cfg = EstimatorConfig {
            beta: 1.0,
            ..small_config()
        };
        let r = fit(&data, &cfg).unwrap();
        assert_eq!(r.iterations_run, 1);
        assert!(r.converged);
        assert_eq!(r.objective_trace.len(), 2);

        // Same alpha as a ridge solve on the paired mean alone.
        let problem = Problem::prepare(&data, cfg.b, cfg.seed).unwrap();
        let direct = problem.paired_only_alpha(cfg.lambda).unwrap();
        for (a, b) in r.model.alpha.iter().zip(direct.iter()) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn trace_is_monotone_and_plan_feasible() {
        for seed in 0..4 {
            let data = linear_set(15, 50 + seed as usize * 10, 70, seed);
            let r = fit(&data, &small_config()).unwrap();
            for w in r.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", r.objective_trace);
            }
            assert!(r.plan.max_marginal_violation() <= 1e-6);
            assert_eq!(r.plan.nx(), data.nx());
            assert_eq!(r.plan.ny(), data.ny());
            assert_eq!(r.objective_trace.len(), r.iterations_run + 1);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data = linear_set(10, 40, 30, 5);
        let a = fit(&data, &small_config()).unwrap();
        let b = fit(&data, &small_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permuting_unpaired_x_permutes_plan_rows() {
        let data = linear_set(12, 40, 35, 6);
        let perm: Vec<usize> = (0..40).map(|i| (i * 7 + 3) % 40).collect();
        let mut shuffled = data.clone();
        shuffled.unpaired_x = data.unpaired_x.select(Axis(0), &perm);
        let cfg = small_config();
        let a = fit(&data, &cfg).unwrap();
        let b = fit(&shuffled, &cfg).unwrap();
        let cols: Vec<usize> = (0..35).collect();
        let expected = a.plan.permuted(&perm, &cols);
        for (p, q) in expected.matrix().iter().zip(b.plan.matrix().iter()) {
            assert!((p - q).abs() < 1e-10);
        }
        let sa = smi_estimate(&a.model, &data).unwrap();
        let sb = smi_estimate(&b.model, &shuffled).unwrap();
        assert!((sa - sb).abs() < 1e-10);
    }

    #[test]
    fn rectangular_plans() {
        let data = linear_set(10, 80, 30, 7);
        let r = fit(&data, &small_config()).unwrap();
        assert_eq!(r.plan.matrix().dim(), (80, 30));
        assert!(r.plan.max_marginal_violation() <= 1e-6);
    }

    #[test]
    fn fit_errors() {
        let mut data = linear_set(5, 20, 20, 1);
        data.paired_x = Array2::zeros((0, 1));
        data.paired_y = Array2::zeros((0, 1));
        assert!(matches!(fit(&data, &small_config()), Err(Error::NoPairedSamples(_))));
        let cfg = EstimatorConfig {
            beta: 0.0,
            ..small_config()
        };
        assert!(fit(&data, &cfg).is_ok());

        let data = linear_set(5, 20, 20, 1);
        for bad in [
            EstimatorConfig { beta: 1.2, ..small_config() },
            EstimatorConfig { lambda: -1.0, ..small_config() },
            EstimatorConfig { epsilon: 0.0, ..small_config() },
            EstimatorConfig { max_iters: 0, ..small_config() },
            EstimatorConfig { b: 0, ..small_config() },
        ] {
            assert!(matches!(fit(&data, &bad), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn paired_only_sample_set() {
        let full = linear_set(40, 1, 1, 3);
        let data = SampleSet::new(
            full.paired_x.clone(),
            full.paired_y.clone(),
            Array2::zeros((0, 1)),
            Array2::zeros((0, 1)),
        )
        .unwrap();
        let cfg = EstimatorConfig {
            beta: 1.0,
            ..small_config()
        };
        let r = fit(&data, &cfg).unwrap();
        assert_eq!(r.plan.matrix().dim(), (0, 0));
        assert!(smi_estimate(&r.model, &data).unwrap() > 0.0);
        let cfg = EstimatorConfig {
            beta: 0.5,
            ..small_config()
        };
        assert!(matches!(fit(&data, &cfg), Err(Error::NoUnpairedSamples(_))));
    }

    #[test]
    fn sample_set_validation() {
        let z = |r: usize, c: usize| Array2::<f64>::zeros((r, c));
        assert!(SampleSet::new(z(3, 1), z(2, 1), z(4, 1), z(4, 1)).is_err());
        assert!(SampleSet::new(z(3, 1), z(3, 1), z(4, 2), z(4, 1)).is_err());
        assert!(SampleSet::new(z(3, 1), z(3, 1), z(4, 1), z(0, 1)).is_err());
        assert!(SampleSet::new(z(0, 1), z(0, 2), z(4, 1), z(5, 2)).is_ok());
    }

    fn unit_model(b: usize) -> RatioModel {
        let basis = BasisSet::from_centres(
            Array2::zeros((b, 1)),
            Array2::zeros((b, 1)),
            Bandwidth::new(1.0).unwrap(),
            Bandwidth::new(1.0).unwrap(),
        )
        .unwrap();
        RatioModel::new(basis, Array1::zeros(b), 0.0).unwrap()
    }

    #[test]
    fn smi_examples() {
        let data = linear_set(5, 7, 6, 2);
        // alpha = 0: every term is (0 - 1)^2 / 2.
        let zero = unit_model(3);
        assert!((smi_estimate(&zero, &data).unwrap() - 0.5).abs() < 1e-15);

        // A single basis function with an enormous bandwidth is ~1 everywhere.
        let basis = BasisSet::from_centres(
            array![[0.0]],
            array![[0.0]],
            Bandwidth::new(1e9).unwrap(),
            Bandwidth::new(1e9).unwrap(),
        )
        .unwrap();
        let one = RatioModel::new(basis, array![1.0], 0.0).unwrap();
        assert!(smi_estimate(&one, &data).unwrap() < 1e-12);
        let plan = TransportPlan::uniform(7, 6);
        for beta in [0.0, 0.4, 1.0] {
            assert!(smi_estimate_paired(&one, &plan, &data, beta).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn smi_matches_double_loop() {
        let data = linear_set(6, 9, 8, 4);
        let r = fit(&data, &small_config()).unwrap();
        let xs = data.pooled_x();
        let ys = data.pooled_y();
        let grid = r.model.evaluate_grid(xs.view(), ys.view()).unwrap();
        let oracle = grid.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>() / (2.0 * grid.len() as f64);
        let s = smi_estimate(&r.model, &data).unwrap();
        assert!((s - oracle).abs() < 1e-12 * (1.0 + oracle));

        let beta = 0.3;
        let pr = r.model.evaluate_pairs(data.paired_x.view(), data.paired_y.view()).unwrap();
        let ug = r.model.evaluate_grid(data.unpaired_x.view(), data.unpaired_y.view()).unwrap();
        let mut oracle = beta / (2.0 * 6.0) * pr.sum() - 0.5;
        for i in 0..9 {
            for j in 0..8 {
                oracle += 0.5 * (1.0 - beta) * r.plan.matrix()[[i, j]] * ug[[i, j]];
            }
        }
        let s = smi_estimate_paired(&r.model, &r.plan, &data, beta).unwrap();
        assert!((s - oracle).abs() < 1e-12);
    }

    #[test]
    fn smi_paired_beta_one_constant_ratio() {
        let data = linear_set(4, 5, 5, 9);
        let basis = BasisSet::from_centres(
            array![[0.0]],
            array![[0.0]],
            Bandwidth::new(1e9).unwrap(),
            Bandwidth::new(1e9).unwrap(),
        )
        .unwrap();
        let two = RatioModel::new(basis, array![2.0], 0.0).unwrap();
        let s = smi_estimate_paired(&two, &TransportPlan::uniform(5, 5), &data, 1.0).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cached_smi_matches_free_function() {
        let data = linear_set(10, 30, 30, 12);
        let problem = Problem::prepare(&data, 30, 1).unwrap();
        let r = problem.fit(&small_config()).unwrap();
        let a = problem.smi(r.model.alpha.view());
        let b = smi_estimate(&r.model, &data).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
