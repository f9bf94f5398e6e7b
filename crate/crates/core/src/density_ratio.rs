//! Least-squares fit of the product-kernel density-ratio model
//! `r(x, y) = sum_l alpha_l K(x~_l, x) L(y~_l, y)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::kernels::{feature_columns, kernel_columns, BasisSet};
use crate::transport::TransportPlan;

/// A fitted ratio model. `alpha` is unconstrained, so `r` can go negative.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    pub basis: BasisSet,
    pub alpha: Array1<f64>,
    pub lambda: f64,
}

impl RatioModel {
    pub fn new(basis: BasisSet, alpha: Array1<f64>, lambda: f64) -> Result<Self> {
        if alpha.len() != basis.len() {
            return Err(Error::Shape(format!(
                "alpha has length {}, basis has {} functions",
                alpha.len(),
                basis.len()
            )));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("alpha"));
        }
        Ok(Self { basis, alpha, lambda })
    }

    /// `r(x_i, y_i)` for each row pair.
    pub fn evaluate_pairs(&self, xs: ArrayView2<'_, f64>, ys: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if xs.nrows() != ys.nrows() {
            return Err(Error::Shape(format!("{} x rows vs {} y rows", xs.nrows(), ys.nrows())));
        }
        let (k, l) = feature_columns(&self.basis, xs, ys)?;
        let mut out = Array1::zeros(xs.nrows());
        for ((a, krow), lrow) in self.alpha.iter().zip(k.outer_iter()).zip(l.outer_iter()) {
            Zip::from(&mut out)
                .and(&krow)
                .and(&lrow)
                .for_each(|o, &kv, &lv| *o += a * kv * lv);
        }
        Ok(out)
    }

    /// `r(x_i, y_j)` for every combination, laid out `N_x x N_y`.
    pub fn evaluate_grid(&self, xs: ArrayView2<'_, f64>, ys: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let (k, l) = feature_columns(&self.basis, xs, ys)?;
        Ok(crate::transport::cost_matrix(self.alpha.view(), k.view(), l.view())?.0)
    }

    /// Ratio value for reporting: negative model outputs are clamped to zero.
    pub fn evaluate_clamped(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(ratio_evaluate(self, x, y)?.max(0.0))
    }
}

/// `r_alpha(x, y)` at a single point.
pub fn ratio_evaluate(model: &RatioModel, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != model.basis.dim_x() {
        return Err(Error::DimensionMismatch {
            expected: model.basis.dim_x(),
            got: x.len(),
        });
    }
    if y.len() != model.basis.dim_y() {
        return Err(Error::DimensionMismatch {
            expected: model.basis.dim_y(),
            got: y.len(),
        });
    }
    let x2 = x.insert_axis(Axis(0));
    let y2 = y.insert_axis(Axis(0));
    let k = kernel_columns(model.basis.x_basis.view(), x2, model.basis.sigma_x)?;
    let l = kernel_columns(model.basis.y_basis.view(), y2, model.basis.sigma_y)?;
    Ok(model
        .alpha
        .iter()
        .zip(k.iter().zip(l.iter()))
        .map(|(a, (kv, lv))| a * kv * lv)
        .sum())
}

/// The `b x b` matrix `H`: mean of `phi phi^T` over all cross combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTerm {
    pub matrix: Array2<f64>,
}

impl QuadTerm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// The `b`-vector `h_{Pi,beta}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinTerm {
    pub h: Array1<f64>,
    pub beta: f64,
}

/// `H = (K K^T) ∘ (L L^T) / (N_x N_y)`.
///
/// This equals the explicit double sum of `phi(x_i, y_j) phi(x_i, y_j)^T`
/// because `phi = k ∘ l` and the sums over `i` and `j` factor.
pub fn compute_quad_term(k_all: ArrayView2<'_, f64>, l_all: ArrayView2<'_, f64>) -> Result<QuadTerm> {
    if k_all.nrows() != l_all.nrows() {
        return Err(Error::Shape(format!(
            "K has {} rows, L has {}",
            k_all.nrows(),
            l_all.nrows()
        )));
    }
    let (nx, ny) = (k_all.ncols(), l_all.ncols());
    if nx == 0 || ny == 0 {
        return Err(Error::EmptyPool("H needs at least one sample per side"));
    }
    let kk = k_all.dot(&k_all.t());
    let ll = l_all.dot(&l_all.t());
    let scale = 1.0 / (nx as f64 * ny as f64);
    let mut h = kk * &ll * scale;
    // Gram products are symmetric in exact arithmetic; make it exact.
    let b = h.nrows();
    for i in 0..b {
        for j in i + 1..b {
            let m = 0.5 * (h[[i, j]] + h[[j, i]]);
            h[[i, j]] = m;
            h[[j, i]] = m;
        }
    }
    Ok(QuadTerm { matrix: h })
}

/// Paired part of `h`: `(1/n) sum_i k(x_i) ∘ l(y_i)` (unweighted by beta).
pub fn paired_mean_feature(k_pair: ArrayView2<'_, f64>, l_pair: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if k_pair.dim() != l_pair.dim() {
        return Err(Error::Shape(format!(
            "paired K is {:?}, paired L is {:?}",
            k_pair.dim(),
            l_pair.dim()
        )));
    }
    let n = k_pair.ncols();
    if n == 0 {
        return Ok(Array1::zeros(k_pair.nrows()));
    }
    Ok((&k_pair * &l_pair).sum_axis(Axis(1)) / n as f64)
}

/// Plan-weighted part of `h`: `sum_ij pi_ij k(x'_i) ∘ l(y'_j)`.
pub fn plan_mean_feature(
    k_unpair: ArrayView2<'_, f64>,
    l_unpair: ArrayView2<'_, f64>,
    plan: &TransportPlan,
) -> Result<Array1<f64>> {
    if k_unpair.nrows() != l_unpair.nrows() {
        return Err(Error::Shape("unpaired K and L have different row counts".into()));
    }
    if plan.nx() != k_unpair.ncols() || plan.ny() != l_unpair.ncols() {
        return Err(Error::Shape(format!(
            "plan is {}x{}, expected {}x{}",
            plan.nx(),
            plan.ny(),
            k_unpair.ncols(),
            l_unpair.ncols()
        )));
    }
    // (K Pi) is b x n_y; then a row-wise dot with L.
    let kp = k_unpair.dot(&plan.matrix());
    Ok((&kp * &l_unpair).sum_axis(Axis(1)))
}

/// `h = (beta/n) sum_i phi(x_i, y_i) + (1 - beta) sum_ij pi_ij phi(x'_i, y'_j)`.
pub fn compute_lin_term(
    k_pair: ArrayView2<'_, f64>,
    l_pair: ArrayView2<'_, f64>,
    k_unpair: ArrayView2<'_, f64>,
    l_unpair: ArrayView2<'_, f64>,
    plan: &TransportPlan,
    beta: f64,
) -> Result<LinTerm> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    let b = k_pair.nrows();
    if l_pair.nrows() != b || k_unpair.nrows() != b || l_unpair.nrows() != b {
        return Err(Error::Shape("feature matrices disagree on basis count".into()));
    }
    if beta > 0.0 && k_pair.ncols() == 0 {
        return Err(Error::NoPairedSamples(beta));
    }
    let paired = paired_mean_feature(k_pair, l_pair)?;
    combine_lin_term(&paired, k_unpair, l_unpair, plan, beta)
}

/// `beta * paired + (1 - beta) * plan_mean_feature(...)`, for callers that cache
/// the paired mean.
pub fn combine_lin_term(
    paired: &Array1<f64>,
    k_unpair: ArrayView2<'_, f64>,
    l_unpair: ArrayView2<'_, f64>,
    plan: &TransportPlan,
    beta: f64,
) -> Result<LinTerm> {
    let mut h = paired * beta;
    if beta < 1.0 {
        if k_unpair.ncols() == 0 || l_unpair.ncols() == 0 {
            return Err(Error::NoUnpairedSamples(beta));
        }
        let unpaired = plan_mean_feature(k_unpair, l_unpair, plan)?;
        h.scaled_add(1.0 - beta, &unpaired);
    } else if plan.nx() != k_unpair.ncols() || plan.ny() != l_unpair.ncols() {
        return Err(Error::Shape("plan shape does not match unpaired samples".into()));
    }
    Ok(LinTerm { h, beta })
}

/// Solve `(H + lambda I) alpha = h` by Cholesky factorisation.
///
/// If the factorisation breaks down, it is retried once with
/// `lambda + 1e-10 trace(H) / b`.
pub fn solve_alpha(quad: &QuadTerm, lin: &LinTerm, lambda: f64) -> Result<Array1<f64>> {
    RidgeSolver::new(quad, lambda)?.solve(lin)
}

/// A factored `H + lambda I`, reusable across right-hand sides. `H` and
/// `lambda` stay fixed during a fit, so only `h` changes per iteration.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    system: Array2<f64>,
    factor: Cholesky,
}

impl RidgeSolver {
    pub fn new(quad: &QuadTerm, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
        }
        if quad.matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge system"));
        }
        let b = quad.dim();
        let jitter = 1e-10 * quad.matrix.diag().sum() / b as f64;
        for lam in [lambda, lambda + jitter] {
            let mut system = quad.matrix.clone();
            system.diag_mut().mapv_inplace(|d| d + lam);
            if let Some(factor) = Cholesky::new(&system) {
                if lam != lambda {
                    log::warn!("H + lambda I is numerically singular; solved with jitter {jitter:.3e}");
                }
                return Ok(Self { system, factor });
            }
            if jitter == 0.0 {
                break;
            }
        }
        Err(Error::SingularSystem)
    }

    pub fn solve(&self, lin: &LinTerm) -> Result<Array1<f64>> {
        let b = self.system.nrows();
        if lin.h.len() != b {
            return Err(Error::Shape(format!("H is {b}x{b}, h has length {}", lin.h.len())));
        }
        if lin.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge system"));
        }
        let mut alpha = self.factor.solve(lin.h.view());
        // One step of iterative refinement.
        let resid = &lin.h - &self.system.dot(&alpha);
        alpha += &self.factor.solve(resid.view());
        Ok(alpha)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    fn new(a: &Array2<f64>) -> Option<Self> {
        let n = a.nrows();
        let max_diag = a.diag().iter().fold(0.0f64, |m, &d| m.max(d.abs()));
        let floor = n as f64 * f64::EPSILON * max_diag;
        // Row-major storage: row i holds L[i, 0..=i], so every inner product
        // runs over two contiguous prefixes.
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (upper, lower) = l.split_at_mut(i * n);
                let row_i = &lower[..n];
                let row_j = if j == i { row_i } else { &upper[j * n..j * n + n] };
                let s: f64 = row_i[..j].iter().zip(&row_j[..j]).map(|(x, y)| x * y).sum();
                if j == i {
                    let d = a[[i, i]] - s;
                    if !(d.is_finite() && d > floor) {
                        return None;
                    }
                    lower[i] = d.sqrt();
                } else {
                    let v = (a[[i, j]] - s) / upper[j * n + j];
                    lower[j] = v;
                }
            }
        }
        Some(Self {
            l: Array2::from_shape_vec((n, n), l).expect("n x n"),
        })
    }

    fn solve(&self, rhs: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.l.nrows();
        let mut y = rhs.to_owned();
        for i in 0..n {
            let row = self.l.row(i);
            let s: f64 = row.iter().take(i).zip(y.iter()).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[[k, i]] * y[k];
            }
            y[i] = s / self.l[[i, i]];
        }
        y
    }
}
