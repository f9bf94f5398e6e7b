//! Hold-out selection of `(lambda, beta)`.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density_ratio::{compute_quad_term, RatioModel};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, FitResult, Problem, SampleSet};
use crate::kernels::{feature_columns, sample_basis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Fraction of the paired samples held out for scoring.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for CvGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.1, 0.01, 0.001, 0.0001],
            betas: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            holdout_fraction: 0.5,
            seed: 0,
        }
    }
}

impl CvGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.lambdas.is_empty() || self.betas.is_empty() {
            return bad("CV grid must be non-empty".into());
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return bad(format!("grid lambda must be nonnegative, got {l}"));
        }
        if let Some(b) = self.betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return bad(format!("grid beta must lie in [0, 1], got {b}"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!("holdout_fraction must lie in (0, 1), got {}", self.holdout_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda: f64,
    pub beta: f64,
    /// Hold-out error; `+inf` if the fit failed numerically.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub scores: Vec<CvScore>,
    pub best_lambda: f64,
    pub best_beta: f64,
    pub best_score: f64,
}

/// `1/(2|D|^2) sum_{x in D, y in D} r(x, y)^2 - 1/|D| sum_{(x, y) in D} r(x, y)`.
///
/// The first sum runs over all cross combinations and is computed as
/// `alpha^T (K K^T ∘ L L^T) alpha`.
pub fn holdout_error(model: &RatioModel, test_x: ArrayView2<'_, f64>, test_y: ArrayView2<'_, f64>) -> Result<f64> {
    let m = test_x.nrows();
    if test_y.nrows() != m {
        return Err(Error::Shape(format!("{m} test x rows vs {} test y rows", test_y.nrows())));
    }
    if m < 2 {
        return Err(Error::InsufficientCvSamples(m));
    }
    let (k, l) = feature_columns(&model.basis, test_x, test_y)?;
    let quad = compute_quad_term(k.view(), l.view())?;
    let a = model.alpha.view();
    let squares = a.dot(&quad.matrix.dot(&a));
    let pairs = model.evaluate_pairs(test_x, test_y)?.sum() / m as f64;
    Ok(0.5 * squares - pairs)
}

/// Seeded split of the paired rows into (train, test) index lists.
pub fn holdout_split(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ((n as f64 * holdout_fraction).round() as usize).max(2).min(n.saturating_sub(2));
    let (te, tr) = order.split_at(test);
    (tr.to_vec(), te.to_vec())
}

fn is_better(c: &CvScore, best: &CvScore) -> bool {
    if c.score != best.score {
        return c.score < best.score;
    }
    if c.lambda != best.lambda {
        return c.lambda > best.lambda;
    }
    c.beta > best.beta
}

/// Score every grid point on a single seeded hold-out split of the paired
/// samples. Every fit uses all unpaired samples and one shared basis drawn
/// from the training pools.
pub fn cross_validate(data: &SampleSet, config: &EstimatorConfig, grid: &CvGrid) -> Result<CvReport> {
    grid.validate()?;
    data.validate()?;
    let n = data.n();
    if n < 4 {
        return Err(Error::InsufficientCvSamples(n));
    }
    let (tr, te) = holdout_split(n, grid.holdout_fraction, grid.seed);
    let train = SampleSet {
        paired_x: data.paired_x.select(Axis(0), &tr),
        paired_y: data.paired_y.select(Axis(0), &tr),
        unpaired_x: data.unpaired_x.clone(),
        unpaired_y: data.unpaired_y.clone(),
    };
    let test_x = data.paired_x.select(Axis(0), &te);
    let test_y = data.paired_y.select(Axis(0), &te);

    let basis = sample_basis(train.pooled_x().view(), train.pooled_y().view(), config.b, config.seed)?;
    let problem = Problem::with_basis(&train, basis)?;

    let mut scores = Vec::with_capacity(grid.lambdas.len() * grid.betas.len());
    let mut last_err = None;
    for &lambda in &grid.lambdas {
        for &beta in &grid.betas {
            let cfg = EstimatorConfig { lambda, beta, ..*config };
            let score = match problem.fit(&cfg).and_then(|r| holdout_error(&r.model, test_x.view(), test_y.view())) {
                Ok(s) if s.is_finite() => s,
                Ok(_) => f64::INFINITY,
                Err(e) if e.is_numerical() || matches!(e, Error::NoUnpairedSamples(_)) => {
                    log::warn!("CV point lambda={lambda} beta={beta} skipped: {e}");
                    last_err = Some(e);
                    f64::INFINITY
                }
                Err(e) => return Err(e),
            };
            log::debug!("CV lambda={lambda} beta={beta} score={score}");
            scores.push(CvScore { lambda, beta, score });
        }
    }
    let best = *scores.iter().fold(&scores[0], |b, c| if is_better(c, b) { c } else { b });
    if best.score == f64::INFINITY {
        return Err(last_err.unwrap_or(Error::NonFinite("every CV score")));
    }
    Ok(CvReport {
        scores,
        best_lambda: best.lambda,
        best_beta: best.beta,
        best_score: best.score,
    })
}

/// Run [`cross_validate`], then fit the full data at the selected `(lambda, beta)`.
pub fn select_and_fit(data: &SampleSet, config: &EstimatorConfig, grid: &CvGrid) -> Result<(CvReport, FitResult)> {
    let report = cross_validate(data, config, grid)?;
    let cfg = EstimatorConfig {
        lambda: report.best_lambda,
        beta: report.best_beta,
        ..*config
    };
    let fit = crate::estimator::fit(data, &cfg)?;
    Ok((report, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticKind, SyntheticSpec};
    use crate::kernels::{Bandwidth, BasisSet};
    use ndarray::array;

    /// A single flat basis function, so `r` is the constant `c` everywhere.
    fn constant_model(c: f64) -> RatioModel {
        let basis = BasisSet::from_centres(
            array![[0.0]],
            array![[0.0]],
            Bandwidth::new(1e9).unwrap(),
            Bandwidth::new(1e9).unwrap(),
        )
        .unwrap();
        RatioModel::new(basis, array![c], 0.0).unwrap()
    }

    #[test]
    fn holdout_error_constant_ratio() {
        let x = array![[0.3], [1.0], [-2.0]];
        let y = array![[5.0], [0.1], [2.0]];
        assert!((holdout_error(&constant_model(1.0), x.view(), y.view()).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(holdout_error(&constant_model(0.0), x.view(), y.view()).unwrap(), 0.0);
        for c in [0.5, 2.0, 3.0] {
            let v = holdout_error(&constant_model(c), x.view(), y.view()).unwrap();
            assert!((v - (c * c / 2.0 - c)).abs() < 1e-11);
            assert!(v > -0.5);
        }
    }

    #[test]
    fn holdout_error_matches_double_loop() {
        let d = generate(&SyntheticSpec::new(SyntheticKind::Linear, 30, 40, 40, 2)).unwrap();
        let r = crate::estimator::fit(&d, &EstimatorConfig { b: 30, ..Default::default() }).unwrap();
        let (tx, ty) = (d.paired_x.view(), d.paired_y.view());
        let m = tx.nrows();
        let mut squares = 0.0;
        let mut pairs = 0.0;
        for i in 0..m {
            for j in 0..m {
                let v = crate::density_ratio::ratio_evaluate(&r.model, tx.row(i), ty.row(j)).unwrap();
                squares += v * v;
                if i == j {
                    pairs += v;
                }
            }
        }
        let oracle = squares / (2.0 * (m * m) as f64) - pairs / m as f64;
        let v = holdout_error(&r.model, tx, ty).unwrap();
        assert!((v - oracle).abs() < 1e-12 * (1.0 + oracle.abs()), "{v} {oracle}");
    }

    #[test]
    fn holdout_error_needs_two() {
        let x = array![[0.3]];
        assert!(matches!(
            holdout_error(&constant_model(1.0), x.view(), x.view()),
            Err(Error::InsufficientCvSamples(1))
        ));
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = holdout_split(10, 0.5, 1);
        assert_eq!((tr.len(), te.len()), (5, 5));
        let (tr, te) = holdout_split(4, 0.1, 1);
        assert_eq!((tr.len(), te.len()), (2, 2));
        let mut all: Vec<usize> = tr.iter().chain(te.iter()).copied().collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(holdout_split(9, 0.5, 3), holdout_split(9, 0.5, 3));
    }

    #[test]
    fn tie_break_prefers_larger_lambda_then_beta() {
        let s = |lambda, beta, score| CvScore { lambda, beta, score };
        assert!(is_better(&s(0.1, 0.2, -0.45), &s(0.1, 0.2, -0.40)));
        assert!(!is_better(&s(0.1, 0.2, -0.40), &s(0.1, 0.2, -0.45)));
        assert!(is_better(&s(0.1, 0.2, -0.4), &s(0.01, 1.0, -0.4)));
        assert!(is_better(&s(0.1, 0.8, -0.4), &s(0.1, 0.6, -0.4)));
    }

    fn small() -> EstimatorConfig {
        EstimatorConfig {
            b: 40,
            ..Default::default()
        }
    }

    #[test]
    fn single_point_grid() {
        let d = generate(&SyntheticSpec::new(SyntheticKind::Linear, 12, 40, 40, 5)).unwrap();
        let grid = CvGrid {
            lambdas: vec![0.05],
            betas: vec![0.3],
            ..Default::default()
        };
        let r = cross_validate(&d, &small(), &grid).unwrap();
        assert_eq!((r.best_lambda, r.best_beta), (0.05, 0.3));
        assert_eq!(r.scores.len(), 1);
    }

    #[test]
    fn report_is_argmin_and_deterministic() {
        let d = generate(&SyntheticSpec::new(SyntheticKind::Linear, 16, 50, 50, 6)).unwrap();
        let grid = CvGrid::default();
        let a = cross_validate(&d, &small(), &grid).unwrap();
        assert_eq!(a.scores.len(), 20);
        let min = a.scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_score, min);
        let best = a
            .scores
            .iter()
            .find(|s| s.lambda == a.best_lambda && s.beta == a.best_beta)
            .unwrap();
        assert_eq!(best.score, min);
        assert_eq!(a, cross_validate(&d, &small(), &grid).unwrap());
    }

    #[test]
    fn cv_errors() {
        let d = generate(&SyntheticSpec::new(SyntheticKind::Linear, 3, 20, 20, 1)).unwrap();
        assert!(matches!(
            cross_validate(&d, &small(), &CvGrid::default()),
            Err(Error::InsufficientCvSamples(3))
        ));
        let d = generate(&SyntheticSpec::new(SyntheticKind::Linear, 8, 20, 20, 1)).unwrap();
        for grid in [
            CvGrid { lambdas: vec![], ..Default::default() },
            CvGrid { betas: vec![1.5], ..Default::default() },
            CvGrid { holdout_fraction: 1.0, ..Default::default() },
        ] {
            assert!(matches!(cross_validate(&d, &small(), &grid), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn paired_only_data_selects_beta_one() {
        let d = generate(&SyntheticSpec::new(SyntheticKind::Linear, 20, 0, 0, 2)).unwrap();
        let grid = CvGrid::default();
        let r = cross_validate(&d, &small(), &grid).unwrap();
        assert_eq!(r.best_beta, 1.0);
        assert_eq!(r.scores.iter().filter(|s| s.score.is_finite()).count(), 4);
    }

    #[test]
    fn select_and_fit_uses_best() {
        let d = generate(&SyntheticSpec::new(SyntheticKind::Linear, 10, 30, 30, 3)).unwrap();
        let (report, fit) = select_and_fit(&d, &small(), &CvGrid::default()).unwrap();
        assert_eq!(fit.model.lambda, report.best_lambda);
        assert_eq!(fit.beta, report.best_beta);
        assert_eq!(fit.plan.matrix().dim(), (30, 30));
    }
}
