//! Timing sweeps over the unpaired sample size.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{generate, SyntheticKind, SyntheticSpec};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Problem};

/// One row of a sweep. Times are in seconds; the phase times are the best
/// (smallest) over the repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    /// `n_x = n_y`.
    pub size: usize,
    /// Basis sampling, feature matrices and `H`.
    pub prepare_seconds: f64,
    /// Alternating minimisation only.
    pub fit_seconds: f64,
    pub iterations: usize,
    /// Mean time of one outer iteration.
    pub per_iteration_seconds: f64,
    /// Mean time of one cost-matrix build.
    pub cost_matrix_seconds: f64,
    /// Mean Sinkhorn time per outer iteration.
    pub sinkhorn_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    /// Paired sample count.
    pub n: usize,
    pub dim: usize,
    pub repeats: usize,
    pub estimator: EstimatorConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 400, 800],
            n: 100,
            dim: 2,
            repeats: 3,
            estimator: EstimatorConfig::default(),
        }
    }
}

/// Fit random `dim`-dimensional data at every size and record phase timings.
pub fn scaling_sweep(config: &SweepConfig) -> Result<Vec<BenchmarkRow>> {
    if config.sizes.is_empty() {
        return Err(Error::InvalidParameter("size list is empty".into()));
    }
    if config.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    config.estimator.validate()?;
    let mut rows = Vec::with_capacity(config.sizes.len());
    for &size in &config.sizes {
        let spec = SyntheticSpec {
            dim: Some(config.dim),
            ..SyntheticSpec::new(SyntheticKind::Random, config.n, size, size, config.estimator.seed)
        };
        let data = generate(&spec)?;
        let mut best: Option<BenchmarkRow> = None;
        for _ in 0..config.repeats {
            let start = Instant::now();
            let problem = Problem::prepare(&data, config.estimator.b, config.estimator.seed)?;
            let prepare = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let (_, t) = problem.fit_timed(&config.estimator)?;
            let fit = start.elapsed().as_secs_f64();
            let iters = t.iterations.max(1) as f64;
            let row = BenchmarkRow {
                size,
                prepare_seconds: prepare,
                fit_seconds: fit,
                iterations: t.iterations,
                per_iteration_seconds: t.per_iteration().as_secs_f64(),
                cost_matrix_seconds: t.cost_matrix.as_secs_f64() / iters,
                sinkhorn_seconds: t.sinkhorn.as_secs_f64() / iters,
            };
            best = Some(match best {
                None => row,
                Some(b) => BenchmarkRow {
                    size,
                    prepare_seconds: b.prepare_seconds.min(row.prepare_seconds),
                    fit_seconds: b.fit_seconds.min(row.fit_seconds),
                    iterations: row.iterations,
                    per_iteration_seconds: b.per_iteration_seconds.min(row.per_iteration_seconds),
                    cost_matrix_seconds: b.cost_matrix_seconds.min(row.cost_matrix_seconds),
                    sinkhorn_seconds: b.sinkhorn_seconds.min(row.sinkhorn_seconds),
                },
            });
        }
        let row = best.expect("repeats >= 1");
        log::info!(
            "size {size}: {:.3e} s per iteration over {} iterations",
            row.per_iteration_seconds,
            row.iterations
        );
        rows.push(row);
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("need at least two (x, y) points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("x values must not all be equal".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let xs = [100.0, 200.0, 400.0, 800.0];
        for p in [1.0, 2.0, 2.5] {
            let ys: Vec<f64> = xs.iter().map(|x: &f64| 3e-7 * x.powf(p)).collect();
            assert!((loglog_slope(&xs, &ys).unwrap() - p).abs() < 1e-12);
        }
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(loglog_slope(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn sweep_has_one_row_per_size() {
        let cfg = SweepConfig {
            sizes: vec![20, 40],
            n: 10,
            repeats: 1,
            estimator: EstimatorConfig {
                b: 20,
                ..Default::default()
            },
            ..Default::default()
        };
        let rows = scaling_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].size, 40);
        assert!(rows.iter().all(|r| r.per_iteration_seconds > 0.0 && r.iterations >= 1));
        assert!(scaling_sweep(&SweepConfig { sizes: vec![], ..cfg }).is_err());
    }
}
