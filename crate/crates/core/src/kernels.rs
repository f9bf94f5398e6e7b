//! Gaussian kernels, median-heuristic bandwidths and the product basis.
//!
//! The ratio model uses the factored feature map
//! `phi(x, y)_l = K(x~_l, x) * L(y~_l, y)`, so everything downstream works on
//! two `b x N` matrices of kernel values (one per variable) rather than on
//! `b`-vectors per `(x, y)` combination.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pools above this size use a seeded subsample for the median heuristic.
pub const MEDIAN_EXACT_LIMIT: usize = 2000;

const MEDIAN_DEFAULT_SEED: u64 = 0x5eed_6a55;

/// Width of a Gaussian kernel. Always positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Self(sigma))
        } else {
            Err(Error::InvalidBandwidth(sigma))
        }
    }

    #[inline]
    pub fn sigma(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Bandwidth {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Bandwidth> for f64 {
    fn from(b: Bandwidth) -> f64 {
        b.0
    }
}

/// Basis centres for the product-kernel ratio model.
///
/// `x_basis` and `y_basis` have the same number of rows `b`. Row `l` of each
/// is an exact copy of the pooled sample at `x_indices[l]` / `y_indices[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub x_basis: Array2<f64>,
    pub y_basis: Array2<f64>,
    pub x_indices: Vec<usize>,
    pub y_indices: Vec<usize>,
    pub sigma_x: Bandwidth,
    pub sigma_y: Bandwidth,
}

impl BasisSet {
    /// Build a basis from explicit centres.
    pub fn from_centres(
        x_basis: Array2<f64>,
        y_basis: Array2<f64>,
        sigma_x: Bandwidth,
        sigma_y: Bandwidth,
    ) -> Result<Self> {
        let b = x_basis.nrows();
        if b == 0 {
            return Err(Error::EmptyPool("basis"));
        }
        if y_basis.nrows() != b {
            return Err(Error::Shape(format!(
                "x basis has {b} rows, y basis has {}",
                y_basis.nrows()
            )));
        }
        Ok(Self {
            x_indices: (0..b).collect(),
            y_indices: (0..b).collect(),
            x_basis,
            y_basis,
            sigma_x,
            sigma_y,
        })
    }

    /// Number of basis functions.
    #[inline]
    pub fn len(&self) -> usize {
        self.x_basis.nrows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim_x(&self) -> usize {
        self.x_basis.ncols()
    }

    pub fn dim_y(&self) -> usize {
        self.y_basis.ncols()
    }
}

#[inline]
fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `exp(-||x - x2||^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: ArrayView1<'_, f64>, x2: ArrayView1<'_, f64>, sigma: Bandwidth) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x2.len(),
        });
    }
    let s = sigma.sigma();
    Ok((-squared_distance(x, x2) / (2.0 * s * s)).exp())
}

/// Median-heuristic bandwidth: `2^{-1/2}` times the median Euclidean distance
/// over all unordered pairs of distinct samples (rows).
///
/// Pools larger than [`MEDIAN_EXACT_LIMIT`] are subsampled with a fixed seed.
pub fn median_heuristic(samples: ArrayView2<'_, f64>) -> Result<Bandwidth> {
    median_heuristic_subsampled(samples, MEDIAN_EXACT_LIMIT, MEDIAN_DEFAULT_SEED)
}

/// [`median_heuristic`] with an explicit subsample cap and seed.
pub fn median_heuristic_subsampled(
    samples: ArrayView2<'_, f64>,
    max_points: usize,
    seed: u64,
) -> Result<Bandwidth> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let rows: Vec<usize> = if n > max_points.max(2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, max_points.max(2)).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };

    let m = rows.len();
    let mut d2 = Vec::with_capacity(m * (m - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        let xi = samples.row(i);
        for &j in &rows[a + 1..] {
            d2.push(squared_distance(xi, samples.row(j)));
        }
    }
    if d2.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples"));
    }

    // Squaring is monotone, so order statistics of d^2 map to those of d.
    let len = d2.len();
    let mid = len / 2;
    let (lower, upper, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if len % 2 == 1 {
        upper.sqrt()
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max.sqrt() + upper.sqrt())
    };
    if median <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Bandwidth::new(median * std::f64::consts::FRAC_1_SQRT_2)
}

/// Sample `b` basis centres without replacement from each pool independently.
///
/// `b` is clamped to the smaller pool so that both sides have equal length.
/// Bandwidths come from the median heuristic on the full pools.
pub fn sample_basis(
    pool_x: ArrayView2<'_, f64>,
    pool_y: ArrayView2<'_, f64>,
    b: usize,
    seed: u64,
) -> Result<BasisSet> {
    if pool_x.nrows() == 0 {
        return Err(Error::EmptyPool("x pool"));
    }
    if pool_y.nrows() == 0 {
        return Err(Error::EmptyPool("y pool"));
    }
    if b == 0 {
        return Err(Error::InvalidParameter("basis count b must be at least 1".into()));
    }
    let b = b.min(pool_x.nrows()).min(pool_y.nrows());

    // Draw positions in a canonical (lexicographic) ordering of each pool so the
    // basis depends only on the set of samples, not on their order.
    let order_x = lexicographic_order(pool_x);
    let order_y = lexicographic_order(pool_y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_indices: Vec<usize> = rand::seq::index::sample(&mut rng, pool_x.nrows(), b)
        .into_iter()
        .map(|p| order_x[p])
        .collect();
    let y_indices: Vec<usize> = rand::seq::index::sample(&mut rng, pool_y.nrows(), b)
        .into_iter()
        .map(|p| order_y[p])
        .collect();

    let sigma_x = median_heuristic_subsampled(pool_x, MEDIAN_EXACT_LIMIT, seed ^ 0x0078)?;
    let sigma_y = median_heuristic_subsampled(pool_y, MEDIAN_EXACT_LIMIT, seed ^ 0x0079)?;

    Ok(BasisSet {
        x_basis: pool_x.select(Axis(0), &x_indices),
        y_basis: pool_y.select(Axis(0), &y_indices),
        x_indices,
        y_indices,
        sigma_x,
        sigma_y,
    })
}

fn lexicographic_order(pool: ArrayView2<'_, f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.nrows()).collect();
    order.sort_by(|&a, &b| {
        pool.row(a)
            .iter()
            .zip(pool.row(b).iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Kernel values between every centre (row of `centres`) and every point
/// (row of `points`), laid out `centres x points`.
pub fn kernel_columns(
    centres: ArrayView2<'_, f64>,
    points: ArrayView2<'_, f64>,
    sigma: Bandwidth,
) -> Result<Array2<f64>> {
    if centres.ncols() != points.ncols() {
        return Err(Error::DimensionMismatch {
            expected: centres.ncols(),
            got: points.ncols(),
        });
    }
    let s = sigma.sigma();
    let scale = -1.0 / (2.0 * s * s);
    let mut out = Array2::zeros((centres.nrows(), points.nrows()));
    for (c, mut row) in centres.outer_iter().zip(out.outer_iter_mut()) {
        for (p, v) in points.outer_iter().zip(row.iter_mut()) {
            *v = (scale * squared_distance(c, p)).exp();
        }
    }
    Ok(out)
}

/// The matrices `K` (`b x N_x`) and `L` (`b x N_y`) whose columns are
/// `k(xs[i])` and `l(ys[j])`.
pub fn feature_columns(
    basis: &BasisSet,
    xs: ArrayView2<'_, f64>,
    ys: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let k = kernel_columns(basis.x_basis.view(), xs, basis.sigma_x)?;
    let l = kernel_columns(basis.y_basis.view(), ys, basis.sigma_y)?;
    Ok((k, l))
}
