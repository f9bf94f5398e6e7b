//! Synthetic generators, delimited-table I/O, correlation-based feature
//! splitting and the paired/unpaired split used by experiments.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Independent standard normals.
    Random,
    /// `y = 0.5 x + noise`.
    Linear,
    /// `y = sin(x) + noise`.
    Nonlinear,
    /// `y` is the projection of `x` onto its top principal component.
    Pca,
}

impl SyntheticKind {
    pub fn default_noise_sd(self) -> f64 {
        match self {
            SyntheticKind::Linear => 0.1,
            _ => 0.0,
        }
    }

    pub fn default_dim(self) -> usize {
        match self {
            SyntheticKind::Pca => 2,
            _ => 1,
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(SyntheticKind::Random),
            "linear" => Ok(SyntheticKind::Linear),
            "nonlinear" => Ok(SyntheticKind::Nonlinear),
            "pca" => Ok(SyntheticKind::Pca),
            _ => Err(Error::UnknownKind(s.to_string())),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SyntheticKind::Random => "random",
            SyntheticKind::Linear => "linear",
            SyntheticKind::Nonlinear => "nonlinear",
            SyntheticKind::Pca => "pca",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    /// Dimension of `x`; `None` uses [`SyntheticKind::default_dim`].
    pub dim: Option<usize>,
    /// `None` uses [`SyntheticKind::default_noise_sd`].
    pub noise_sd: Option<f64>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, nx: usize, ny: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            nx,
            ny,
            dim: None,
            noise_sd: None,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or_else(|| self.kind.default_dim())
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd.unwrap_or_else(|| self.kind.default_noise_sd())
    }

    pub fn validate(&self) -> Result<()> {
        let sd = self.noise_sd();
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise_sd must be nonnegative, got {sd}")));
        }
        if self.dim() == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        Ok(())
    }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Per-axis scale of the `x` marginal for the pca kind, so the top
/// component is well separated.
fn pca_scales(dim: usize) -> Array1<f64> {
    Array1::from_shape_fn(dim, |k| 2.0 / (1.0 + k as f64))
}

fn draw_x(kind: SyntheticKind, rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut x = normal_matrix(rows, dim, rng);
    if kind == SyntheticKind::Pca {
        x *= &pca_scales(dim);
    }
    x
}

/// Top principal direction and column mean of `x`, by power iteration on the
/// sample covariance. The sign is fixed so the largest entry is positive.
fn principal_direction(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let d = x.ncols();
    let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
    let centred = &x - &mean;
    let cov = centred.t().dot(&centred) / (x.nrows().max(2) - 1) as f64;
    let mut v = Array1::from_shape_fn(d, |k| 1.0 / (1.0 + k as f64));
    for _ in 0..10_000 {
        let w = cov.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            break;
        }
        let w = w / norm;
        let delta = (&w - &v).mapv(f64::abs).sum();
        v = w;
        if delta < 1e-15 {
            break;
        }
    }
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let lead = v.iter().cloned().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
    if lead < 0.0 {
        v.mapv_inplace(|c| -c);
    }
    (v, mean)
}

struct YMap {
    kind: SyntheticKind,
    noise_sd: f64,
    pca: Option<(Array1<f64>, Array1<f64>)>,
}

impl YMap {
    fn apply(&self, x: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut y = match self.kind {
            SyntheticKind::Random => normal_matrix(x.nrows(), x.ncols(), rng),
            SyntheticKind::Linear => x * 0.5,
            SyntheticKind::Nonlinear => x.mapv(f64::sin),
            SyntheticKind::Pca => {
                let (dir, mean) = self.pca.as_ref().expect("pca direction");
                (x - mean).dot(dir).insert_axis(Axis(1))
            }
        };
        if self.kind != SyntheticKind::Random && self.noise_sd > 0.0 {
            let noise = normal_matrix(y.nrows(), y.ncols(), rng);
            y.scaled_add(self.noise_sd, &noise);
        }
        y
    }
}

/// Draw a synthetic semi-supervised sample set.
///
/// Paired rows are joint draws. The unpaired `x` and `y` pools are independent
/// draws from the respective marginals, each from its own random stream.
pub fn generate(spec: &SyntheticSpec) -> Result<SampleSet> {
    generate_inner(spec, false)
}

/// Like [`generate`], but the unpaired pools come from `n_x` joint draws left
/// in order, so `unpaired_x[i]` and `unpaired_y[i]` form a true pair.
/// Requires `n_x == n_y`.
pub fn generate_aligned(spec: &SyntheticSpec) -> Result<SampleSet> {
    if spec.nx != spec.ny {
        return Err(Error::InvalidParameter(format!(
            "aligned pools need n_x == n_y, got {} and {}",
            spec.nx, spec.ny
        )));
    }
    generate_inner(spec, true)
}

fn generate_inner(spec: &SyntheticSpec, aligned: bool) -> Result<SampleSet> {
    spec.validate()?;
    let dim = spec.dim();
    let stream = |k: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k);
        rng
    };
    let mut rng_pair = stream(0);
    let mut rng_x = stream(1);
    let mut rng_y = stream(2);

    let paired_x = draw_x(spec.kind, spec.n, dim, &mut rng_pair);
    let unpaired_x = draw_x(spec.kind, spec.nx, dim, &mut rng_x);
    // The y pool gets its own fresh x draws, except in the aligned case.
    let hidden_x = if aligned {
        unpaired_x.clone()
    } else {
        draw_x(spec.kind, spec.ny, dim, &mut rng_y)
    };

    let pca = (spec.kind == SyntheticKind::Pca).then(|| {
        let all = ndarray::concatenate(Axis(0), &[paired_x.view(), unpaired_x.view()]).expect("same dim");
        if all.nrows() == 0 {
            (Array1::from_shape_fn(dim, |k| if k == 0 { 1.0 } else { 0.0 }), Array1::zeros(dim))
        } else {
            principal_direction(all.view())
        }
    });
    let map = YMap {
        kind: spec.kind,
        noise_sd: spec.noise_sd(),
        pca,
    };
    let paired_y = map.apply(&paired_x, &mut rng_pair);
    let unpaired_y = map.apply(&hidden_x, &mut rng_y);
    SampleSet::new(paired_x, paired_y, unpaired_x, unpaired_y)
}

/// Where and how to read a delimited numeric table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularSource {
    pub path: PathBuf,
    /// `None` splits on any run of whitespace.
    pub delimiter: Option<char>,
    pub has_header: bool,
}

impl TabularSource {
    /// Guess the delimiter from the extension (`.tsv` tab, `.txt`/`.dat`
    /// whitespace, otherwise comma) and sniff a header from the first line.
    pub fn detect(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let delimiter = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(e) if e == "tsv" => Some('\t'),
            Some(e) if e == "txt" || e == "dat" => None,
            _ => Some(','),
        };
        let text = fs::read_to_string(&path)?;
        let has_header = text
            .lines()
            .find(|l| !l.trim().is_empty())
            .map(|l| split_line(l, delimiter).any(|c| c.parse::<f64>().is_err()))
            .unwrap_or(false);
        Ok(Self {
            path,
            delimiter,
            has_header,
        })
    }
}

fn split_line(line: &str, delimiter: Option<char>) -> Box<dyn Iterator<Item = &str> + '_> {
    match delimiter {
        Some(d) => Box::new(line.split(d).map(str::trim)),
        None => Box::new(line.split_whitespace()),
    }
}

/// Parse delimited text into a rows x columns matrix. Blank lines are skipped.
pub fn parse_table(text: &str, delimiter: Option<char>, has_header: bool, origin: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0;
    let mut header_pending = has_header;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let before = values.len();
        for (c, cell) in split_line(line, delimiter).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                location: format!("{origin}:{}:{}", lineno + 1, c + 1),
                message: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(w) if w != width => {
                return Err(Error::Parse {
                    location: format!("{origin}:{}", lineno + 1),
                    message: format!("expected {w} columns, found {width}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Shape(e.to_string()))
}

pub fn read_table(source: &TabularSource) -> Result<Array2<f64>> {
    let text = fs::read_to_string(&source.path)?;
    parse_table(
        &text,
        source.delimiter,
        source.has_header,
        &source.path.display().to_string(),
    )
}

/// Read a two-column index file of `(x index, y index)` rows. A non-numeric
/// first line is treated as a header.
pub fn read_index_pairs(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let source = TabularSource::detect(path)?;
    let origin = source.path.display().to_string();
    let table = read_table(&source)?;
    if table.nrows() > 0 && table.ncols() != 2 {
        return Err(Error::Parse {
            location: origin,
            message: format!("expected 2 columns, found {}", table.ncols()),
        });
    }
    table
        .outer_iter()
        .enumerate()
        .map(|(r, row)| {
            let idx = |v: f64| {
                if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 {
                    Ok(v as usize)
                } else {
                    Err(Error::Parse {
                        location: format!("{origin}: row {}", r + 1),
                        message: format!("not a valid index: {v}"),
                    })
                }
            };
            Ok((idx(row[0])?, idx(row[1])?))
        })
        .collect()
}

/// Write a matrix as comma-separated text, no header. Values use the shortest
/// representation that round-trips exactly.
pub fn write_table(path: impl AsRef<Path>, m: ArrayView2<'_, f64>) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 12);
    for row in m.outer_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Absolute Pearson correlation between columns; constant columns get 0.
fn abs_correlations(table: ArrayView2<'_, f64>) -> Array2<f64> {
    let (rows, cols) = table.dim();
    let mean = table.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(cols));
    let centred = &table - &mean;
    let cov = centred.t().dot(&centred) / rows.max(1) as f64;
    let sd: Vec<f64> = (0..cols).map(|j| cov[[j, j]].sqrt()).collect();
    for (j, &s) in sd.iter().enumerate() {
        if s <= 0.0 {
            log::warn!("column {j} is constant; treating its correlation as 0");
        }
    }
    Array2::from_shape_fn((cols, cols), |(i, j)| {
        if sd[i] > 0.0 && sd[j] > 0.0 {
            (cov[[i, j]] / (sd[i] * sd[j])).abs().min(1.0)
        } else {
            0.0
        }
    })
}

/// Column indices of each side of a correlation-based split.
pub fn split_feature_indices(table: ArrayView2<'_, f64>, d_x: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let cols = table.ncols();
    if cols < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 columns, got {cols}")));
    }
    if d_x == 0 || d_x >= cols {
        return Err(Error::InvalidParameter(format!("d_x must lie in [1, {}], got {d_x}", cols - 1)));
    }
    let d_y = cols - d_x;
    let corr = abs_correlations(table);

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..cols {
        for j in i + 1..cols {
            if corr[[i, j]] > 1e-12 {
                pairs.push((corr[[i, j]], i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // side[c]: None unassigned, Some(true) x, Some(false) y.
    let mut side: Vec<Option<bool>> = vec![None; cols];
    let mut count = [0usize, 0usize]; // [x, y]
    let full = |count: &[usize; 2]| count[0] >= d_x || count[1] >= d_y;
    let put = |c: usize, to_x: bool, side: &mut Vec<Option<bool>>, count: &mut [usize; 2]| {
        side[c] = Some(to_x);
        count[if to_x { 0 } else { 1 }] += 1;
    };
    for &(_, i, j) in &pairs {
        if full(&count) {
            break;
        }
        match (side[i], side[j]) {
            (None, None) => {
                put(i, true, &mut side, &mut count);
                put(j, false, &mut side, &mut count);
            }
            // The partner goes to the other side if that side has room.
            (Some(s), None) if count[usize::from(s)] < if s { d_y } else { d_x } => {
                put(j, !s, &mut side, &mut count);
            }
            (None, Some(s)) if count[usize::from(s)] < if s { d_y } else { d_x } => {
                put(i, !s, &mut side, &mut count);
            }
            _ => {}
        }
    }
    // Remainder: lowest indices fill x first, then y.
    for c in 0..cols {
        if side[c].is_none() {
            let to_x = count[0] < d_x;
            put(c, to_x, &mut side, &mut count);
        }
    }
    let xs = (0..cols).filter(|&c| side[c] == Some(true)).collect();
    let ys = (0..cols).filter(|&c| side[c] == Some(false)).collect();
    Ok((xs, ys))
}

/// Split columns into an `x` block of `d_x` columns and a `y` block holding
/// the rest, greedily placing strongly correlated columns on opposite sides.
pub fn split_features(table: ArrayView2<'_, f64>, d_x: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    let (xs, ys) = split_feature_indices(table, d_x)?;
    Ok((table.select(Axis(1), &xs), table.select(Axis(1), &ys)))
}

/// A [`SampleSet`] plus the source row behind every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSupervisedSplit {
    pub data: SampleSet,
    pub paired_rows: Vec<usize>,
    pub x_rows: Vec<usize>,
    pub y_rows: Vec<usize>,
}

/// Seeded split of row-aligned `x`, `y` tables into paired and unpaired parts.
///
/// After a shuffle, the first `n` rows are paired. The `x` pool takes the `x`
/// side of the next `n_x` rows; the `y` pool takes the `y` side of the next
/// `n_y` rows in an independent second shuffle, which breaks the hidden pairing.
pub fn make_semi_supervised_rows(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    n: usize,
    nx: usize,
    ny: usize,
    seed: u64,
) -> Result<SemiSupervisedSplit> {
    let rows = x.nrows();
    if y.nrows() != rows {
        return Err(Error::Shape(format!("x has {rows} rows, y has {}", y.nrows())));
    }
    let needed = n + nx.max(ny);
    if needed > rows {
        return Err(Error::InsufficientSamples { needed, got: rows });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng);
    let paired_rows = order[..n].to_vec();
    let x_rows = order[n..n + nx].to_vec();
    let mut y_rows = order[n..n + ny].to_vec();
    y_rows.shuffle(&mut rng);

    let data = SampleSet::new(
        x.select(Axis(0), &paired_rows),
        y.select(Axis(0), &paired_rows),
        x.select(Axis(0), &x_rows),
        y.select(Axis(0), &y_rows),
    )?;
    Ok(SemiSupervisedSplit {
        data,
        paired_rows,
        x_rows,
        y_rows,
    })
}

pub fn make_semi_supervised(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    n: usize,
    nx: usize,
    ny: usize,
    seed: u64,
) -> Result<SampleSet> {
    make_semi_supervised_rows(x, y, n, nx, ny, seed).map(|s| s.data)
}

/// Keep the first `n` rows of `m`.
pub fn head_rows(m: ArrayView2<'_, f64>, n: usize) -> Array2<f64> {
    m.slice(s![..n.min(m.nrows()), ..]).to_owned()
}
