//! Hard correspondences from transport plans, matching accuracy, and grid
//! layout of items with fixed anchors.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::parse_table;
use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorConfig, FitResult, SampleSet};
use crate::transport::TransportPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMethod {
    /// Repeatedly take the largest remaining entry.
    Greedy,
    /// Maximum-weight bipartite matching (Hungarian method).
    Optimal,
}

/// One-to-one `(x_index, y_index)` pairs covering the smaller side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sum of the weights on the selected pairs.
    pub fn total_mass(&self, weights: ArrayView2<'_, f64>) -> f64 {
        self.pairs.iter().map(|&(i, j)| weights[[i, j]]).sum()
    }

    /// True if no row or column index appears twice.
    pub fn is_injective(&self) -> bool {
        let rows: HashSet<usize> = self.pairs.iter().map(|p| p.0).collect();
        let cols: HashSet<usize> = self.pairs.iter().map(|p| p.1).collect();
        rows.len() == self.pairs.len() && cols.len() == self.pairs.len()
    }
}

/// Round a plan to `min(n_x, n_y)` one-to-one pairs, sorted by row index.
pub fn plan_to_assignment(plan: &TransportPlan, method: RoundingMethod) -> Assignment {
    weights_to_assignment(plan.matrix(), method)
}

/// [`plan_to_assignment`] on an arbitrary weight matrix.
pub fn weights_to_assignment(w: ArrayView2<'_, f64>, method: RoundingMethod) -> Assignment {
    let mut pairs = match method {
        RoundingMethod::Greedy => greedy(w),
        RoundingMethod::Optimal => {
            if w.nrows() <= w.ncols() {
                hungarian_max(w)
            } else {
                hungarian_max(w.t()).into_iter().map(|(j, i)| (i, j)).collect()
            }
        }
    };
    pairs.sort_unstable();
    Assignment { pairs }
}

fn greedy(w: ArrayView2<'_, f64>) -> Vec<(usize, usize)> {
    let (nr, nc) = w.dim();
    let mut entries: Vec<(usize, usize)> = (0..nr).flat_map(|i| (0..nc).map(move |j| (i, j))).collect();
    // Stable sort keeps (i, j) order among equal weights.
    entries.sort_by(|a, b| w[[b.0, b.1]].total_cmp(&w[[a.0, a.1]]));
    let mut row_used = vec![false; nr];
    let mut col_used = vec![false; nc];
    let mut out = Vec::with_capacity(nr.min(nc));
    for (i, j) in entries {
        if !row_used[i] && !col_used[j] {
            row_used[i] = true;
            col_used[j] = true;
            out.push((i, j));
            if out.len() == nr.min(nc) {
                break;
            }
        }
    }
    out
}

/// Maximum-weight matching of every row, for `rows <= cols`. Shortest
/// augmenting paths with potentials, `O(rows^2 cols)`.
fn hungarian_max(w: ArrayView2<'_, f64>) -> Vec<(usize, usize)> {
    let (n, m) = w.dim();
    debug_assert!(n <= m);
    if n == 0 {
        return Vec::new();
    }
    // Minimise -w. Index 0 is a virtual column; rows and columns are 1-based.
    let cost = |i: usize, j: usize| -w[[i - 1, j - 1]];
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect()
}

/// Fraction of `truth` pairs `(i, j)` whose entry ranks among the `k` largest
/// of row `i`. Ties are broken by column index, so an entry's rank is the
/// number of strictly larger entries plus equal entries at smaller columns.
pub fn topk_accuracy(plan: &TransportPlan, truth: &[(usize, usize)], k: usize) -> Result<f64> {
    let pi = plan.matrix();
    if truth.is_empty() {
        return Err(Error::InvalidParameter("truth must contain at least one pair".into()));
    }
    let mut hits = 0usize;
    for &(i, j) in truth {
        if i >= pi.nrows() || j >= pi.ncols() {
            return Err(Error::InvalidParameter(format!(
                "truth pair ({i}, {j}) outside a {}x{} plan",
                pi.nrows(),
                pi.ncols()
            )));
        }
        let row = pi.row(i);
        let target = row[j];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(c, &v)| v > target || (v == target && c < j))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}

/// Target layout: 2-D cell coordinates plus fixed `(item, position)` anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// One row per position: `(row, column)` coordinates.
    pub positions: Array2<f64>,
    pub anchors: Vec<(usize, usize)>,
}

impl GridSpec {
    pub fn new(positions: Array2<f64>, anchors: Vec<(usize, usize)>) -> Result<Self> {
        let g = Self { positions, anchors };
        g.validate()?;
        Ok(g)
    }

    /// Row-major `rows x cols` lattice.
    pub fn rectangular(rows: usize, cols: usize) -> Self {
        let positions = Array2::from_shape_fn((rows * cols, 2), |(p, a)| {
            if a == 0 {
                (p / cols) as f64
            } else {
                (p % cols) as f64
            }
        });
        Self {
            positions,
            anchors: Vec::new(),
        }
    }

    /// Parse `"RxC"` (also accepts `X` or `*`).
    pub fn parse_dims(s: &str) -> Result<(usize, usize)> {
        let bad = || Error::InvalidParameter(format!("grid must look like 16x20, got {s:?}"));
        let (r, c) = s.split_once(['x', 'X', '*']).ok_or_else(bad)?;
        let r: usize = r.trim().parse().map_err(|_| bad())?;
        let c: usize = c.trim().parse().map_err(|_| bad())?;
        if r == 0 || c == 0 {
            return Err(bad());
        }
        Ok((r, c))
    }

    /// Character mask: every non-blank character other than `.`, `0`, `_`
    /// or `-` marks a cell. Positions are in row-major reading order.
    pub fn from_mask(text: &str) -> Self {
        let mut coords = Vec::new();
        for (r, line) in text.lines().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                if !ch.is_whitespace() && !matches!(ch, '.' | '0' | '_' | '-') {
                    coords.push(r as f64);
                    coords.push(c as f64);
                }
            }
        }
        let n = coords.len() / 2;
        Self {
            positions: Array2::from_shape_vec((n, 2), coords).expect("pairs"),
            anchors: Vec::new(),
        }
    }

    /// A two-column numeric coordinate table, or failing that a character mask.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let origin = path.display().to_string();
        let first_numeric = text
            .lines()
            .find(|l| !l.trim().is_empty())
            .map(|l| l.split([',', ' ', '\t']).filter(|c| !c.is_empty()).all(|c| c.trim().parse::<f64>().is_ok()))
            .unwrap_or(false);
        let grid = if first_numeric {
            let delim = if text.contains(',') { Some(',') } else { None };
            let t = parse_table(&text, delim, false, &origin)?;
            if t.ncols() != 2 {
                return Err(Error::Parse {
                    location: origin,
                    message: format!("coordinate file needs 2 columns, found {}", t.ncols()),
                });
            }
            Self {
                positions: t,
                anchors: Vec::new(),
            }
        } else {
            Self::from_mask(&text)
        };
        if grid.positions.nrows() == 0 {
            return Err(Error::EmptyPool("grid positions"));
        }
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_anchors(mut self, anchors: Vec<(usize, usize)>) -> Result<Self> {
        self.anchors = anchors;
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.ncols() != 2 {
            return Err(Error::Shape(format!("positions need 2 columns, got {}", self.positions.ncols())));
        }
        let mut seen = HashSet::new();
        for p in self.positions.outer_iter() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("grid positions"));
            }
            if !seen.insert((p[0].to_bits(), p[1].to_bits())) {
                return Err(Error::InvalidParameter(format!("duplicate grid position ({}, {})", p[0], p[1])));
            }
        }
        let mut items = HashSet::new();
        let mut cells = HashSet::new();
        for &(item, pos) in &self.anchors {
            if pos >= self.len() {
                return Err(Error::AnchorConflict(format!(
                    "anchor position {pos} outside {} positions",
                    self.len()
                )));
            }
            if !items.insert(item) {
                return Err(Error::AnchorConflict(format!("item {item} anchored twice")));
            }
            if !cells.insert(pos) {
                return Err(Error::AnchorConflict(format!("position {pos} anchored twice")));
            }
        }
        Ok(())
    }

    /// Coordinates shifted to zero mean and scaled to unit variance per axis.
    /// An axis with no spread is only centred.
    pub fn normalized_positions(&self) -> Array2<f64> {
        let mean = self.positions.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(2));
        let mut out = &self.positions - &mean;
        let sd = out.map_axis(Axis(0), |c| (c.mapv(|v| v * v).sum() / c.len().max(1) as f64).sqrt());
        for (mut col, &s) in out.axis_iter_mut(Axis(1)).zip(sd.iter()) {
            if s > 0.0 {
                col /= s;
            }
        }
        out
    }

    /// The estimation problem behind a layout: anchors are the paired set,
    /// the remaining items and positions the unpaired pools. Also returns the
    /// original indices of the free items and free positions.
    pub fn sample_set(&self, features: ArrayView2<'_, f64>) -> Result<(SampleSet, Vec<usize>, Vec<usize>)> {
        self.validate()?;
        let items = features.nrows();
        if let Some(&(item, _)) = self.anchors.iter().find(|a| a.0 >= items) {
            return Err(Error::AnchorConflict(format!("anchor item {item} outside {items} items")));
        }
        let coords = self.normalized_positions();
        let anchored_items: HashSet<usize> = self.anchors.iter().map(|a| a.0).collect();
        let anchored_cells: HashSet<usize> = self.anchors.iter().map(|a| a.1).collect();
        let free_items: Vec<usize> = (0..items).filter(|i| !anchored_items.contains(i)).collect();
        let free_cells: Vec<usize> = (0..self.len()).filter(|p| !anchored_cells.contains(p)).collect();
        let a_items: Vec<usize> = self.anchors.iter().map(|a| a.0).collect();
        let a_cells: Vec<usize> = self.anchors.iter().map(|a| a.1).collect();
        let data = SampleSet {
            paired_x: features.select(Axis(0), &a_items),
            paired_y: coords.select(Axis(0), &a_cells),
            unpaired_x: features.select(Axis(0), &free_items),
            unpaired_y: coords.select(Axis(0), &free_cells),
        };
        Ok((data, free_items, free_cells))
    }
}

/// Result of [`grid_summarize`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    /// `(item, position)` pairs sorted by position; anchors included.
    pub placements: Vec<(usize, usize)>,
    /// Items that did not receive a position.
    pub unplaced: Vec<usize>,
    /// The underlying fit, if any free items and positions remained.
    pub fit: Option<FitResult>,
}

/// Place items (rows of `features`) onto grid positions.
///
/// Anchors are pinned. The free items and positions are matched by rounding
/// the fitted plan with the Hungarian method, so `min(free items, free
/// positions)` further placements are made. Without anchors there are no
/// paired samples and `beta` is forced to 0.
pub fn grid_summarize(features: ArrayView2<'_, f64>, grid: &GridSpec, config: &EstimatorConfig) -> Result<GridLayout> {
    let (data, free_items, free_cells) = grid.sample_set(features)?;
    let mut placements = grid.anchors.clone();
    let mut fit_result = None;
    let mut placed: HashSet<usize> = grid.anchors.iter().map(|a| a.0).collect();

    if !free_items.is_empty() && !free_cells.is_empty() {
        let mut cfg = *config;
        if data.n() == 0 && cfg.beta > 0.0 {
            log::info!("no anchors: using beta = 0");
            cfg.beta = 0.0;
        }
        let r = fit(&data, &cfg)?;
        let assignment = plan_to_assignment(&r.plan, RoundingMethod::Optimal);
        for (i, j) in assignment.pairs {
            placements.push((free_items[i], free_cells[j]));
            placed.insert(free_items[i]);
        }
        fit_result = Some(r);
    }
    placements.sort_by_key(|p| (p.1, p.0));
    let unplaced = (0..features.nrows()).filter(|i| !placed.contains(i)).collect();
    Ok(GridLayout {
        placements,
        unplaced,
        fit: fit_result,
    })
}
