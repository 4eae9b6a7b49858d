//! Weighted local charts and the quantities read off them: bandwidth,
//! intrinsic dimension, tangent frame, density and the derivative of the
//! feature map.
//!
//! A chart at sample `i` and bandwidth `eps` stacks the neighbor offsets
//! `sqrt(w_j / D) (x_j - x_i)` as rows of `X`, with `w_j = exp(-d_j^2 / 2 eps)`
//! and `D = sum_j w_j`. Its singular values scale like `eps^(1/2)` along
//! tangent directions and like `eps` or faster across the manifold. The
//! bandwidth scan measures these exponents on a log-spaced grid.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::data::{FeatureSet, NeighborGraph, PointCloud};
use crate::error::{param, Error, Result};
use crate::linalg::{self, Svd};
#[allow(unused_imports)]
use num_traits::Float;

/// Pseudo-inverse cutoff relative to the largest singular value.
pub const PINV_RCOND: f64 = 1e-8;

/// How the bandwidth is picked from a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMode {
    /// Maximize the trace-based dimension `d1`.
    #[default]
    Simple,
    /// Minimize the disagreement metric between `d1` and the scaling-law
    /// dimension `d2`.
    Robust,
}

/// Weighted local chart around one sample.
#[derive(Debug, Clone)]
pub struct LocalChart {
    pub base: usize,
    pub epsilon: f64,
    /// Neighbor sample indices, self first.
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
    pub weight_sum: f64,
    /// `k x m`, row `j` is `sqrt(w_j/D) (x_{I(j)} - x_i)`.
    pub x: DMatrix<f64>,
    /// `k x n` feature offsets, scaled like `x`.
    pub y: Option<DMatrix<f64>>,
}

impl LocalChart {
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        linalg::singular_values(&self.x)
    }

    pub fn svd(&self) -> Result<Svd> {
        linalg::svd(&self.x, true)
    }

    pub fn k(&self) -> usize {
        self.neighbors.len()
    }
}

/// Builds the chart of graph row `row` at bandwidth `eps`.
///
/// The base sample is the first entry of the row's neighbor list, so graphs
/// restricted to a single base point work as well as full graphs.
pub fn build_chart(
    points: &PointCloud,
    graph: &NeighborGraph,
    row: usize,
    eps: f64,
    features: Option<&FeatureSet>,
) -> Result<LocalChart> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(param(format!("bandwidth must be positive, got {eps}")));
    }
    if row >= graph.len() {
        return Err(param(format!("row {row} outside graph of {} rows", graph.len())));
    }
    if let Some(f) = features {
        f.check_aligned(points)?;
    }
    let idx = graph.indices(row);
    let dist = graph.distances(row);
    let base = idx[0];
    let k = idx.len();
    let m = points.dim();

    let weights: Vec<f64> = dist.iter().map(|d| (-d * d / (2.0 * eps)).exp()).collect();
    let weight_sum: f64 = weights.iter().sum();

    let xi = points.point(base);
    let mut x = DMatrix::zeros(k, m);
    for (j, (&nb, &w)) in idx.iter().zip(&weights).enumerate() {
        let c = (w / weight_sum).sqrt();
        for (col, (a, b)) in points.point(nb).iter().zip(xi).enumerate() {
            x[(j, col)] = c * (a - b);
        }
    }
    let y = features.map(|f| {
        let n = f.dim();
        let yi = f.value(base);
        let mut y = DMatrix::zeros(k, n);
        for (j, (&nb, &w)) in idx.iter().zip(&weights).enumerate() {
            let c = (w / weight_sum).sqrt();
            for (col, (a, b)) in f.value(nb).iter().zip(yi).enumerate() {
                y[(j, col)] = c * (a - b);
            }
        }
        y
    });
    Ok(LocalChart {
        base,
        epsilon: eps,
        neighbors: idx.to_vec(),
        weights,
        weight_sum,
        x,
        y,
    })
}

/// Chosen grid point of a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// Left index `l*` of the selected finite-difference pair.
    pub index: usize,
    /// `eps(l* + 1)`.
    pub epsilon: f64,
    pub dimension: f64,
}

/// Options for [`bandwidth_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    /// Number of grid points `L`.
    pub grid_len: usize,
    pub mode: SelectionMode,
    /// User-fixed grid replacing the automatic one (strictly increasing).
    pub fixed_grid: Option<Vec<f64>>,
    /// Compute singular values and scaling laws even in simple mode.
    pub with_singular_values: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            grid_len: 100,
            mode: SelectionMode::Simple,
            fixed_grid: None,
            with_singular_values: false,
        }
    }
}

/// Per-point bandwidth scan.
///
/// Finite-difference quantities (`d1`, `alpha`, `d2`, `d_ave`, `metric`)
/// have `L - 1` entries, assigned to the left grid index of each pair.
#[derive(Debug, Clone)]
pub struct BandwidthScan {
    pub base: usize,
    pub mode: SelectionMode,
    pub eps_grid: Vec<f64>,
    pub weight_sums: Vec<f64>,
    pub d1: Vec<f64>,
    /// `L x r` singular values; empty unless requested or robust.
    pub singular: Vec<Vec<f64>>,
    /// `(L-1) x r`; `None` where a singular value is numerically zero.
    pub alpha: Vec<Vec<Option<f64>>>,
    pub d2: Vec<f64>,
    pub d_ave: Vec<f64>,
    /// Disagreement metric; `+inf` where undefined (including the last entry).
    pub metric: Vec<f64>,
    pub selected: Selection,
    /// Simple-mode selection, kept for side-by-side reports.
    pub simple: Selection,
    /// Robust-mode selection when scaling laws were computed.
    pub robust: Option<Selection>,
    pub undefined_alpha: usize,
    pub warnings: Vec<String>,
}

/// Log-uniform grid `eps(l) = exp(log a + (l/L)(log b - log a))`, `l = 1..L`.
pub fn log_grid(eps_min: f64, eps_max: f64, len: usize) -> Vec<f64> {
    let (a, b) = (eps_min.ln(), eps_max.ln());
    (1..=len)
        .map(|l| (a + (l as f64 / len as f64) * (b - a)).exp())
        .collect()
}

/// Automatic grid endpoints for one neighbor list: the lower end puts the
/// nearest nonzero neighbor's weight at machine precision, the upper end is
/// `10 d(k)`.
pub fn grid_bounds(dist: &[f64]) -> Result<(f64, f64)> {
    let dk = *dist.last().unwrap_or(&0.0);
    if !(dk > 0.0) {
        return Err(Error::DegenerateGeometry(
            "all listed neighbors coincide with the base point".into(),
        ));
    }
    let d_near = dist.iter().copied().find(|&d| d > 0.0).unwrap_or(dk);
    let eps_min = d_near * d_near / (2.0 * f64::EPSILON.ln().abs());
    let eps_max = 10.0 * dk;
    if !(eps_max > eps_min) {
        return Err(Error::DegenerateGeometry(format!(
            "empty bandwidth range [{eps_min:e}, {eps_max:e}]; rescale the data"
        )));
    }
    Ok((eps_min, eps_max))
}

/// Finite-difference exponents of singular values across the grid.
///
/// Entries where either endpoint is numerically zero are `None`.
pub fn scaling_laws(eps_grid: &[f64], singular: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>> {
    if singular.len() < 2 || singular.len() != eps_grid.len() {
        return Err(param(format!(
            "need singular values on at least two grid points ({} grid, {} rows)",
            eps_grid.len(),
            singular.len()
        )));
    }
    let mut out = Vec::with_capacity(eps_grid.len() - 1);
    for l in 0..eps_grid.len() - 1 {
        let de = eps_grid[l + 1].ln() - eps_grid[l].ln();
        let (a, b) = (&singular[l], &singular[l + 1]);
        let za = zero_level(a);
        let zb = zero_level(b);
        let row = a
            .iter()
            .zip(b)
            .map(|(&sa, &sb)| (sa > za && sb > zb).then(|| (sb.ln() - sa.ln()) / de))
            .collect();
        out.push(row);
    }
    Ok(out)
}

// Values at or below this are zero to working precision.
fn zero_level(s: &[f64]) -> f64 {
    s.first().copied().unwrap_or(0.0) * f64::EPSILON * (4 * s.len().max(1)) as f64
}

/// Scaling-law dimension: `2 sum_{j<=floor(d1)} alpha_j + 2 frac(d1) alpha_{floor+1}`.
/// Undefined exponents count as zero.
pub fn scaling_dimension(d1: f64, alpha: &[Option<f64>]) -> f64 {
    let whole = d1.floor().max(0.0);
    let frac = d1 - whole;
    let whole = whole as usize;
    let a = |j: usize| alpha.get(j).copied().flatten().unwrap_or(0.0);
    let mut sum = 0.0;
    for j in 0..whole {
        sum += a(j);
    }
    2.0 * sum + 2.0 * frac * a(whole)
}

/// Scans bandwidths for graph row `row` and selects one.
pub fn bandwidth_scan(
    points: &PointCloud,
    graph: &NeighborGraph,
    row: usize,
    opts: &ScanOptions,
) -> Result<BandwidthScan> {
    let k = graph.k();
    if k < 2 {
        return Err(param("bandwidth scan needs k >= 2"));
    }
    let dist = graph.distances(row);
    let eps_grid = match &opts.fixed_grid {
        Some(g) => {
            if g.len() < 3 || g.windows(2).any(|w| !(w[1] > w[0])) || !(g[0] > 0.0) {
                return Err(param("fixed grid must be positive, strictly increasing, length >= 3"));
            }
            grid_bounds(dist)?;
            g.clone()
        }
        None => {
            if opts.grid_len < 3 {
                return Err(param(format!("grid length {} < 3", opts.grid_len)));
            }
            let (lo, hi) = grid_bounds(dist)?;
            log_grid(lo, hi, opts.grid_len)
        }
    };
    let len = eps_grid.len();
    let sq: Vec<f64> = dist.iter().map(|d| d * d).collect();
    let weight_sums: Vec<f64> = eps_grid
        .iter()
        .map(|&e| sq.iter().map(|s| (-s / (2.0 * e)).exp()).sum())
        .collect();
    let d1: Vec<f64> = (0..len - 1)
        .map(|l| {
            2.0 * (weight_sums[l + 1].ln() - weight_sums[l].ln())
                / (eps_grid[l + 1].ln() - eps_grid[l].ln())
        })
        .collect();

    let simple_idx = argmax(&d1);
    let simple = Selection {
        index: simple_idx,
        epsilon: eps_grid[simple_idx + 1],
        dimension: d1[simple_idx],
    };

    let want_sv = opts.with_singular_values || opts.mode == SelectionMode::Robust;
    let mut warnings = Vec::new();
    let mut singular = Vec::new();
    let mut alpha = Vec::new();
    let mut d2 = Vec::new();
    let mut d_ave = Vec::new();
    let mut metric = Vec::new();
    let mut undefined_alpha = 0;
    let mut robust = None;
    if want_sv {
        for &e in &eps_grid {
            let chart = build_chart(points, graph, row, e, None)?;
            singular.push(chart.singular_values()?);
        }
        alpha = scaling_laws(&eps_grid, &singular)?;
        undefined_alpha = alpha.iter().flatten().filter(|a| a.is_none()).count();
        d2 = d1
            .iter()
            .zip(&alpha)
            .map(|(&d, a)| scaling_dimension(d, a))
            .collect();
        d_ave = d1.iter().zip(&d2).map(|(a, b)| 0.5 * (a + b)).collect();
        metric = vec![f64::INFINITY; len - 1];
        for l in 0..len.saturating_sub(2) {
            let de = eps_grid[l + 1].ln() - eps_grid[l].ln();
            let vals = [d1[l], d1[l + 1], d2[l], d2[l + 1], d_ave[l]];
            if vals.iter().all(|&v| v > 0.0) {
                metric[l] = (d1[l] - d2[l]).abs() / d_ave[l]
                    + ((d1[l + 1].ln() - d1[l].ln()) / de).abs()
                    + ((d2[l + 1].ln() - d2[l].ln()) / de).abs();
            }
        }
        robust = argmin_finite(&metric).map(|l| Selection {
            index: l,
            epsilon: eps_grid[l + 1],
            dimension: d_ave[l],
        });
        if undefined_alpha > 0 {
            warnings.push(format!(
                "{undefined_alpha} scaling-law entries undefined (zero singular values)"
            ));
        }
    }

    let selected = match opts.mode {
        SelectionMode::Simple => simple,
        SelectionMode::Robust => match robust {
            Some(s) => s,
            None => {
                warnings.push("robust metric undefined everywhere; using the simple selection".into());
                simple
            }
        },
    };
    if !(selected.dimension > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "dimension estimate {} at sample {} is not positive",
            selected.dimension,
            graph.indices(row)[0]
        )));
    }
    Ok(BandwidthScan {
        base: graph.indices(row)[0],
        mode: opts.mode,
        eps_grid,
        weight_sums,
        d1,
        singular,
        alpha,
        d2,
        d_ave,
        metric,
        selected,
        simple,
        robust,
        undefined_alpha,
        warnings,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin_finite(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if x.is_finite() && best.is_none_or(|b| x < v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Orthonormal estimate of the tangent space.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    /// `d x m` with orthonormal rows.
    pub basis: DMatrix<f64>,
    /// Trailing singular values `sigma_{d+1..}`.
    pub residual_values: Vec<f64>,
    /// Set when `sigma_d` and `sigma_{d+1}` are too close to separate.
    pub ambiguous: bool,
}

/// Relative gap below which the top-`d` subspace is reported as ambiguous.
pub const FRAME_GAP_TOL: f64 = 1e-6;

pub fn tangent_frame(chart: &LocalChart, d: usize) -> Result<TangentFrame> {
    let dec = chart.svd()?;
    frame_from_svd(&dec, d)
}

pub(crate) fn frame_from_svd(dec: &Svd, d: usize) -> Result<TangentFrame> {
    let r = dec.sigma.len();
    if d == 0 || d > r {
        return Err(param(format!("frame dimension {d} outside 1..={r}")));
    }
    let ambiguous = d < r && (dec.sigma[d - 1] - dec.sigma[d]) <= FRAME_GAP_TOL * dec.sigma[0];
    Ok(TangentFrame {
        basis: dec.vt.rows(0, d).into_owned(),
        residual_values: dec.sigma[d..].to_vec(),
        ambiguous,
    })
}

/// Kernel density estimate `D / (N (2 pi eps)^(d/2))`.
pub fn density_estimate(chart: &LocalChart, d: f64, n_points: usize) -> Result<f64> {
    if !(d > 0.0) {
        return Err(param(format!("dimension must be positive, got {d}")));
    }
    Ok(chart.weight_sum / (n_points as f64 * (2.0 * PI * chart.epsilon).powf(0.5 * d)))
}

/// Regression derivative with its numerical rank.
#[derive(Debug, Clone)]
pub struct DerivativeEstimate {
    /// `n x m`.
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// True when singular values were cut by the pseudo-inverse threshold.
    pub truncated: bool,
}

/// Columns of `x` whose joint removal perturbs it by far less than the
/// pseudo-inverse cutoff; they cannot change the retained singular values.
fn negligible_columns(x: &DMatrix<f64>) -> Vec<bool> {
    let (k, m) = x.shape();
    let norms: Vec<f64> = (0..m).map(|j| x.column(j).norm_squared()).collect();
    let total: f64 = norms.iter().sum();
    let sigma_floor = (total / k.min(m).max(1) as f64).sqrt();
    let budget = (1e-3 * PINV_RCOND * sigma_floor).powi(2);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[a].partial_cmp(&norms[b]).unwrap().then(a.cmp(&b)));
    let mut drop = vec![false; m];
    let mut used = 0.0;
    for j in order {
        if used + norms[j] > budget {
            break;
        }
        used += norms[j];
        drop[j] = true;
    }
    drop
}

/// Least-squares derivative `argmin_G ||Y - X G^T||_F`, returned as `G`
/// (`n x m`).
///
/// Uses a pseudo-inverse truncated at `sigma_max * 1e-8`.
pub fn estimate_derivative(chart: &LocalChart) -> Result<DerivativeEstimate> {
    let y = chart
        .y
        .as_ref()
        .ok_or_else(|| param("derivative estimation needs feature values in the chart"))?;
    regression(&chart.x, y, usize::MAX)
}

/// Regression derivative restricted to the chart's leading `d` right
/// singular directions, i.e. the full estimate composed with the projection
/// onto the `d`-dimensional tangent frame. Normal-direction coefficients,
/// which the fit leaves unconstrained in high ambient dimension, are zero.
pub fn estimate_tangent_derivative(chart: &LocalChart, d: usize) -> Result<DerivativeEstimate> {
    if d == 0 {
        return Err(param("tangent dimension must be positive"));
    }
    let y = chart
        .y
        .as_ref()
        .ok_or_else(|| param("derivative estimation needs feature values in the chart"))?;
    regression(&chart.x, y, d)
}

pub(crate) fn regression(x: &DMatrix<f64>, y: &DMatrix<f64>, max_rank: usize) -> Result<DerivativeEstimate> {
    let (k, m) = x.shape();
    let n = y.ncols();
    let rows: Vec<usize> = (0..k).filter(|&j| x.row(j).iter().any(|v| *v != 0.0)).collect();
    let drop = negligible_columns(x);
    let cols: Vec<usize> = (0..m).filter(|&j| !drop[j]).collect();
    let mut matrix = DMatrix::zeros(n, m);
    if rows.is_empty() || cols.is_empty() {
        return Ok(DerivativeEstimate {
            matrix,
            rank: 0,
            truncated: true,
        });
    }
    let xs = DMatrix::from_fn(rows.len(), cols.len(), |r, c| x[(rows[r], cols[c])]);
    let ys = DMatrix::from_fn(rows.len(), n, |r, c| y[(rows[r], c)]);
    let (z, rank) = linalg::lstsq_capped(&xs, &ys, PINV_RCOND, max_rank)?;
    for (c, &col) in cols.iter().enumerate() {
        for f in 0..n {
            matrix[(f, col)] = z[(c, f)];
        }
    }
    Ok(DerivativeEstimate {
        matrix,
        rank,
        truncated: rank < m.min(max_rank),
    })
}

/// Correlation estimate `(1/eps) Y^T X`; converges to the derivative
/// composed with the tangent projection.
pub fn correlation_derivative(chart: &LocalChart) -> Result<DMatrix<f64>> {
    let y = chart
        .y
        .as_ref()
        .ok_or_else(|| param("correlation derivative needs feature values in the chart"))?;
    Ok(y.tr_mul(&chart.x) / chart.epsilon)
}

/// Per-point outputs of the local analysis over a whole cloud.
#[derive(Debug, Clone)]
pub struct DerivativeField {
    /// `n x m` per point; absent when no features were supplied.
    pub derivs: Option<Vec<DMatrix<f64>>>,
    pub local_dims: Vec<f64>,
    pub density: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub selected_index: Vec<usize>,
    /// Points whose regression was rank-truncated.
    pub rank_deficient: usize,
    pub warnings: Vec<String>,
}

/// Options for [`analyze`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisOptions {
    pub scan: ScanOptions,
    /// Skip the regression even if features are given.
    pub skip_derivative: bool,
    /// Restrict each derivative to the tangent frame of dimension
    /// `round(d)` at its sample.
    pub tangent_projection: bool,
}

/// Runs scan, selection, density and (with features) regression at every
/// sample.
pub fn analyze(
    points: &PointCloud,
    graph: &NeighborGraph,
    features: Option<&FeatureSet>,
    opts: &AnalysisOptions,
) -> Result<DerivativeField> {
    let n = points.len();
    if graph.len() != n {
        return Err(Error::Shape(format!("graph has {} rows for {n} samples", graph.len())));
    }
    let features = if opts.skip_derivative { None } else { features };
    let cap = points.dim().min(graph.k()) as f64;
    let mut local_dims = Vec::with_capacity(n);
    let mut density = Vec::with_capacity(n);
    let mut epsilons = Vec::with_capacity(n);
    let mut selected_index = Vec::with_capacity(n);
    let mut derivs = features.map(|_| Vec::with_capacity(n));
    let mut rank_deficient = 0;
    let mut clamped = 0;
    let mut warnings = Vec::new();
    for i in 0..n {
        let scan = bandwidth_scan(points, graph, i, &opts.scan)?;
        let mut d = scan.selected.dimension;
        if d > cap {
            d = cap;
            clamped += 1;
        }
        let chart = build_chart(points, graph, i, scan.selected.epsilon, features)?;
        density.push(density_estimate(&chart, d, n)?);
        local_dims.push(d);
        epsilons.push(scan.selected.epsilon);
        selected_index.push(scan.selected.index);
        if let Some(list) = derivs.as_mut() {
            let est = if opts.tangent_projection {
                let r = (d.round() as usize).clamp(1, chart.x.nrows().min(chart.x.ncols()).max(1));
                estimate_tangent_derivative(&chart, r)?
            } else {
                estimate_derivative(&chart)?
            };
            if est.truncated {
                rank_deficient += 1;
            }
            list.push(est.matrix);
        }
        for w in scan.warnings {
            if warnings.len() < 16 {
                warnings.push(format!("sample {i}: {w}"));
            }
        }
    }
    if clamped > 0 {
        warnings.push(format!("{clamped} dimension estimates clamped to {cap}"));
    }
    Ok(DerivativeField {
        derivs,
        local_dims,
        density,
        epsilons,
        selected_index,
        rank_deficient,
        warnings,
    })
}

#[cfg(test)]
mod tests;
