//! Comparison metrics for embeddings: eigenvalue-block Procrustes
//! alignment, rank and distance correlation, spreads over level sets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::data::RowMatrix;
use crate::error::{param, Error, Result};
use crate::linalg;
#[allow(unused_imports)]
use num_traits::Float;

/// Consecutive index ranges whose eigenvalues agree within `rel_tol`
/// relative to the larger magnitude of each neighboring pair.
pub fn eigenvalue_blocks(values: &[f64], rel_tol: f64) -> Vec<core::ops::Range<usize>> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let (a, b) = (values[i - 1], values[i]);
            (a - b).abs() > rel_tol * a.abs().max(b.abs())
        };
        if split {
            blocks.push(start..i);
            start = i;
        }
    }
    blocks
}

/// Result of aligning a target embedding onto a reference.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Target columns after the blockwise rotation.
    pub aligned: DMatrix<f64>,
    /// Pearson correlation of each aligned column with its reference.
    pub correlations: Vec<f64>,
    pub blocks: Vec<core::ops::Range<usize>>,
    /// `||aligned - reference||_F / ||reference||_F`.
    pub relative_error: f64,
}

/// Orthogonal Procrustes alignment within each eigenvalue block.
///
/// Modes of a repeated eigenvalue are only defined up to rotation inside
/// their eigenspace, so each block is rotated independently.
pub fn align_blocks(
    reference: &DMatrix<f64>,
    target: &DMatrix<f64>,
    blocks: &[core::ops::Range<usize>],
) -> Result<Alignment> {
    if reference.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "reference {:?} and target {:?} differ",
            reference.shape(),
            target.shape()
        )));
    }
    let cols = reference.ncols();
    if blocks.iter().any(|b| b.end > cols) {
        return Err(param("alignment block exceeds the column count"));
    }
    let mut aligned = target.clone();
    for b in blocks {
        let t = target.columns(b.start, b.len()).into_owned();
        let r = reference.columns(b.start, b.len()).into_owned();
        let dec = linalg::svd(&t.tr_mul(&r), true)?;
        let rot = dec.u.expect("requested") * dec.vt;
        aligned.columns_mut(b.start, b.len()).copy_from(&(t * rot));
    }
    let correlations = (0..cols)
        .map(|c| {
            let a: Vec<f64> = aligned.column(c).iter().copied().collect();
            let r: Vec<f64> = reference.column(c).iter().copied().collect();
            pearson(&a, &r)
        })
        .collect();
    let denom = reference.norm();
    let relative_error = if denom > 0.0 {
        (&aligned - reference).norm() / denom
    } else {
        (&aligned - reference).norm()
    };
    Ok(Alignment {
        aligned,
        correlations,
        blocks: blocks.to_vec(),
        relative_error,
    })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(core::cmp::Ordering::Equal));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &o in &order[i..=j] {
            out[o] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

fn row_dist(m: &RowMatrix, i: usize, j: usize) -> f64 {
    m.row(i)
        .iter()
        .zip(m.row(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Sample distance correlation of two aligned point sets.
///
/// Quadratic time, linear memory: distances are recomputed in a second pass
/// instead of stored.
pub fn distance_correlation(x: &RowMatrix, y: &RowMatrix) -> Result<f64> {
    let n = x.rows();
    if y.rows() != n || n < 2 {
        return Err(Error::Shape(format!("distance correlation of {n} and {} rows", y.rows())));
    }
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            ra[i] += row_dist(x, i, j);
            rb[i] += row_dist(y, i, j);
        }
    }
    let nf = n as f64;
    let ga = ra.iter().sum::<f64>() / (nf * nf);
    let gb = rb.iter().sum::<f64>() / (nf * nf);
    for v in ra.iter_mut().chain(rb.iter_mut()) {
        *v /= nf;
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let a = row_dist(x, i, j) - ra[i] - ra[j] + ga;
            let b = row_dist(y, i, j) - rb[i] - rb[j] + gb;
            ab += a * b;
            aa += a * a;
            bb += b * b;
        }
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok((ab / (aa * bb).sqrt()).max(0.0).sqrt())
}

/// Singular values of the column-centered matrix formed by the first `cols`
/// columns (all when `None`).
pub fn centered_singular_values(coords: &RowMatrix, cols: Option<usize>) -> Result<Vec<f64>> {
    let c = cols.unwrap_or(coords.cols()).min(coords.cols());
    let n = coords.rows();
    let mut m = DMatrix::from_fn(n, c, |i, j| coords.get(i, j));
    for mut col in m.column_iter_mut() {
        let mu = col.mean();
        col.add_scalar_mut(-mu);
    }
    linalg::singular_values(&m)
}

/// Column of `coords` with the largest centered variance.
pub fn dominant_coordinate(coords: &RowMatrix) -> Vec<f64> {
    let best = (0..coords.cols())
        .max_by(|&a, &b| {
            std_dev(&coords.column(a))
                .partial_cmp(&std_dev(&coords.column(b)))
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(b.cmp(&a))
        })
        .unwrap_or(0);
    coords.column(best)
}

/// Projection of the centered coordinates on their leading principal axis.
pub fn principal_coordinate(coords: &RowMatrix) -> Result<Vec<f64>> {
    let n = coords.rows();
    let mut m = DMatrix::from_fn(n, coords.cols(), |i, j| coords.get(i, j));
    for mut col in m.column_iter_mut() {
        let mu = col.mean();
        col.add_scalar_mut(-mu);
    }
    let dec = linalg::svd(&m, true)?;
    let u = dec.u.expect("requested");
    let s = dec.sigma.first().copied().unwrap_or(0.0);
    Ok(u.column(0).iter().map(|v| v * s).collect())
}

/// Angle difference wrapped to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Standard deviation of angles measured from `center`, after wrapping.
pub fn angular_spread(angles: &[f64], center: f64) -> f64 {
    let d: Vec<f64> = angles.iter().map(|a| wrap_angle(a - center)).collect();
    std_dev(&d)
}

/// Level-set labels of a feature: equal-count bins for scalar features, equal
/// angle bins of `atan2(v0, v1)` for two-component circle features.
pub fn level_set_labels(values: &RowMatrix, bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(param("need at least one level-set bin"));
    }
    let n = values.rows();
    match values.cols() {
        1 => {
            let v = values.column(0);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(core::cmp::Ordering::Equal));
            let mut out = vec![0; n];
            for (rank, &i) in order.iter().enumerate() {
                out[i] = rank * bins / n;
            }
            Ok(out)
        }
        2 => Ok((0..n)
            .map(|i| {
                let a = values.get(i, 0).atan2(values.get(i, 1)) + PI;
                ((a / (2.0 * PI) * bins as f64) as usize).min(bins - 1)
            })
            .collect()),
        c => Err(param(format!("level sets need a 1- or 2-component feature, got {c}"))),
    }
}

/// Fraction of coordinate variance left inside feature level sets:
/// `sum_bins sum_i ||x_i - mean_bin||^2 / sum_i ||x_i - mean||^2`.
pub fn level_set_spread(coords: &RowMatrix, labels: &[usize]) -> Result<f64> {
    let n = coords.rows();
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let c = coords.cols();
    let bins = labels.iter().max().copied().unwrap_or(0) + 1;
    let mut sums = vec![0.0; bins * c];
    let mut counts = vec![0usize; bins];
    let mut total = vec![0.0; c];
    for i in 0..n {
        counts[labels[i]] += 1;
        for (j, v) in coords.row(i).iter().enumerate() {
            sums[labels[i] * c + j] += v;
            total[j] += v;
        }
    }
    let (mut within, mut all) = (0.0, 0.0);
    for i in 0..n {
        let b = labels[i];
        for (j, v) in coords.row(i).iter().enumerate() {
            within += (v - sums[b * c + j] / counts[b] as f64).powi(2);
            all += (v - total[j] / n as f64).powi(2);
        }
    }
    if all == 0.0 {
        return Ok(0.0);
    }
    Ok(within / all)
}
