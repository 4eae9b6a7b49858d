//! Thin wrappers over nalgebra's dense decompositions with sorted outputs.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub sigma: Vec<f64>,
    /// `rows x r`, present when requested.
    pub u: Option<DMatrix<f64>>,
    /// `r x cols`.
    pub vt: DMatrix<f64>,
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Thin SVD. nalgebra's bidiagonal solver is tried first and its factors are
/// checked by reconstruction; on failure (it mishandles some rank-deficient
/// tall inputs) the decomposition is redone by QR plus one-sided Jacobi.
/// Columns of `u` belonging to zero singular values may be zero.
pub fn svd(x: &DMatrix<f64>, want_u: bool) -> Result<Svd> {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return Ok(Svd {
            sigma: Vec::new(),
            u: want_u.then(|| DMatrix::zeros(rows, 0)),
            vt: DMatrix::zeros(0, cols),
        });
    }
    if let Some(dec) = x.clone().try_svd(true, true, f64::EPSILON, 0) {
        let (u, vt) = (dec.u.expect("requested"), dec.v_t.expect("requested"));
        let sigma: Vec<f64> = dec.singular_values.iter().copied().collect();
        if reconstructs(x, &u, &sigma, &vt) {
            return Ok(sorted(sigma, want_u.then_some(u), vt));
        }
    }
    let (sigma, u, vt) = jacobi_svd(x)?;
    Ok(sorted(sigma, want_u.then_some(u), vt))
}

fn reconstructs(x: &DMatrix<f64>, u: &DMatrix<f64>, sigma: &[f64], vt: &DMatrix<f64>) -> bool {
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return false;
    }
    let mut us = u.clone();
    for (j, s) in sigma.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    let err = (us * vt - x).norm();
    let dim = x.nrows().max(x.ncols()) as f64;
    err <= 64.0 * f64::EPSILON * dim.sqrt() * x.norm()
}

fn sorted(raw: Vec<f64>, u_raw: Option<DMatrix<f64>>, vt_raw: DMatrix<f64>) -> Svd {
    let order = descending_order(&raw);
    let r = order.len();
    let mut vt = DMatrix::zeros(r, vt_raw.ncols());
    for (new, &old) in order.iter().enumerate() {
        vt.set_row(new, &vt_raw.row(old));
    }
    let u = u_raw.map(|u_raw| {
        let mut u = DMatrix::zeros(u_raw.nrows(), r);
        for (new, &old) in order.iter().enumerate() {
            u.set_column(new, &u_raw.column(old));
        }
        u
    });
    Svd {
        sigma: order.iter().map(|&o| raw[o].max(0.0)).collect(),
        u,
        vt,
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Unsorted thin SVD `(sigma, u, vt)` by Householder QR followed by
/// one-sided Jacobi rotations on the triangular factor.
fn jacobi_svd(x: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if x.nrows() < x.ncols() {
        let (s, u, vt) = jacobi_svd(&x.transpose())?;
        return Ok((s, vt.transpose(), u.transpose()));
    }
    let qr = x.clone().qr();
    let q = qr.q();
    let mut g = qr.r();
    let n = g.ncols();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * n as f64;
    // Columns this small cannot change any singular value above rounding.
    let floor = (f64::EPSILON * g.norm()).powi(2);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for qq in p + 1..n {
                let alpha = g.column(p).norm_squared();
                let beta = g.column(qq).norm_squared();
                let gamma = g.column(p).dot(&g.column(qq));
                if alpha <= floor || beta <= floor || gamma.abs() <= tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut g, p, qq, c, s);
                rotate_columns(&mut v, p, qq, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD of a {}x{} matrix did not converge",
            x.nrows(),
            x.ncols()
        )));
    }
    let sigma: Vec<f64> = (0..n).map(|j| g.column(j).norm()).collect();
    for (j, s) in sigma.iter().enumerate() {
        if *s > 0.0 {
            g.column_mut(j).unscale_mut(*s);
        } else {
            g.column_mut(j).fill(0.0);
        }
    }
    Ok((sigma, q * g, v.transpose()))
}

fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let rows = a.nrows();
    let data = a.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * rows);
    let cp = &mut head[p * rows..(p + 1) * rows];
    let cq = &mut tail[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Singular values only, descending.
pub fn singular_values(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(svd(x, false)?.sigma)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
/// Columns of the returned matrix are the eigenvectors.
pub fn sym_eigen_desc(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = a.symmetric_eigen();
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = descending_order(&raw);
    let mut vecs = DMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vecs.set_column(new, &eig.eigenvectors.column(old));
    }
    (order.iter().map(|&o| raw[o]).collect(), vecs)
}

/// Orthonormalizes columns in place by modified Gram-Schmidt, run twice.
/// Columns that collapse below `tol` relative to their input norm are zeroed
/// and reported.
pub fn orthonormalize_columns(a: &mut DMatrix<f64>, tol: f64) -> Vec<usize> {
    let cols = a.ncols();
    let mut collapsed = Vec::new();
    for j in 0..cols {
        let start = a.column(j).norm();
        for _ in 0..2 {
            for p in 0..j {
                let proj = a.column(p).dot(&a.column(j));
                let pc = a.column(p).into_owned();
                a.column_mut(j).axpy(-proj, &pc, 1.0);
            }
        }
        let nrm = a.column(j).norm();
        if nrm <= tol * start || nrm == 0.0 {
            a.column_mut(j).fill(0.0);
            collapsed.push(j);
        } else {
            a.column_mut(j).unscale_mut(nrm);
        }
    }
    collapsed
}

/// Solves `min ||a z - b||_F` with the pseudo-inverse truncated at
/// `rcond * sigma_max`. Returns the solution and the retained rank.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Result<(DMatrix<f64>, usize)> {
    lstsq_capped(a, b, rcond, usize::MAX)
}

/// [`lstsq`] keeping at most `max_rank` leading singular directions; the
/// solution is the full one projected onto the leading right singular
/// subspace.
pub fn lstsq_capped(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64, max_rank: usize) -> Result<(DMatrix<f64>, usize)> {
    let dec = svd(a, true)?;
    let u = dec.u.as_ref().expect("requested");
    let smax = dec.sigma.first().copied().unwrap_or(0.0);
    let rank = dec
        .sigma
        .iter()
        .take_while(|&&s| s > rcond * smax && s > 0.0)
        .count()
        .min(max_rank);
    let mut coef = u.columns(0, rank).tr_mul(b);
    for (r, s) in dec.sigma.iter().take(rank).enumerate() {
        coef.row_mut(r).unscale_mut(*s);
    }
    Ok((dec.vt.rows(0, rank).tr_mul(&coef), rank))
}
