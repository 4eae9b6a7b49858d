//! Block Krylov eigensolver for the largest eigenvalues of a symmetric
//! operator.
//!
//! The basis is kept orthonormal by full reorthogonalization (classical
//! Gram-Schmidt, applied twice), so the projected matrix is assembled from
//! the orthogonalization coefficients and diagonalized densely. A block
//! start resolves eigenvalues of multiplicity up to the block size without
//! relying on rounding errors. The start block comes from a seeded
//! generator, which makes every solve reproducible.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::sparse::CsrMatrix;
#[allow(unused_imports)]
use num_traits::Float;

/// A symmetric linear operator on `R^n`.
pub trait SymOperator {
    fn dim(&self) -> usize;
    /// `y = A x` for `b` column-major vectors.
    fn apply(&self, x: &[f64], b: usize, y: &mut [f64]);
}

impl SymOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], b: usize, y: &mut [f64]) {
        self.mul_block(x, b, y);
    }
}

impl SymOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], b: usize, y: &mut [f64]) {
        let n = self.nrows();
        let xv = DMatrixView::from_slice(x, n, b);
        let mut yv = DMatrixViewMut::from_slice(y, n, b);
        yv.gemm(1.0, self, &xv, 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Number of leading eigenpairs wanted.
    pub nev: usize,
    pub block: usize,
    /// Residual target during the iteration.
    pub tol: f64,
    /// Largest explicit residual accepted in the final check.
    pub accept_tol: f64,
    pub seed: u64,
    /// Below this size the operator is diagonalized densely.
    pub dense_below: usize,
}

impl EigenOptions {
    pub fn new(nev: usize) -> Self {
        EigenOptions {
            nev,
            block: 8,
            tol: 1e-10,
            accept_tol: 1e-8,
            seed: 0x1d3_5eed,
            dense_below: 300,
        }
    }
}

/// Leading eigenpairs, descending.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// `n x nev`, unit columns.
    pub vectors: DMatrix<f64>,
    /// Explicit `|A v - xi v|` per pair.
    pub residuals: Vec<f64>,
    pub krylov_dim: usize,
}

/// Flips each column so its first entry of largest magnitude is positive.
pub fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Computes the `nev` largest eigenpairs of `op`.
pub fn top_eigenpairs<A: SymOperator>(op: &A, opts: &EigenOptions) -> Result<Eigenpairs> {
    let n = op.dim();
    if opts.nev == 0 || opts.nev > n {
        return Err(param(format!("requested {} eigenpairs of a {n}x{n} operator", opts.nev)));
    }
    let (values, mut vectors, krylov_dim) = if n <= opts.dense_below.max(opts.nev + 2 * opts.block) {
        dense(op, opts.nev)
    } else {
        krylov(op, opts)?
    };
    fix_signs(&mut vectors);
    let residuals = explicit_residuals(op, &values, &vectors);
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if !(worst <= opts.accept_tol) {
        return Err(Error::Convergence {
            message: format!("{} pairs after Krylov dimension {krylov_dim}", opts.nev),
            worst,
            residuals,
        });
    }
    Ok(Eigenpairs {
        values,
        vectors,
        residuals,
        krylov_dim,
    })
}

fn dense<A: SymOperator>(op: &A, nev: usize) -> (Vec<f64>, DMatrix<f64>, usize) {
    let n = op.dim();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut a = DMatrix::zeros(n, n);
    op.apply(eye.as_slice(), n, a.as_mut_slice());
    let a = (&a + a.transpose()) * 0.5;
    let (vals, vecs) = sym_eigen_desc(a);
    (vals[..nev].to_vec(), vecs.columns(0, nev).into_owned(), n)
}

fn explicit_residuals<A: SymOperator>(op: &A, values: &[f64], v: &DMatrix<f64>) -> Vec<f64> {
    let n = v.nrows();
    let b = v.ncols();
    let mut av = vec![0.0; n * b];
    op.apply(v.as_slice(), b, &mut av);
    (0..b)
        .map(|c| {
            let col = &av[c * n..(c + 1) * n];
            col.iter()
                .zip(v.column(c).iter())
                .map(|(a, x)| (a - values[c] * x).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Orthogonalizes the `b` columns in `w` against `q` (`n x m`), twice.
/// Returns the accumulated coefficients (`m x b`).
fn project_out(q: &[f64], n: usize, m: usize, w: &mut [f64], b: usize) -> DMatrix<f64> {
    let qv = DMatrixView::from_slice(&q[..n * m], n, m);
    let mut total = DMatrix::zeros(m, b);
    for _ in 0..2 {
        let c = {
            let wv = DMatrixView::from_slice(w, n, b);
            qv.tr_mul(&wv)
        };
        let mut wv = DMatrixViewMut::from_slice(w, n, b);
        wv.gemm(-1.0, &qv, &c, 1.0);
        total += c;
    }
    total
}

fn random_block(g: &mut ChaCha8Rng, n: usize, b: usize) -> Vec<f64> {
    (0..n * b).map(|_| g.random::<f64>() * 2.0 - 1.0).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Orthonormalizes the block `w` (already orthogonal to the basis) column by
/// column. Collapsed columns are replaced by fresh random directions
/// orthogonal to everything; their coefficients stay zero. Returns the
/// triangular factor (`b x b`).
fn block_qr(
    q: &[f64],
    n: usize,
    m: usize,
    w: &mut [f64],
    b: usize,
    scale: f64,
    g: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(b, b);
    for j in 0..b {
        let start = norm(&w[j * n..(j + 1) * n]);
        for _ in 0..2 {
            for p in 0..j {
                let (head, tail) = w.split_at_mut(j * n);
                let prev = &head[p * n..(p + 1) * n];
                let col = &mut tail[..n];
                let d: f64 = prev.iter().zip(col.iter()).map(|(a, c)| a * c).sum();
                for (c, a) in col.iter_mut().zip(prev) {
                    *c -= d * a;
                }
                r[(p, j)] += d;
            }
        }
        let mut nrm = norm(&w[j * n..(j + 1) * n]);
        if nrm <= 1e-12 * scale.max(start) {
            // Invariant subspace reached in this direction; the column is
            // carried by the earlier ones and the replacement gets weight 0.
            nrm = 0.0;
            for _ in 0..4 {
                let mut fresh = random_block(g, n, 1);
                project_out(q, n, m, &mut fresh, 1);
                for _ in 0..2 {
                    for p in 0..j {
                        let prev = &w[p * n..(p + 1) * n];
                        let d: f64 = prev.iter().zip(&fresh).map(|(a, c)| a * c).sum();
                        for (c, a) in fresh.iter_mut().zip(prev) {
                            *c -= d * a;
                        }
                    }
                }
                let fn_ = norm(&fresh);
                if fn_ > 1e-8 {
                    for (dst, src) in w[j * n..(j + 1) * n].iter_mut().zip(&fresh) {
                        *dst = src / fn_;
                    }
                    break;
                }
            }
        } else {
            for c in &mut w[j * n..(j + 1) * n] {
                *c /= nrm;
            }
        }
        r[(j, j)] = nrm;
    }
    r
}

fn krylov<A: SymOperator>(op: &A, opts: &EigenOptions) -> Result<(Vec<f64>, DMatrix<f64>, usize)> {
    let n = op.dim();
    let nev = opts.nev;
    let b = opts.block.clamp(1, n);
    let mut g = ChaCha8Rng::seed_from_u64(opts.seed);

    // Basis, column-major, grown by blocks.
    let mut q: Vec<f64> = Vec::with_capacity(n * (3 * nev + 4 * b).min(n));
    // Columns of the projected matrix; entries past a column's length are
    // zero (the projected matrix is block tridiagonal).
    let mut h_cols: Vec<Vec<f64>> = Vec::new();

    let mut start = random_block(&mut g, n, b);
    block_qr(&q, n, 0, &mut start, b, 0.0, &mut g);
    q.extend_from_slice(&start);
    let mut m = b;
    let mut cur = 0;
    let mut last_check = 0;
    let mut scale = 0.0f64;

    loop {
        let bw = m - cur;
        let mut w = vec![0.0; n * bw];
        op.apply(&q[cur * n..m * n], bw, &mut w);
        scale = scale.max(norm(&w) / (bw as f64).sqrt());
        let c = project_out(&q, n, m, &mut w, bw);
        for j in 0..bw {
            h_cols.push((0..m).map(|i| c[(i, j)]).collect());
        }
        if m + bw > n {
            // The basis would fill the space: a dense solve is cheaper.
            return Ok(dense(op, nev));
        }
        let r = block_qr(&q, n, m, &mut w, bw, scale, &mut g);
        q.extend_from_slice(&w);
        for (j, col) in h_cols[cur..m].iter_mut().enumerate() {
            col.extend((0..bw).map(|i| r[(i, j)]));
        }

        if m >= nev + b && m - last_check >= (m / 4).max(2 * b) {
            last_check = m;
            let hm = DMatrix::from_fn(m, m, |i, j| h_cols[j].get(i).copied().unwrap_or(0.0));
            let hm = (&hm + hm.transpose()) * 0.5;
            let (theta, s) = sym_eigen_desc(hm);
            // Residual of Ritz pair p is |R s_p| over the newest block rows.
            let converged = (0..nev).all(|p| {
                let mut acc = 0.0;
                for i in 0..bw {
                    let mut v = 0.0;
                    for j in 0..bw {
                        v += r[(i, j)] * s[(cur + j, p)];
                    }
                    acc += v * v;
                }
                acc.sqrt() <= opts.tol * scale.max(1.0)
            });
            if converged {
                let qv = DMatrixView::from_slice(&q[..n * m], n, m);
                let vecs = qv * s.columns(0, nev);
                return Ok((theta[..nev].to_vec(), vecs, m));
            }
        }
        cur = m;
        m += bw;
    }
}
