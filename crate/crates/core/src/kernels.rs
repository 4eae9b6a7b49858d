//! Feature-biased distances and sparse Gaussian kernels on the k-NN stencil.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::data::{NeighborGraph, PointCloud};
use crate::error::{param, Error, Result};
use crate::sparse::CsrMatrix;
#[allow(unused_imports)]
use num_traits::Float;

/// Entries below this are dropped from the kernel.
pub const DROP_BELOW: f64 = 1e-15;

/// How the Euclidean and feature-space lengths are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceForm {
    /// `(1 - tau) d + tau |DH (x_j - x_i)|`.
    #[default]
    Blend,
    /// `sqrt((1 - tau) d^2 + tau |DH (x_j - x_i)|^2)`, the Mahalanobis
    /// distance of the covariance construction.
    Covariance,
}

/// How the one-sided kernel `J~` is made symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetrization {
    /// `(J~ + J~^T) / 2`.
    #[default]
    Average,
    /// `J~ + J~^T`.
    Sum,
}

/// `d_H(i, j)` aligned with a neighbor graph; not symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropicDistance {
    pub k: usize,
    /// `N x k`, row-major.
    pub values: Vec<f64>,
    pub tau: f64,
    pub form: DistanceForm,
}

impl AnisotropicDistance {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean neighbor distances as a `tau = 0` distance table.
    pub fn isotropic(graph: &NeighborGraph) -> Self {
        AnisotropicDistance {
            k: graph.k(),
            values: graph.distances.clone(),
            tau: 0.0,
            form: DistanceForm::Blend,
        }
    }
}

/// Blends Euclidean neighbor distances with lengths measured through the
/// per-point derivative estimates.
///
/// `derivs` may be `None` only when `tau == 0`.
pub fn anisotropic_distance(
    points: &PointCloud,
    graph: &NeighborGraph,
    derivs: Option<&[DMatrix<f64>]>,
    tau: f64,
    form: DistanceForm,
) -> Result<AnisotropicDistance> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(param(format!("tau must lie in [0, 1], got {tau}")));
    }
    if tau == 0.0 {
        return Ok(AnisotropicDistance::isotropic(graph));
    }
    let derivs = derivs.ok_or_else(|| param("tau > 0 needs derivative estimates"))?;
    if derivs.len() != graph.len() || graph.len() != points.len() {
        return Err(Error::Shape(format!(
            "{} derivatives, {} graph rows, {} samples",
            derivs.len(),
            graph.len(),
            points.len()
        )));
    }
    let k = graph.k();
    let m = points.dim();
    let mut values = Vec::with_capacity(graph.len() * k);
    let mut diff = alloc::vec![0.0; m];
    for i in 0..graph.len() {
        let dh = &derivs[i];
        if dh.ncols() != m {
            return Err(Error::Shape(format!("derivative {i} has {} columns, expected {m}", dh.ncols())));
        }
        let xi = points.point(i);
        for (&j, &d) in graph.indices(i).iter().zip(graph.distances(i)) {
            if j == i {
                values.push(0.0);
                continue;
            }
            for (t, (a, b)) in diff.iter_mut().zip(points.point(j).iter().zip(xi)) {
                *t = a - b;
            }
            let mut fsq = 0.0;
            for r in 0..dh.nrows() {
                let mut s = 0.0;
                for (c, t) in diff.iter().enumerate() {
                    s += dh[(r, c)] * t;
                }
                fsq += s * s;
            }
            values.push(match form {
                DistanceForm::Blend => (1.0 - tau) * d + tau * fsq.sqrt(),
                DistanceForm::Covariance => ((1.0 - tau) * d * d + tau * fsq).sqrt(),
            });
        }
    }
    Ok(AnisotropicDistance {
        k,
        values,
        tau,
        form,
    })
}

/// Mean squared distance to the first `k2` listed neighbors (self
/// included).
pub fn global_bandwidth(dist: &AnisotropicDistance, k2: usize) -> Result<f64> {
    if k2 == 0 || k2 > dist.k {
        return Err(param(format!("k2 = {k2} must lie in 1..={}", dist.k)));
    }
    let n = dist.len();
    let mut total = 0.0;
    for i in 0..n {
        for d in &dist.row(i)[..k2] {
            total += d * d;
        }
    }
    let eps = total / (n * k2) as f64;
    if !(eps > 0.0) {
        return Err(Error::DegenerateGeometry(
            "all neighbor distances vanish; no bandwidth can be set".into(),
        ));
    }
    Ok(eps)
}

/// Symmetric sparse kernel on the union of the k-NN stencils.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseKernel {
    pub entries: CsrMatrix,
    pub epsilon: f64,
    pub tau: f64,
    pub symmetrization: Symmetrization,
}

/// `J(i, j) = exp(-d_H(i,j)^2 / 2 eps)` on the stencil, then symmetrized.
pub fn assemble_kernel(
    dist: &AnisotropicDistance,
    graph: &NeighborGraph,
    eps: f64,
    sym: Symmetrization,
) -> Result<SparseKernel> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(param(format!("kernel bandwidth must be positive, got {eps}")));
    }
    if dist.len() != graph.len() || dist.k != graph.k() {
        return Err(Error::Shape("distance table does not match the neighbor graph".into()));
    }
    let n = graph.len();
    let half = match sym {
        Symmetrization::Average => 0.5,
        Symmetrization::Sum => 1.0,
    };
    let mut own: Vec<Vec<(usize, f64)>> = (0..n).map(|_| Vec::with_capacity(graph.k())).collect();
    let mut incoming: Vec<Vec<(usize, f64)>> = (0..n).map(|_| Vec::new()).collect();
    for i in 0..n {
        for (&j, &d) in graph.indices(i).iter().zip(dist.row(i)) {
            let v = (-d * d / (2.0 * eps)).exp();
            if v < DROP_BELOW {
                continue;
            }
            own[i].push((j, half * v));
            incoming[j].push((i, half * v));
        }
    }
    let rows: Vec<Vec<(usize, f64)>> = own
        .into_iter()
        .zip(incoming)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    let entries = CsrMatrix::from_rows(rows);
    Ok(SparseKernel {
        entries,
        epsilon: eps,
        tau: dist.tau,
        symmetrization: sym,
    })
}
