//! Diffusion-map normalizations, the eigensolve, density-normalized
//! eigenfunctions, the rescaled map and its Nyström extension.
//!
//! Eigenvalue convention: the kernel `exp(-d^2 / 2 eps)` acts like
//! `exp((eps/2) Delta)` after normalization, so `lambda_r = 2 log(xi_r) / eps`
//! estimates the Laplace-Beltrami eigenvalues.
//!
//! Density convention: `q(i) = D_i / (N (2 pi eps)^(d/2))` is a probability
//! density, so `(1/N) sum_i phi_r(x_i)^2 / q(i)` approximates the `L^2` norm
//! on the manifold.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::data::{DiffusionEmbedding, FeatureSet, NeighborGraph, PointCloud, RowMatrix};
use crate::eigen::{top_eigenpairs, EigenOptions};
use crate::error::{param, Error, Result};
use crate::kernels::{
    self, anisotropic_distance, assemble_kernel, global_bandwidth, DistanceForm, SparseKernel,
    Symmetrization,
};
use crate::local::{self, AnalysisOptions, DerivativeField};
use crate::neighbors::{self, knn};
use crate::sparse::CsrMatrix;
#[allow(unused_imports)]
use num_traits::Float;

/// `K^ = D^^-1 K D^^-1` with `K = D^-1 J D^-1`.
#[derive(Debug, Clone)]
pub struct NormalizedKernel {
    pub khat: CsrMatrix,
    /// Row sums of `J`.
    pub right: Vec<f64>,
    /// Square roots of the row sums of `K`; proportional to the top
    /// eigenvector of `K^`.
    pub dhat: Vec<f64>,
}

pub fn normalize_kernel(j: &SparseKernel) -> Result<NormalizedKernel> {
    let right = j.entries.row_sums();
    if let Some(i) = right.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Connectivity(format!("sample {i} has an empty kernel row")));
    }
    let k = j.entries.map_values(|a, b, v| v / (right[a] * right[b]));
    let dhat: Vec<f64> = k.row_sums().iter().map(|s| s.sqrt()).collect();
    let khat = k.map_values(|a, b, v| v / (dhat[a] * dhat[b]));
    Ok(NormalizedKernel { khat, right, dhat })
}

/// Invariant checks recorded after every solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralChecks {
    /// `|xi_0 - 1|`.
    pub top_gap: f64,
    /// Coefficient of variation of `phi_0`.
    pub phi0_cv: f64,
    /// Largest `|(1/N) sum phi_r^2 / q - 1|`; zero before density
    /// normalization.
    pub norm_deviation: f64,
}

/// Leading spectrum of `K^` and the eigenfunctions derived from it.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Descending; only positive eigenvalues are kept.
    pub xi: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `N x (M+1)`: `phi^ = phi~ / D^` until density normalization,
    /// afterwards the normalized eigenfunctions.
    pub phi: DMatrix<f64>,
    /// Density used by the normalization (empty before it).
    pub q: Vec<f64>,
    pub epsilon: f64,
    /// Explicit residuals of the symmetric eigenpairs.
    pub residuals: Vec<f64>,
    pub krylov_dim: usize,
    pub checks: SpectralChecks,
    pub warnings: Vec<String>,
}

impl SpectralDecomposition {
    pub fn modes(&self) -> usize {
        self.xi.len()
    }
}

fn coefficient_of_variation(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Top `count` eigenpairs of `K^`, converted to `phi^ = phi~ / D^`.
///
/// Non-positive eigenvalues end the list with a warning.
pub fn eigensolve(
    nk: &NormalizedKernel,
    count: usize,
    eps: f64,
    opts: &EigenOptions,
) -> Result<SpectralDecomposition> {
    if !(eps > 0.0) {
        return Err(param(format!("bandwidth must be positive, got {eps}")));
    }
    let n = nk.khat.n();
    let mut eo = opts.clone();
    eo.nev = count;
    let pairs = top_eigenpairs(&nk.khat, &eo)?;
    let mut warnings = Vec::new();
    let keep = pairs.values.iter().take_while(|&&x| x > 0.0).count();
    if keep == 0 {
        return Err(Error::Numerical("leading eigenvalue is not positive".into()));
    }
    if keep < count {
        warnings.push(format!(
            "dropped {} modes with non-positive eigenvalue (first {:e})",
            count - keep,
            pairs.values[keep]
        ));
    }
    let xi = pairs.values[..keep].to_vec();
    let lambda: Vec<f64> = xi.iter().map(|x| 2.0 * x.ln() / eps).collect();
    let mut phi = pairs.vectors.columns(0, keep).into_owned();
    for mut col in phi.column_iter_mut() {
        for (v, d) in col.iter_mut().zip(&nk.dhat) {
            *v /= d;
        }
    }
    let checks = SpectralChecks {
        top_gap: (xi[0] - 1.0).abs(),
        phi0_cv: coefficient_of_variation(phi.column(0).iter().copied()),
        norm_deviation: 0.0,
    };
    debug_assert_eq!(phi.nrows(), n);
    Ok(SpectralDecomposition {
        xi,
        lambda,
        phi,
        q: Vec::new(),
        epsilon: eps,
        residuals: pairs.residuals[..keep].to_vec(),
        krylov_dim: pairs.krylov_dim,
        checks,
        warnings,
    })
}

/// Rescales each `phi_r` so that `(1/N) sum_i phi_r(x_i)^2 / q(i) = 1`.
pub fn density_normalize(mut dec: SpectralDecomposition, q: &[f64]) -> Result<SpectralDecomposition> {
    let n = dec.phi.nrows();
    if q.len() != n {
        return Err(Error::Shape(format!("{} densities for {n} samples", q.len())));
    }
    if let Some(i) = q.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(param(format!("density at sample {i} is not positive")));
    }
    let mut worst = 0.0f64;
    for mut col in dec.phi.column_iter_mut() {
        let norm = (col.iter().zip(q).map(|(p, w)| p * p / w).sum::<f64>() / n as f64).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numerical("eigenfunction vanishes identically".into()));
        }
        col.unscale_mut(norm);
        let check = col.iter().zip(q).map(|(p, w)| p * p / w).sum::<f64>() / n as f64;
        worst = worst.max((check - 1.0).abs());
    }
    dec.q = q.to_vec();
    dec.checks.norm_deviation = worst;
    dec.checks.phi0_cv = coefficient_of_variation(dec.phi.column(0).iter().copied());
    Ok(dec)
}

/// Parameters of the rescaled map.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledMapParams {
    /// Diffusion time.
    pub s: f64,
    /// Number of nontrivial modes kept.
    pub modes: usize,
    pub local_dims: Vec<f64>,
}

/// `(2 pi)^(d/4) (4 s)^(d/4 + 1/2)`.
pub fn rescaling_prefactor(d: f64, s: f64) -> f64 {
    (2.0 * PI).powf(d / 4.0) * (4.0 * s).powf(d / 4.0 + 0.5)
}

/// Coordinates `prefactor(d_i, s) * exp(lambda_r s) phi_r(x_i)` for
/// `r = 1..=M`. Columns past the available modes are zero.
pub fn rescaled_map(
    dec: &SpectralDecomposition,
    params: &RescaledMapParams,
    iteration: usize,
) -> Result<DiffusionEmbedding> {
    let n = dec.phi.nrows();
    if !(params.s > 0.0) || params.modes == 0 {
        return Err(param("rescaled map needs s > 0 and at least one mode"));
    }
    if params.local_dims.len() != n {
        return Err(Error::Shape(format!("{} local dimensions for {n} samples", params.local_dims.len())));
    }
    let avail = dec.modes().saturating_sub(1).min(params.modes);
    let weights: Vec<f64> = (1..=avail).map(|r| (dec.lambda[r] * params.s).exp()).collect();
    let mut coords = RowMatrix::zeros(n, params.modes);
    for i in 0..n {
        let pre = rescaling_prefactor(params.local_dims[i], params.s);
        let row = coords.row_mut(i);
        for r in 0..avail {
            row[r] = pre * weights[r] * dec.phi[(i, r + 1)];
        }
    }
    let e = DiffusionEmbedding {
        coords,
        iteration,
        s: params.s,
        local_dims: params.local_dims.clone(),
    };
    e.validate()?;
    Ok(e)
}

/// Options of one diffusion-map pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOptions {
    pub k: usize,
    pub k2: usize,
    /// Number of nontrivial modes `M`.
    pub modes: usize,
    pub analysis: AnalysisOptions,
    /// Fixed diffusion time; `None` uses `s_factor * eps`.
    pub s: Option<f64>,
    pub s_factor: f64,
    pub form: DistanceForm,
    pub symmetrization: Symmetrization,
    pub eigen: EigenOptions,
}

impl Default for PassOptions {
    fn default() -> Self {
        PassOptions {
            k: 500,
            k2: 32,
            modes: 250,
            analysis: AnalysisOptions::default(),
            s: None,
            s_factor: 10.0,
            form: DistanceForm::Blend,
            symmetrization: Symmetrization::Average,
            eigen: EigenOptions::new(251),
        }
    }
}

impl PassOptions {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 || self.k > n {
            return Err(param(format!("k = {} must lie in 2..={n}", self.k)));
        }
        if self.k2 == 0 || self.k2 > self.k {
            return Err(param(format!("k2 = {} must lie in 1..=k", self.k2)));
        }
        if self.modes == 0 || self.modes + 1 > n {
            return Err(param(format!("M = {} needs 1 <= M < N = {n}", self.modes)));
        }
        if let Some(s) = self.s {
            if !(s > 0.0) {
                return Err(param(format!("diffusion time must be positive, got {s}")));
            }
        } else if !(self.s_factor > 0.0) {
            return Err(param("s factor must be positive"));
        }
        Ok(())
    }
}

/// Everything a Nyström extension needs to rebuild a kernel row.
#[derive(Debug, Clone)]
pub struct KernelRecipe {
    pub points: PointCloud,
    pub graph: NeighborGraph,
    pub derivs: Option<Vec<DMatrix<f64>>>,
    pub tau: f64,
    pub form: DistanceForm,
    pub symmetrization: Symmetrization,
    pub epsilon: f64,
    /// Row sums of the training kernel.
    pub right: Vec<f64>,
    pub local_dims: Vec<f64>,
}

/// Output of one pass.
#[derive(Debug, Clone)]
pub struct DiffusionPass {
    pub field: DerivativeField,
    pub epsilon: f64,
    pub s: f64,
    pub decomposition: SpectralDecomposition,
    pub embedding: DiffusionEmbedding,
    pub recipe: KernelRecipe,
    pub kernel_nnz: usize,
}

/// One diffusion-map pass on `points`: k-NN, local analysis, (anisotropic)
/// distances, global bandwidth, kernel, spectrum and rescaled map.
///
/// Errors carry the stage name; `iteration` labels them and the embedding.
pub fn diffusion_pass(
    points: &PointCloud,
    features: Option<&FeatureSet>,
    tau: f64,
    opts: &PassOptions,
    iteration: usize,
) -> Result<DiffusionPass> {
    let n = points.len();
    opts.validate(n)?;
    if let Some(f) = features {
        f.check_aligned(points)?;
    }
    if tau > 0.0 && features.is_none() {
        return Err(param("tau > 0 needs feature values"));
    }
    let graph = knn(points, opts.k).map_err(|e| e.at(iteration, "neighbors"))?;
    let mut aopts = opts.analysis.clone();
    aopts.skip_derivative = aopts.skip_derivative || tau == 0.0;
    let field = local::analyze(points, &graph, features, &aopts).map_err(|e| e.at(iteration, "local analysis"))?;
    let dist = anisotropic_distance(points, &graph, field.derivs.as_deref(), tau, opts.form)
        .map_err(|e| e.at(iteration, "distances"))?;
    let eps = global_bandwidth(&dist, opts.k2).map_err(|e| e.at(iteration, "bandwidth"))?;
    let kernel = assemble_kernel(&dist, &graph, eps, opts.symmetrization).map_err(|e| e.at(iteration, "kernel"))?;
    let (components, labels) = kernel.entries.components();
    if components > 1 {
        let other = labels.iter().position(|&l| l != 0).unwrap_or(0);
        return Err(Error::Connectivity(format!(
            "kernel graph has {components} components (sample {other} is cut off from sample 0)"
        ))
        .at(iteration, "kernel"));
    }
    let nk = normalize_kernel(&kernel).map_err(|e| e.at(iteration, "normalization"))?;
    let dec = eigensolve(&nk, opts.modes + 1, eps, &opts.eigen).map_err(|e| e.at(iteration, "eigensolve"))?;
    let dec = density_normalize(dec, &field.density).map_err(|e| e.at(iteration, "density normalization"))?;
    let s = opts.s.unwrap_or(opts.s_factor * eps);
    let params = RescaledMapParams {
        s,
        modes: opts.modes,
        local_dims: field.local_dims.clone(),
    };
    let embedding = rescaled_map(&dec, &params, iteration + 1).map_err(|e| e.at(iteration, "rescaled map"))?;
    let recipe = KernelRecipe {
        points: points.clone(),
        graph,
        derivs: field.derivs.clone(),
        tau,
        form: opts.form,
        symmetrization: opts.symmetrization,
        epsilon: eps,
        right: nk.right.clone(),
        local_dims: field.local_dims.clone(),
    };
    Ok(DiffusionPass {
        kernel_nnz: kernel.entries.nnz(),
        field,
        epsilon: eps,
        s,
        decomposition: dec,
        embedding,
        recipe,
    })
}

/// Out-of-sample values at one point.
#[derive(Debug, Clone)]
pub struct NystromExtension {
    /// `phi_r(x_new)` for `r = 0..=M`.
    pub phi: Vec<f64>,
    /// Rescaled coordinates (`M` entries).
    pub embedding: Vec<f64>,
    /// Nearest training sample (supplies `d` and the derivative).
    pub nearest: usize,
    pub warnings: Vec<String>,
}

/// Extends the eigenfunctions to `x_new` through its kernel row:
/// `phi_r(x) = (1/xi_r) sum_j P(x, j) phi_r(x_j)` with `P` the row of the
/// training Markov normalization.
pub fn nystrom_extend(
    x_new: &[f64],
    recipe: &KernelRecipe,
    dec: &SpectralDecomposition,
    s: f64,
) -> Result<NystromExtension> {
    let pts = &recipe.points;
    let k = recipe.graph.k();
    let list = neighbors::knn_query(pts, x_new, k)?;
    let (nearest, nearest_dist) = list[0];
    let mut warnings = Vec::new();
    let support = (0..pts.len()).map(|j| recipe.graph.radius(j)).fold(0.0, f64::max);
    if nearest_dist > support {
        warnings.push(format!(
            "query lies {nearest_dist:e} from the nearest sample, beyond the support radius {support:e}"
        ));
    }
    let coincident = (nearest_dist == 0.0).then_some(nearest);
    let half = match recipe.symmetrization {
        Symmetrization::Average => 0.5,
        Symmetrization::Sum => 1.0,
    };
    let length = |dh: Option<&DMatrix<f64>>, from: &[f64], to: &[f64], d: f64| -> f64 {
        match (dh, recipe.tau > 0.0) {
            (Some(dh), true) => {
                let diff: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
                let mut fsq = 0.0;
                for r in 0..dh.nrows() {
                    let s: f64 = (0..dh.ncols()).map(|c| dh[(r, c)] * diff[c]).sum();
                    fsq += s * s;
                }
                match recipe.form {
                    DistanceForm::Blend => (1.0 - recipe.tau) * d + recipe.tau * fsq.sqrt(),
                    DistanceForm::Covariance => ((1.0 - recipe.tau) * d * d + recipe.tau * fsq).sqrt(),
                }
            }
            _ => d,
        }
    };
    let derivs = recipe.derivs.as_deref();
    let gauss = |d: f64| {
        let v = (-d * d / (2.0 * recipe.epsilon)).exp();
        if v < kernels::DROP_BELOW {
            0.0
        } else {
            v
        }
    };
    // Forward part: the query's own stencil.
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * k);
    for &(j, d) in &list {
        let dh = derivs.map(|v| &v[nearest]);
        let v = gauss(length(dh, x_new, pts.point(j), d));
        if v > 0.0 {
            row.push((j, half * v));
        }
    }
    // Backward part: samples whose stencil would contain the query.
    for j in 0..pts.len() {
        let inside = match coincident {
            Some(c) => recipe.graph.indices(j).contains(&c),
            None => {
                let d2 = neighbors::sq_dist(pts.point(j), x_new);
                d2.sqrt() < recipe.graph.radius(j)
            }
        };
        if inside {
            let d = neighbors::sq_dist(pts.point(j), x_new).sqrt();
            let v = gauss(length(derivs.map(|v| &v[j]), pts.point(j), x_new, d));
            if v > 0.0 {
                row.push((j, half * v));
            }
        }
    }
    row.sort_by_key(|e| e.0);
    let total: f64 = row.iter().map(|e| e.1).sum();
    let modes = dec.modes();
    let mut phi = vec![0.0; modes];
    if total > 0.0 {
        let kvals: Vec<(usize, f64)> = row
            .iter()
            .map(|&(j, v)| (j, v / (total * recipe.right[j])))
            .collect();
        let ksum: f64 = kvals.iter().map(|e| e.1).sum();
        for (r, out) in phi.iter_mut().enumerate() {
            let acc: f64 = kvals.iter().map(|&(j, v)| v * dec.phi[(j, r)]).sum();
            *out = acc / (ksum * dec.xi[r]);
        }
    } else {
        warnings.push("kernel row vanishes; extension set to zero".into());
    }
    let pre = rescaling_prefactor(recipe.local_dims[nearest], s);
    let embedding = (1..modes).map(|r| pre * (dec.lambda[r] * s).exp() * phi[r]).collect();
    Ok(NystromExtension {
        phi,
        embedding,
        nearest,
        warnings,
    })
}

#[cfg(test)]
mod tests;
