//! The iterated diffusion map loop and its diagnostics.
//!
//! Each iteration runs a full diffusion pass on the current coordinates with
//! the original feature values as regression targets, and the rescaled map
//! becomes the next set of coordinates. The module also holds the linear
//! decoder to the feature's own diffusion coordinates, the fixed-point
//! residual, and a frozen-coefficient integrator of the metric flow used as a
//! test oracle.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DiffusionEmbedding, FeatureSet, PointCloud, RowMatrix};
use crate::eigen::EigenOptions;
use crate::error::{param, Error, Result};
use crate::kernels::{DistanceForm, Symmetrization};
use crate::linalg;
use crate::local::{self, AnalysisOptions, ScanOptions, SelectionMode};
use crate::neighbors::{knn, knn_of_sample};
use crate::spectral::{diffusion_pass, PassOptions, SpectralDecomposition};
use crate::local::DerivativeField;
#[allow(unused_imports)]
use num_traits::Float;

/// When the loop stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run exactly `iterations` passes.
    Fixed,
    /// Stop once the held-out decoder residual fails to improve. The feature
    /// set is embedded once with the plain diffusion map as decoder target.
    CrossValidation { holdout: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdmParams {
    pub tau: f64,
    pub iterations: usize,
    pub k: usize,
    pub k2: usize,
    /// Bandwidth grid length `L`.
    pub grid_len: usize,
    /// Nontrivial modes `M` kept per pass.
    pub modes: usize,
    pub mode: SelectionMode,
    pub seed: u64,
    pub form: DistanceForm,
    pub symmetrization: Symmetrization,
    /// Fixed diffusion time; `None` uses `s_factor * eps` in every pass.
    pub s: Option<f64>,
    pub s_factor: f64,
    pub stop: StopRule,
    /// Permits `tau = 0` (degeneracy runs).
    pub allow_zero_tau: bool,
    /// Restricts derivatives to the estimated tangent frame before they
    /// enter the kernel.
    pub tangent_projection: bool,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            tau: 0.5,
            iterations: 4,
            k: 500,
            k2: 32,
            grid_len: 100,
            modes: 250,
            mode: SelectionMode::Simple,
            seed: 0,
            form: DistanceForm::Blend,
            symmetrization: Symmetrization::Average,
            s: None,
            s_factor: 10.0,
            stop: StopRule::Fixed,
            allow_zero_tau: false,
            tangent_projection: false,
        }
    }
}

impl IdmParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        let tau_ok = if self.allow_zero_tau {
            (0.0..1.0).contains(&self.tau)
        } else {
            self.tau > 0.0 && self.tau < 1.0
        };
        if !tau_ok {
            return Err(param(format!("tau = {} must lie strictly inside (0, 1)", self.tau)));
        }
        if self.iterations == 0 {
            return Err(param("need at least one iteration"));
        }
        if let StopRule::CrossValidation { holdout } = self.stop {
            if !(holdout > 0.0 && holdout < 1.0) {
                return Err(param(format!("holdout fraction {holdout} outside (0, 1)")));
            }
        }
        self.pass_options().validate(n)
    }

    pub fn pass_options(&self) -> PassOptions {
        let mut eigen = EigenOptions::new(self.modes + 1);
        eigen.seed = self.seed;
        PassOptions {
            k: self.k,
            k2: self.k2,
            modes: self.modes,
            analysis: AnalysisOptions {
                scan: ScanOptions {
                    grid_len: self.grid_len,
                    mode: self.mode,
                    ..ScanOptions::default()
                },
                skip_derivative: false,
                tangent_projection: self.tangent_projection,
            },
            s: self.s,
            s_factor: self.s_factor,
            form: self.form,
            symmetrization: self.symmetrization,
            eigen,
        }
    }
}

/// Record of one pass `x^(l) -> x^(l+1)`.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub field: DerivativeField,
    pub epsilon: f64,
    pub s: f64,
    pub decomposition: SpectralDecomposition,
    pub kernel_nnz: usize,
}

#[derive(Debug, Clone)]
pub struct IdmTrajectory {
    /// `x^(0)` (the input) through the last computed iteration.
    pub embeddings: Vec<DiffusionEmbedding>,
    pub iterations: Vec<IterationRecord>,
    /// Held-out decoder residual after each pass (cross-validation runs).
    pub cv_residuals: Vec<f64>,
    /// Iteration with the lowest held-out residual, or the last one.
    pub selected: usize,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

impl IdmTrajectory {
    pub fn last(&self) -> &DiffusionEmbedding {
        self.embeddings.last().expect("trajectory holds the input")
    }
}

/// Runs the loop. Features stay the original `y_i` in every pass.
pub fn idm_run(points: &PointCloud, features: &FeatureSet, params: &IdmParams) -> Result<IdmTrajectory> {
    params.validate(points.len())?;
    features.check_aligned(points)?;
    let opts = params.pass_options();
    let cv_target = match params.stop {
        StopRule::Fixed => None,
        StopRule::CrossValidation { holdout } => {
            let target = feature_embedding(features, params).map_err(|e| e.at(0, "feature embedding"))?;
            let split = holdout_split(points.len(), holdout, params.seed)?;
            Some((target, split))
        }
    };
    let mut embeddings = vec![DiffusionEmbedding::raw(points)];
    let mut iterations = Vec::new();
    let mut cv_residuals = Vec::new();
    let mut warnings = Vec::new();
    let mut stopped_early = false;
    let mut x = points.clone();
    for it in 0..params.iterations {
        let pass = diffusion_pass(&x, Some(features), params.tau, &opts, it)?;
        for w in pass.field.warnings.iter().chain(&pass.decomposition.warnings) {
            if warnings.len() < 64 {
                warnings.push(format!("iteration {it}: {w}"));
            }
        }
        x = pass.embedding.to_cloud().map_err(|e| e.at(it, "embedding"))?;
        embeddings.push(pass.embedding);
        iterations.push(IterationRecord {
            field: pass.field,
            epsilon: pass.epsilon,
            s: pass.s,
            decomposition: pass.decomposition,
            kernel_nnz: pass.kernel_nnz,
        });
        if let Some((target, (train, test))) = &cv_target {
            let r = holdout_residual(&x, &target.coords, train, test).map_err(|e| e.at(it, "cross-validation"))?;
            let improved = cv_residuals.last().is_none_or(|&prev| r < prev);
            cv_residuals.push(r);
            if !improved {
                stopped_early = it + 1 < params.iterations;
                break;
            }
        }
    }
    let selected = if cv_residuals.is_empty() {
        embeddings.len() - 1
    } else {
        1 + argmin(&cv_residuals)
    };
    Ok(IdmTrajectory {
        embeddings,
        iterations,
        cv_residuals,
        selected,
        stopped_early,
        warnings,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Rescaled diffusion coordinates of the feature set itself (`tau = 0`).
pub fn feature_embedding(features: &FeatureSet, params: &IdmParams) -> Result<DiffusionEmbedding> {
    let cloud = PointCloud::new(features.matrix().clone())?;
    let mut opts = params.pass_options();
    opts.analysis.skip_derivative = true;
    Ok(diffusion_pass(&cloud, None, 0.0, &opts, 0)?.embedding)
}

fn holdout_split(n: usize, holdout: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de));
    let test = ((n as f64 * holdout).round() as usize).clamp(1, n - 1);
    let (a, b) = idx.split_at(test);
    let (mut train, mut held) = (b.to_vec(), a.to_vec());
    train.sort_unstable();
    held.sort_unstable();
    Ok((train, held))
}

fn holdout_residual(x: &PointCloud, target: &RowMatrix, train: &[usize], test: &[usize]) -> Result<f64> {
    let dec = fit_decoder(&x.matrix().select_rows(train), &target.select_rows(train))?;
    dec.residual_on(&x.matrix().select_rows(test), &target.select_rows(test))
}

/// Neighbor lists (original sample indices, self first) of `base` in every
/// embedding of the trajectory.
pub fn neighbor_evolution(traj: &IdmTrajectory, base: usize, count: usize) -> Result<Vec<Vec<usize>>> {
    traj.embeddings
        .iter()
        .map(|e| {
            let cloud = e.to_cloud()?;
            Ok(knn_of_sample(&cloud, base, count)?.into_iter().map(|p| p.0).collect())
        })
        .collect()
}

/// Affine least-squares map from embedding coordinates to target
/// coordinates: `target ~ (x - x_mean) H + y_mean`.
#[derive(Debug, Clone)]
pub struct LinearFeatureDecoder {
    /// `p x q` for `p` input and `q` target columns.
    pub matrix: DMatrix<f64>,
    pub x_mean: Vec<f64>,
    pub y_mean: Vec<f64>,
    /// Relative Frobenius residual on the fitting set.
    pub residual: f64,
    pub rank: usize,
    pub warnings: Vec<String>,
}

fn centered(m: &RowMatrix) -> (DMatrix<f64>, Vec<f64>) {
    let mut d = m.to_dmatrix();
    let mut means = Vec::with_capacity(d.ncols());
    for mut col in d.column_iter_mut() {
        let mu = col.mean();
        col.add_scalar_mut(-mu);
        means.push(mu);
    }
    (d, means)
}

/// Fits the decoder; rank-deficient inputs get the truncated pseudo-inverse
/// and a warning.
pub fn fit_decoder(x: &RowMatrix, target: &RowMatrix) -> Result<LinearFeatureDecoder> {
    if x.rows() != target.rows() || x.rows() < 2 {
        return Err(Error::Shape(format!("decoder needs aligned rows, got {} and {}", x.rows(), target.rows())));
    }
    let (xc, x_mean) = centered(x);
    let (yc, y_mean) = centered(target);
    let (matrix, rank) = linalg::lstsq(&xc, &yc, local::PINV_RCOND)?;
    let mut warnings = Vec::new();
    if rank < xc.ncols() {
        warnings.push(format!("decoder input has rank {rank} < {} columns", xc.ncols()));
    }
    let denom = yc.norm();
    let res = (&xc * &matrix - &yc).norm();
    Ok(LinearFeatureDecoder {
        residual: if denom > 0.0 { res / denom } else { res },
        matrix,
        x_mean,
        y_mean,
        rank,
        warnings,
    })
}

impl LinearFeatureDecoder {
    pub fn apply(&self, x: &RowMatrix) -> RowMatrix {
        let mut xc = x.to_dmatrix();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.x_mean[j]);
        }
        let mut y = xc * &self.matrix;
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.y_mean[j]);
        }
        RowMatrix::from_dmatrix(&y)
    }

    /// Relative residual on another sample set, centered by that set's
    /// target mean.
    pub fn residual_on(&self, x: &RowMatrix, target: &RowMatrix) -> Result<f64> {
        if x.rows() != target.rows() || target.cols() != self.y_mean.len() || x.cols() != self.x_mean.len() {
            return Err(Error::Shape("decoder evaluation shapes do not match the fit".into()));
        }
        let pred = self.apply(x).to_dmatrix();
        let (yc, _) = centered(target);
        let t = target.to_dmatrix();
        let denom = yc.norm();
        let res = (pred - t).norm();
        Ok(if denom > 0.0 { res / denom } else { res })
    }

    /// `|| H_b^T H_b / c - I ||_max` on the leading `block x block` corner,
    /// with `c` the mean diagonal of `H_b^T H_b`.
    pub fn orthogonality_defect(&self, block: usize) -> f64 {
        let b = block.min(self.matrix.nrows()).min(self.matrix.ncols());
        if b == 0 {
            return 0.0;
        }
        let h = self.matrix.view((0, 0), (b, b));
        let g = h.tr_mul(&h);
        let c = g.trace() / b as f64;
        if !(c > 0.0) {
            return f64::INFINITY;
        }
        (g / c - DMatrix::identity(b, b)).abs().max()
    }
}

/// Fixed-point diagnostic for data that is an isometric copy of its feature.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    /// `max_i max_j |sigma_j(DH_i T_i^T) - 1|`.
    pub max: f64,
    pub mean: f64,
    pub per_point: Vec<f64>,
}

/// Largest deviation of the tangent-restricted derivative from an isometry.
///
/// `T_i` is the data tangent frame at the selected bandwidth with
/// `d = round(local dimension)`. At a fixed point `DH T^T` has orthonormal
/// columns, so every singular value is 1.
pub fn fixed_point_residual(
    points: &PointCloud,
    features: &FeatureSet,
    k: usize,
    scan: &ScanOptions,
) -> Result<FixedPointReport> {
    features.check_aligned(points)?;
    let graph = knn(points, k)?;
    let mut per_point = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let sc = local::bandwidth_scan(points, &graph, i, scan)?;
        let chart = local::build_chart(points, &graph, i, sc.selected.epsilon, Some(features))?;
        let d = (sc.selected.dimension.round() as usize).clamp(1, points.dim().min(k));
        let frame = local::tangent_frame(&chart, d)?;
        let dh = local::estimate_derivative(&chart)?.matrix;
        let sv = linalg::singular_values(&(dh * frame.basis.transpose()))?;
        let mut worst = sv.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        // A rank-deficient product misses singular values, each a full defect.
        if sv.len() < d {
            worst = worst.max(1.0);
        }
        per_point.push(worst);
    }
    let max = per_point.iter().copied().fold(0.0, f64::max);
    let mean = per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(FixedPointReport { max, mean, per_point })
}

/// Integration scheme for [`flow_integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowScheme {
    /// `g += dt (-g + (A g + g A)/2)`.
    Euler,
    /// `g = S g S` with `S = ((1 - dt) I + dt A)^(1/2)`.
    Multiplicative,
}

/// Per-sample metrics under the flow with frozen `A = DH^T DH`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    /// Symmetric positive definite `d x d` metrics.
    pub g: Vec<DMatrix<f64>>,
    /// Feature derivatives `n x d` per sample.
    pub dh: Vec<DMatrix<f64>>,
    pub dt: f64,
    pub t: f64,
}

impl FlowState {
    pub fn new(g: Vec<DMatrix<f64>>, dh: Vec<DMatrix<f64>>, dt: f64) -> Result<Self> {
        if g.len() != dh.len() {
            return Err(Error::Shape(format!("{} metrics for {} derivatives", g.len(), dh.len())));
        }
        if !(dt > 0.0 && dt < 1.0) {
            return Err(param(format!("flow step {dt} outside (0, 1)")));
        }
        for (i, (gi, di)) in g.iter().zip(&dh).enumerate() {
            if !gi.is_square() || gi.nrows() != di.ncols() {
                return Err(Error::Shape(format!("sample {i}: metric {:?} vs derivative {:?}", gi.shape(), di.shape())));
            }
            check_spd(gi).map_err(|_| Error::Numerical(format!("initial metric {i} is not symmetric positive definite")))?;
        }
        Ok(FlowState { g, dh, dt, t: 0.0 })
    }
}

fn check_spd(g: &DMatrix<f64>) -> Result<()> {
    let asym = (g - g.transpose()).abs().max();
    if !(asym <= 1e-12 * g.abs().max().max(1e-300)) {
        return Err(Error::Numerical("metric lost symmetry".into()));
    }
    if g.clone().cholesky().is_none() {
        return Err(Error::Numerical("metric lost positive definiteness".into()));
    }
    Ok(())
}

/// Integrates `steps` steps; returns the states after every `record_every`
/// steps, the initial state first.
pub fn flow_integrate(
    state: &FlowState,
    steps: usize,
    scheme: FlowScheme,
    record_every: usize,
) -> Result<Vec<FlowState>> {
    let every = record_every.max(1);
    let a: Vec<DMatrix<f64>> = state.dh.iter().map(|d| d.tr_mul(d)).collect();
    let sqrt_step: Vec<DMatrix<f64>> = match scheme {
        FlowScheme::Euler => Vec::new(),
        FlowScheme::Multiplicative => a
            .iter()
            .map(|ai| {
                let n = ai.nrows();
                let m = DMatrix::identity(n, n) * (1.0 - state.dt) + ai * state.dt;
                let (vals, vecs) = linalg::sym_eigen_desc((&m + m.transpose()) * 0.5);
                if vals.iter().any(|&v| v < 0.0) {
                    return Err(Error::Numerical("flow step matrix is not positive semidefinite".into()));
                }
                let root = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, vals.iter().map(|v| v.sqrt())));
                Ok(&vecs * root * vecs.transpose())
            })
            .collect::<Result<_>>()?,
    };
    let mut cur = state.clone();
    let mut out = vec![cur.clone()];
    for step in 1..=steps {
        for (i, g) in cur.g.iter_mut().enumerate() {
            let next = match scheme {
                FlowScheme::Euler => {
                    let rhs = (&a[i] * &*g + &*g * &a[i]) * 0.5 - &*g;
                    &*g + rhs * state.dt
                }
                FlowScheme::Multiplicative => &sqrt_step[i] * &*g * &sqrt_step[i],
            };
            // Exact symmetry; rounding would otherwise drift the two halves.
            *g = (&next + next.transpose()) * 0.5;
            check_spd(g).map_err(|e| Error::Numerical(format!("step {step}, sample {i}: {e}")))?;
        }
        cur.t = state.t + step as f64 * state.dt;
        if step % every == 0 || step == steps {
            out.push(cur.clone());
        }
    }
    Ok(out)
}
