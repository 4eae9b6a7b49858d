//! Subcommand implementations. Each writes into the output directory and
//! returns; every file is a pure function of the settings, so reruns are
//! byte-identical.

use std::path::{Path, PathBuf};

use idm_core::kernels::{anisotropic_distance, assemble_kernel, DistanceForm, Symmetrization};
use idm_core::local::DerivativeField;
use idm_core::neighbors::knn;
use idm_core::spectral::SpectralDecomposition;
use idm_core::PointCloud;
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::cli::{Cli, Command, GlobalArgs, PipelineArgs};
use crate::config::{ExperimentConfig, IdmSection, StopArg};
use crate::data::DataSpec;
use crate::error::{usage, Result};
use crate::io::{fmt_f64, Format, Table};

mod eval;
mod generate;
mod passes;
mod run;
mod tune;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate::generate(&cli.global, &a),
        Command::Tune(a) => tune::tune(&cli.global, &a),
        Command::Derivative(a) => passes::derivative(&cli.global, &a),
        Command::DiffusionMap(a) => passes::diffusion_map(&cli.global, &a),
        Command::Idm(a) => run::idm(&cli.global, &a),
        Command::Eval(a) => eval::eval(&cli.global, &a),
        Command::Nystrom(a) => passes::nystrom(&cli.global, &a),
    }
}

/// Config file overlaid with flags.
pub(crate) struct Settings {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub threads: usize,
}

impl Settings {
    pub fn resolve(global: &GlobalArgs, data: Option<&DataSpec>, pipeline: Option<&PipelineArgs>) -> Result<Settings> {
        let mut config = match &global.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if global.out.is_some() {
            config.out = global.out.clone();
        }
        if global.seed.is_some() {
            config.seed = global.seed;
        }
        if global.threads.is_some() {
            config.threads = global.threads;
        }
        if let Some(d) = data {
            config.data = d.clone().overlay(&config.data);
        }
        if let Some(p) = pipeline {
            overlay_pipeline(&mut config.idm, p);
        }
        let threads = config.threads()?;
        let out = config
            .out
            .clone()
            .ok_or_else(|| usage("no output directory: pass --out DIR or set `out` in the config"))?;
        Ok(Settings {
            seed: config.seed.unwrap_or(0),
            format: global.format.unwrap_or(Format::Csv),
            config,
            out,
            threads,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// `stem.csv` or `stem.json` under the output directory.
    pub fn matrix_path(&self, dir: &Path, stem: &str) -> PathBuf {
        dir.join(format!("{stem}.{}", self.format.extension()))
    }
}

fn overlay_pipeline(s: &mut IdmSection, p: &PipelineArgs) {
    macro_rules! set {
        ($($dst:ident <- $src:ident),*) => { $( if p.$src.is_some() { s.$dst = p.$src; } )* };
    }
    set!(tau <- tau, iterations <- iters, k <- k, k2 <- k2, modes <- modes, mode <- mode, grid_len <- grid_len, s <- diffusion_time);
    if let Some(h) = p.cv_holdout {
        s.stop = Some(StopArg::Cv);
        s.holdout = Some(h);
    }
    if p.tangent_projection {
        s.tangent_projection = Some(true);
    }
}

pub(crate) fn f(v: f64) -> String {
    fmt_f64(v)
}

pub(crate) fn eigenvalue_table(dec: &SpectralDecomposition) -> Table {
    let mut t = Table::new(["r", "xi", "lambda", "residual"]);
    for r in 0..dec.xi.len() {
        t.push(vec![
            r.to_string(),
            f(dec.xi[r]),
            f(dec.lambda[r]),
            dec.residuals.get(r).map_or_else(String::new, |v| f(*v)),
        ]);
    }
    t
}

pub(crate) fn local_table(field: &DerivativeField) -> Table {
    let mut t = Table::new(["sample", "dimension", "density", "epsilon", "grid_index"]);
    for i in 0..field.local_dims.len() {
        t.push(vec![
            i.to_string(),
            f(field.local_dims[i]),
            f(field.density[i]),
            f(field.epsilons[i]),
            field.selected_index[i].to_string(),
        ]);
    }
    t
}

pub(crate) fn summary(v: &[f64]) -> Value {
    if v.is_empty() {
        return Value::Null;
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    json!({ "min": min, "mean": mean, "max": max })
}

pub(crate) fn spectral_json(dec: &SpectralDecomposition) -> Value {
    json!({
        "krylov_dim": dec.krylov_dim,
        "top_gap": dec.checks.top_gap,
        "phi0_cv": dec.checks.phi0_cv,
        "norm_deviation": dec.checks.norm_deviation,
        "worst_residual": dec.residuals.iter().copied().fold(0.0, f64::max),
        "warnings": dec.warnings,
    })
}

pub(crate) fn field_json(field: &DerivativeField) -> Value {
    let norms: Vec<f64> = field
        .derivs
        .as_ref()
        .map(|d| d.iter().map(|m| m.norm()).collect())
        .unwrap_or_default();
    json!({
        "local_dimension": summary(&field.local_dims),
        "density": summary(&field.density),
        "local_epsilon": summary(&field.epsilons),
        "derivative_norm": summary(&norms),
        "rank_deficient": field.rank_deficient,
        "warnings": field.warnings,
    })
}

/// Symmetric kernel of one pass as `(i, j, value)` rows, rebuilt from its
/// inputs.
pub(crate) fn kernel_table(
    points: &PointCloud,
    k: usize,
    derivs: Option<&[DMatrix<f64>]>,
    tau: f64,
    epsilon: f64,
    form: DistanceForm,
    sym: Symmetrization,
) -> Result<Table> {
    let graph = knn(points, k)?;
    let dist = anisotropic_distance(points, &graph, derivs, tau, form)?;
    let kernel = assemble_kernel(&dist, &graph, epsilon, sym)?;
    let mut t = Table::new(["i", "j", "value"]);
    for (i, j, v) in kernel.entries.triplets() {
        t.push(vec![i.to_string(), j.to_string(), f(v)]);
    }
    Ok(t)
}

/// Base sample from an index or the nearest sample to a point.
pub(crate) fn base_sample(points: &PointCloud, base: Option<usize>, point: Option<&[f64]>) -> Result<Option<usize>> {
    match (base, point) {
        (Some(_), Some(_)) => Err(usage("give --base or --base-point, not both")),
        (Some(b), None) if b >= points.len() => Err(usage(format!("base {b} out of range for {} samples", points.len()))),
        (Some(b), None) => Ok(Some(b)),
        (None, Some(p)) => {
            if p.len() != points.dim() {
                return Err(usage(format!("base point has {} coordinates, data has {}", p.len(), points.dim())));
            }
            Ok(Some(idm_core::neighbors::knn_query(points, p, 1)?[0].0))
        }
        (None, None) => Ok(None),
    }
}
