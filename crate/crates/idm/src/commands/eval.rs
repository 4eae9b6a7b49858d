//! `eval`: diagnostics over a trajectory directory written by `idm`.

use std::path::{Path, PathBuf};

use idm_core::idm::{feature_embedding, fit_decoder, fixed_point_residual, IdmParams};
use idm_core::local::ScanOptions;
use idm_core::neighbors::knn_of_sample;
use idm_core::spectral::{diffusion_pass, rescaled_map, RescaledMapParams};
use idm_core::{DiffusionEmbedding, FeatureSet, PointCloud};
use serde::Deserialize;
use serde_json::json;

use crate::cli::{EvalArgs, EvalKind, GlobalArgs};
use crate::config::ExperimentConfig;
use crate::error::{usage, CliError, DataKind, Result};
use crate::io::{self, Table};

use super::{base_sample, f};

const LAYOUT: &str = "expected manifest.json, input/points.*, input/features.* and iter_<l>/embedding.* as written by `idm`";

#[derive(Deserialize)]
struct Manifest {
    config: ExperimentConfig,
    base: Option<usize>,
}

struct Trajectory {
    config: ExperimentConfig,
    manifest_base: Option<usize>,
    points: PointCloud,
    features: FeatureSet,
    embeddings: Vec<DiffusionEmbedding>,
}

/// First of `stem.csv`, `stem.json` that exists.
fn find_matrix(dir: &Path, stem: &str) -> Result<PathBuf> {
    ["csv", "json"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            CliError::data(
                &dir.join(format!("{stem}.csv")),
                DataKind::Validation,
                "",
                format!("missing trajectory file; {LAYOUT}"),
            )
        })
}

fn load(dir: &Path) -> Result<Trajectory> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(CliError::data(&manifest_path, DataKind::Validation, "", format!("not a trajectory directory; {LAYOUT}")));
    }
    let manifest: Manifest = io::read_json(&manifest_path)?;
    let points = io::load_point_cloud(&find_matrix(&dir.join("input"), "points")?)?;
    let features = io::load_features(&find_matrix(&dir.join("input"), "features")?, points.len())?;
    let mut embeddings = Vec::new();
    for l in 0.. {
        let it = dir.join(format!("iter_{l}"));
        if !it.is_dir() {
            break;
        }
        let e = io::load_embedding(&find_matrix(&it, "embedding")?)?;
        if e.coords.rows() != points.len() {
            return Err(CliError::data(
                &it,
                DataKind::Shape,
                "",
                format!("{} rows, input has {}", e.coords.rows(), points.len()),
            ));
        }
        embeddings.push(e);
    }
    if embeddings.is_empty() {
        return Err(CliError::data(&dir.join("iter_0"), DataKind::Validation, "", format!("no iterations; {LAYOUT}")));
    }
    Ok(Trajectory {
        config: manifest.config,
        manifest_base: manifest.base,
        points,
        features,
        embeddings,
    })
}

impl Trajectory {
    fn params(&self) -> Result<IdmParams> {
        self.config.idm_params()
    }

    fn base(&self, a: &EvalArgs) -> Result<usize> {
        let b = base_sample(&self.points, a.base.base, a.base.base_point.as_deref())?
            .or(self.manifest_base)
            .ok_or_else(|| usage("no base sample: pass --base or --base-point"))?;
        if b >= self.points.len() {
            return Err(usage(format!("base {b} out of range for {} samples", self.points.len())));
        }
        Ok(b)
    }
}

pub(super) fn eval(global: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let traj = load(&a.dir)?;
    let out = global.out.clone().unwrap_or_else(|| a.dir.join("eval"));
    io::create_dir(&out)?;
    match a.which {
        EvalKind::Distances => distances(&traj, a, &out),
        EvalKind::Neighbors => neighbors(&traj, a, &out),
        EvalKind::Decoder => decoder(&traj, &out),
        EvalKind::Fixedpoint => fixedpoint(&traj, a, &out),
    }
}

/// Distances from the base sample: Euclidean, geodesic (where the fixture
/// has one) and the rescaled plain diffusion distance at each time.
fn distances(traj: &Trajectory, a: &EvalArgs, out: &Path) -> Result<()> {
    if a.times.is_empty() || !a.times.iter().all(|t| t.is_finite() && *t > 0.0) {
        return Err(usage("--times must be positive"));
    }
    let b = traj.base(a)?;
    let params = traj.params()?;
    let mut opts = params.pass_options();
    opts.analysis.skip_derivative = true;
    let pass = diffusion_pass(&traj.points, None, 0.0, &opts, 0)?;
    let maps = a
        .times
        .iter()
        .map(|&t| {
            rescaled_map(
                &pass.decomposition,
                &RescaledMapParams {
                    s: t,
                    modes: params.modes,
                    local_dims: pass.embedding.local_dims.clone(),
                },
                0,
            )
        })
        .collect::<idm_core::Result<Vec<_>>>()?;
    let fixture = match traj.config.data.fixture {
        Some(_) => Some(traj.config.data.fixture(traj.config.seed.unwrap_or(0))?),
        None => None,
    };
    let mut header: Vec<String> = ["sample", "euclidean", "geodesic"].map(String::from).to_vec();
    header.extend(a.times.iter().map(|t| format!("diffusion_{}", f(*t))));
    let mut table = Table::new(header);
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let p0 = traj.points.point(b);
    for i in 0..traj.points.len() {
        let geo = fixture
            .as_ref()
            .filter(|fx| fx.cloud.len() == traj.points.len())
            .and_then(|fx| fx.geodesic(b, i));
        let mut row = vec![i.to_string(), f(dist(p0, traj.points.point(i))), geo.map_or_else(String::new, f)];
        row.extend(maps.iter().map(|m| f(dist(m.coords.row(b), m.coords.row(i)))));
        table.push(row);
    }
    table.write(&out.join("distances.csv"))?;
    io::write_json(
        &out.join("distances.json"),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "base": b,
            "times": a.times,
            "epsilon": pass.epsilon,
        }),
    )
}

fn neighbors(traj: &Trajectory, a: &EvalArgs, out: &Path) -> Result<()> {
    let b = traj.base(a)?;
    let count = a
        .base
        .count
        .or(traj.config.neighbors.count)
        .unwrap_or(200)
        .min(traj.points.len());
    let mut t = Table::new(["iteration", "rank", "sample"]);
    for (l, e) in traj.embeddings.iter().enumerate() {
        let list = knn_of_sample(&e.to_cloud()?, b, count)?;
        for (r, (s, _)) in list.iter().enumerate() {
            t.push(vec![l.to_string(), r.to_string(), s.to_string()]);
        }
    }
    t.write(&out.join("neighbors.csv"))
}

/// Decoder from every iteration to the feature's diffusion coordinates:
/// in-sample residual and the residual on odd samples of a fit on even ones.
fn decoder(traj: &Trajectory, out: &Path) -> Result<()> {
    let target = feature_embedding(&traj.features, &traj.params()?)?;
    let n = traj.points.len();
    let even: Vec<usize> = (0..n).step_by(2).collect();
    let odd: Vec<usize> = (1..n).step_by(2).collect();
    let mut t = Table::new(["iteration", "residual", "heldout_residual", "rank"]);
    for (l, e) in traj.embeddings.iter().enumerate() {
        let full = fit_decoder(&e.coords, &target.coords)?;
        let held = if odd.len() >= 2 {
            let d = fit_decoder(&e.coords.select_rows(&even), &target.coords.select_rows(&even))?;
            f(d.residual_on(&e.coords.select_rows(&odd), &target.coords.select_rows(&odd))?)
        } else {
            String::new()
        };
        t.push(vec![l.to_string(), f(full.residual), held, full.rank.to_string()]);
    }
    t.write(&out.join("decoder.csv"))
}

fn fixedpoint(traj: &Trajectory, a: &EvalArgs, out: &Path) -> Result<()> {
    let params = traj.params()?;
    let scan = ScanOptions {
        grid_len: params.grid_len,
        mode: params.mode,
        ..ScanOptions::default()
    };
    let mut t = Table::new(["iteration", "max", "mean"]);
    for (l, e) in traj.embeddings.iter().enumerate() {
        let cloud = e.to_cloud()?;
        let k = a.k.unwrap_or(params.k).min(cloud.len());
        let r = fixed_point_residual(&cloud, &traj.features, k, &scan)?;
        t.push(vec![l.to_string(), f(r.max), f(r.mean)]);
    }
    t.write(&out.join("fixedpoint.csv"))
}
