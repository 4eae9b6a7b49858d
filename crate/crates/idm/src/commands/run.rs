//! `idm`: the full trajectory.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json            resolved config, parameters, iteration count
//! input/points.{csv,json}
//! input/features.{csv,json}
//! iter_<l>/embedding.{csv,json}   (+ embedding.meta.json for CSV)
//! iter_<l>/eigenvalues.csv, local.csv, diagnostics.json   (l >= 1)
//! contraction.csv, neighbors.csv, identity.json, decoder.csv, cv.csv
//! iter_<l>/kernel.csv      only with the `kernel` diagnostic
//! ```

use idm_core::eval::{align_blocks, eigenvalue_blocks, level_set_labels, level_set_spread};
use idm_core::idm::{feature_embedding, fit_decoder, idm_run, neighbor_evolution, IdmParams, IdmTrajectory};
use idm_core::FeatureSet;
use serde_json::json;

use crate::cli::{GlobalArgs, IdmArgs};
use crate::config::Diagnostic;
use crate::error::{usage, Result};
use crate::io::{self, write_matrix, Table};

use super::{base_sample, eigenvalue_table, f, field_json, kernel_table, local_table, spectral_json, Settings};

/// Bins of the level-set contraction diagnostic.
pub(crate) const LEVEL_BINS: usize = 25;

fn parse_diagnostics(names: &[String]) -> Result<Vec<Diagnostic>> {
    names
        .iter()
        .map(|n| {
            serde_json::from_value(json!(n.to_lowercase()))
                .map_err(|_| usage(format!("unknown diagnostic `{n}` (neighbors, contraction, identity, kernel, decoder)")))
        })
        .collect()
}

pub(super) fn idm(global: &GlobalArgs, a: &IdmArgs) -> Result<()> {
    let mut st = Settings::resolve(global, Some(&a.data), Some(&a.pipeline))?;
    for d in parse_diagnostics(&a.diagnostics)? {
        if !st.config.has(d) {
            st.config.diagnostics.push(d);
        }
    }
    let nb = &mut st.config.neighbors;
    if a.base.base.is_some() || a.base.base_point.is_some() {
        nb.base = a.base.base;
        nb.base_point = a.base.base_point.clone();
    }
    if a.base.count.is_some() {
        nb.count = a.base.count;
    }
    let inputs = st.config.data.resolve(st.seed)?;
    let features = inputs
        .features
        .as_ref()
        .ok_or_else(|| usage("idm needs feature values: --features FILE or --feature NAME"))?;
    let points = &inputs.points;
    let params = st.config.idm_params()?;
    let base = base_sample(points, st.config.neighbors.base, st.config.neighbors.base_point.as_deref())?;
    if st.config.has(Diagnostic::Neighbors) && base.is_none() {
        return Err(usage("the neighbors diagnostic needs --base or --base-point"));
    }

    let traj = idm_run(points, features, &params)?;

    let out = st.out.clone();
    io::create_dir(&out.join("input"))?;
    write_matrix(&st.matrix_path(&out.join("input"), "points"), points.matrix(), Default::default())?;
    write_matrix(&st.matrix_path(&out.join("input"), "features"), features.matrix(), Default::default())?;
    for (l, e) in traj.embeddings.iter().enumerate() {
        let dir = out.join(format!("iter_{l}"));
        io::create_dir(&dir)?;
        io::save_embedding(e, &st.matrix_path(&dir, "embedding"))?;
        let Some(rec) = l.checked_sub(1).map(|p| &traj.iterations[p]) else {
            continue;
        };
        eigenvalue_table(&rec.decomposition).write(&dir.join("eigenvalues.csv"))?;
        local_table(&rec.field).write(&dir.join("local.csv"))?;
        io::write_json(
            &dir.join("diagnostics.json"),
            &json!({
                "schema_version": io::SCHEMA_VERSION,
                "iteration": l,
                "epsilon": rec.epsilon,
                "s": rec.s,
                "kernel_nnz": rec.kernel_nnz,
                "modes": e.coords.cols(),
                "spectrum": spectral_json(&rec.decomposition),
                "local": field_json(&rec.field),
            }),
        )?;
        if st.config.has(Diagnostic::Kernel) {
            let prev = traj.embeddings[l - 1].to_cloud()?;
            kernel_table(
                &prev,
                params.k.min(prev.len()),
                rec.field.derivs.as_deref(),
                params.tau,
                rec.epsilon,
                params.form,
                params.symmetrization,
            )?
            .write(&dir.join("kernel.csv"))?;
        }
    }

    if st.config.has(Diagnostic::Contraction) {
        contraction(&traj, features)?.write(&st.path("contraction.csv"))?;
    }
    if let (true, Some(b)) = (st.config.has(Diagnostic::Neighbors), base) {
        let count = st.config.neighbors.count.unwrap_or(200).min(points.len());
        neighbor_table(&traj, b, count)?.write(&st.path("neighbors.csv"))?;
    }
    if st.config.has(Diagnostic::Identity) || params.tau == 0.0 {
        io::write_json(&st.path("identity.json"), &identity(&traj)?)?;
    }
    if st.config.has(Diagnostic::Decoder) {
        decoder_table(&traj, features, &params)?.write(&st.path("decoder.csv"))?;
    }
    if !traj.cv_residuals.is_empty() {
        let mut t = Table::new(["iteration", "heldout_residual"]);
        for (i, r) in traj.cv_residuals.iter().enumerate() {
            t.push(vec![(i + 1).to_string(), f(*r)]);
        }
        t.write(&st.path("cv.csv"))?;
    }

    let mut config = st.config.clone();
    config.out = Some(out.clone());
    config.seed = Some(st.seed);
    io::write_json(
        &st.path("manifest.json"),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "command": "idm",
            "config": config,
            "params": {
                "tau": params.tau,
                "iterations": params.iterations,
                "k": params.k,
                "k2": params.k2,
                "grid_len": params.grid_len,
                "modes": params.modes,
                "mode": format!("{:?}", params.mode).to_lowercase(),
                "s": params.s,
                "s_factor": params.s_factor,
                "tangent_projection": params.tangent_projection,
            },
            "format": st.format,
            "threads": st.threads,
            "samples": points.len(),
            "iterations_written": traj.iterations.len(),
            "selected": traj.selected,
            "stopped_early": traj.stopped_early,
            "base": base,
            "warnings": traj.warnings,
        }),
    )
}

fn contraction(traj: &IdmTrajectory, features: &FeatureSet) -> Result<Table> {
    let labels = level_set_labels(features.matrix(), LEVEL_BINS)?;
    let mut t = Table::new(["iteration", "level_set_spread"]);
    for (l, e) in traj.embeddings.iter().enumerate() {
        t.push(vec![l.to_string(), f(level_set_spread(&e.coords, &labels)?)]);
    }
    Ok(t)
}

fn neighbor_table(traj: &IdmTrajectory, base: usize, count: usize) -> Result<Table> {
    let lists = neighbor_evolution(traj, base, count)?;
    let mut t = Table::new(["iteration", "rank", "sample"]);
    for (l, list) in lists.iter().enumerate() {
        for (r, s) in list.iter().enumerate() {
            t.push(vec![l.to_string(), r.to_string(), s.to_string()]);
        }
    }
    Ok(t)
}

/// Consecutive iterations `x^(l)` vs `x^(l+1)`, `l >= 1`, aligned within the
/// eigenvalue blocks of pass `l`.
fn identity(traj: &IdmTrajectory) -> Result<serde_json::Value> {
    let mut steps = Vec::new();
    for l in 1..traj.embeddings.len().saturating_sub(1) {
        let (a, b) = (&traj.embeddings[l], &traj.embeddings[l + 1]);
        if a.coords.cols() != b.coords.cols() {
            continue;
        }
        // Zero-padded columns past the computed modes carry no signal.
        let dec = &traj.iterations[l - 1].decomposition;
        let lam = &dec.lambda;
        let m = a.coords.cols().min(dec.modes().saturating_sub(1));
        if m == 0 {
            continue;
        }
        let blocks = eigenvalue_blocks(&lam[1..=m], 0.02);
        let al = align_blocks(
            &a.coords.to_dmatrix().columns(0, m).into_owned(),
            &b.coords.to_dmatrix().columns(0, m).into_owned(),
            &blocks,
        )?;
        let worst = al.correlations.iter().copied().fold(1.0, f64::min);
        steps.push(json!({
            "from": l,
            "to": l + 1,
            "relative_error": al.relative_error,
            "min_correlation": worst,
            "blocks": blocks.iter().map(|r| format!("{}..{}", r.start + 1, r.end + 1)).collect::<Vec<_>>(),
        }));
    }
    Ok(json!({ "schema_version": io::SCHEMA_VERSION, "steps": steps }))
}

/// In-sample decoder residual from each iteration to the feature's own
/// diffusion coordinates.
fn decoder_table(traj: &IdmTrajectory, features: &FeatureSet, params: &IdmParams) -> Result<Table> {
    let target = feature_embedding(features, params)?;
    let mut t = Table::new(["iteration", "residual", "rank"]);
    for (l, e) in traj.embeddings.iter().enumerate() {
        let d = fit_decoder(&e.coords, &target.coords)?;
        t.push(vec![l.to_string(), f(d.residual), d.rank.to_string()]);
    }
    Ok(t)
}
