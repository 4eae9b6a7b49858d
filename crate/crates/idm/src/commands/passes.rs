use idm_core::local::{
    bandwidth_scan, build_chart, correlation_derivative, density_estimate, estimate_derivative,
    estimate_tangent_derivative, DerivativeField,
};
use idm_core::neighbors::knn;
use idm_core::spectral::{diffusion_pass, nystrom_extend, DiffusionPass};
use idm_core::FeatureSet;
use serde_json::json;

use crate::cli::{DerivativeArgs, DiffusionMapArgs, Estimator, GlobalArgs, NystromArgs};
use crate::data::Inputs;
use crate::error::{usage, Result};
use crate::io::{self, Table};

use super::{eigenvalue_table, f, field_json, kernel_table, local_table, spectral_json, Settings};

fn need_features(inputs: &Inputs) -> Result<&FeatureSet> {
    inputs
        .features
        .as_ref()
        .ok_or_else(|| usage("this command needs feature values: --features FILE or --feature NAME"))
}

pub(super) fn derivative(global: &GlobalArgs, a: &DerivativeArgs) -> Result<()> {
    let st = Settings::resolve(global, Some(&a.data), Some(&a.pipeline))?;
    let inputs = st.config.data.resolve(st.seed)?;
    let feats = need_features(&inputs)?;
    let points = &inputs.points;
    let params = st.config.idm_params()?;
    let opts = params.pass_options();
    opts.validate(points.len())?;
    let graph = knn(points, opts.k)?;
    let (n, m) = (feats.dim(), points.dim());
    let mut header = vec!["sample".to_string()];
    for r in 0..n {
        header.extend((0..m).map(|c| format!("dh_{r}_{c}")));
    }
    let mut table = Table::new(header);
    let mut field = DerivativeField {
        derivs: None,
        local_dims: Vec::new(),
        density: Vec::new(),
        epsilons: Vec::new(),
        selected_index: Vec::new(),
        rank_deficient: 0,
        warnings: Vec::new(),
    };
    for i in 0..points.len() {
        let scan = bandwidth_scan(points, &graph, i, &opts.analysis.scan)?;
        let d = scan.selected.dimension.min(m.min(opts.k) as f64);
        let chart = build_chart(points, &graph, i, scan.selected.epsilon, Some(feats))?;
        let dh = match a.estimator {
            Estimator::Regression | Estimator::Tangent => {
                let est = if a.estimator == Estimator::Tangent {
                    let r = (d.round() as usize).clamp(1, chart.x.nrows().min(m));
                    estimate_tangent_derivative(&chart, r)?
                } else {
                    estimate_derivative(&chart)?
                };
                field.rank_deficient += usize::from(est.truncated);
                est.matrix
            }
            Estimator::Correlation => correlation_derivative(&chart)?,
        };
        let mut row = vec![i.to_string()];
        for r in 0..n {
            row.extend((0..m).map(|c| f(dh[(r, c)])));
        }
        table.push(row);
        field.density.push(density_estimate(&chart, d, points.len())?);
        field.local_dims.push(d);
        field.epsilons.push(scan.selected.epsilon);
        field.selected_index.push(scan.selected.index);
    }
    io::create_dir(&st.out)?;
    table.write(&st.path("derivatives.csv"))?;
    local_table(&field).write(&st.path("local.csv"))?;
    io::write_json(
        &st.path("derivative.json"),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "command": "derivative",
            "estimator": format!("{:?}", a.estimator).to_lowercase(),
            "samples": points.len(),
            "feature_dim": n,
            "ambient_dim": m,
            "k": opts.k,
            "local": field_json(&field),
        }),
    )
}

/// One pass with `tau` defaulting to 0 (the plain map).
fn single_pass(st: &Settings, inputs: &Inputs) -> Result<(DiffusionPass, f64)> {
    let mut params = st.config.idm_params()?;
    params.tau = st.config.idm.tau.unwrap_or(0.0);
    params.allow_zero_tau = true;
    params.validate(inputs.points.len())?;
    if params.tau > 0.0 && inputs.features.is_none() {
        return Err(usage("tau > 0 needs feature values: --features FILE or --feature NAME"));
    }
    let opts = params.pass_options();
    let pass = diffusion_pass(&inputs.points, inputs.features.as_ref(), params.tau, &opts, 0)?;
    Ok((pass, params.tau))
}

pub(super) fn diffusion_map(global: &GlobalArgs, a: &DiffusionMapArgs) -> Result<()> {
    let st = Settings::resolve(global, Some(&a.data), Some(&a.pipeline))?;
    let inputs = st.config.data.resolve(st.seed)?;
    let (pass, tau) = single_pass(&st, &inputs)?;
    io::create_dir(&st.out)?;
    io::save_embedding(&pass.embedding, &st.matrix_path(&st.out, "embedding"))?;
    eigenvalue_table(&pass.decomposition).write(&st.path("eigenvalues.csv"))?;
    local_table(&pass.field).write(&st.path("local.csv"))?;
    if a.dump_kernel {
        let r = &pass.recipe;
        kernel_table(&inputs.points, r.graph.k(), r.derivs.as_deref(), tau, r.epsilon, r.form, r.symmetrization)?
            .write(&st.path("kernel.csv"))?;
    }
    io::write_json(
        &st.path("diagnostics.json"),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "command": "diffusion-map",
            "tau": tau,
            "epsilon": pass.epsilon,
            "s": pass.s,
            "kernel_nnz": pass.kernel_nnz,
            "modes": pass.embedding.coords.cols(),
            "spectrum": spectral_json(&pass.decomposition),
            "local": field_json(&pass.field),
        }),
    )
}

pub(super) fn nystrom(global: &GlobalArgs, a: &NystromArgs) -> Result<()> {
    let st = Settings::resolve(global, Some(&a.data), Some(&a.pipeline))?;
    let inputs = st.config.data.resolve(st.seed)?;
    let query = io::read_matrix(&a.query)?;
    if query.cols() != inputs.points.dim() {
        return Err(usage(format!(
            "query has {} columns, training data {}",
            query.cols(),
            inputs.points.dim()
        )));
    }
    let (pass, tau) = single_pass(&st, &inputs)?;
    let modes = pass.embedding.coords.cols();
    let mut header = vec!["query".to_string(), "nearest".to_string()];
    header.extend((1..=modes).map(|r| format!("x_{r}")));
    let mut table = Table::new(header);
    let mut warnings = Vec::new();
    for q in 0..query.rows() {
        let ext = nystrom_extend(query.row(q), &pass.recipe, &pass.decomposition, pass.s)?;
        let mut row = vec![q.to_string(), ext.nearest.to_string()];
        row.extend(ext.embedding.iter().map(|&v| f(v)));
        table.push(row);
        warnings.extend(ext.warnings.into_iter().map(|w| format!("query {q}: {w}")));
    }
    io::create_dir(&st.out)?;
    table.write(&st.path("nystrom.csv"))?;
    io::save_embedding(&pass.embedding, &st.matrix_path(&st.out, "embedding"))?;
    io::write_json(
        &st.path("nystrom.json"),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "command": "nystrom",
            "tau": tau,
            "epsilon": pass.epsilon,
            "s": pass.s,
            "queries": query.rows(),
            "warnings": warnings,
        }),
    )
}
