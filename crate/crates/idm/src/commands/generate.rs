use serde_json::json;

use crate::cli::{GenerateArgs, GlobalArgs};
use crate::data::DataSpec;
use crate::error::Result;
use crate::io::{self, write_matrix};

use super::Settings;

pub(super) fn generate(global: &GlobalArgs, a: &GenerateArgs) -> Result<()> {
    let spec = DataSpec {
        fixture: Some(a.fixture),
        n: a.n,
        grid: a.grid,
        noise: a.noise,
        noise_seed: a.noise_seed,
        ..DataSpec::default()
    };
    let st = Settings::resolve(global, Some(&spec), None)?;
    let inputs = st.config.data.resolve(st.seed)?;
    let fx = inputs.fixture.expect("fixture requested");
    let out = &st.out;
    io::create_dir(out)?;
    write_matrix(&st.matrix_path(out, "points"), inputs.points.matrix(), Default::default())?;
    let mut features = Vec::new();
    for nf in &fx.features {
        let path = st.matrix_path(&out.join("features"), nf.name);
        write_matrix(&path, nf.values.matrix(), Default::default())?;
        features.push(json!({ "name": nf.name, "columns": nf.values.dim() }));
    }
    if fx.latent.cols() > 0 {
        write_matrix(&st.matrix_path(out, "latent"), &fx.latent, Default::default())?;
    }
    let params: serde_json::Map<String, serde_json::Value> = fx.params.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    io::write_json(
        &st.path("manifest.json"),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "command": "generate",
            "fixture": fx.name,
            "description": fx.describe(),
            "params": params,
            "seed": st.seed,
            "noise": st.config.data.noise,
            "noise_seed": st.config.data.noise_seed,
            "samples": inputs.points.len(),
            "ambient_dim": inputs.points.dim(),
            "features": features,
            "format": st.format,
        }),
    )
}
