use idm_core::local::{bandwidth_scan, BandwidthScan, ScanOptions, Selection};
use idm_core::neighbors::{knn, single_point_graph};
use idm_core::{NeighborGraph, PointCloud};
use serde_json::json;

use crate::cli::{GlobalArgs, TuneArgs};
use crate::error::{usage, Result};
use crate::io::{self, Table};

use super::{base_sample, f, Settings};

fn scan_table(scan: &BandwidthScan) -> Table {
    let r = scan.singular.first().map_or(0, Vec::len);
    let mut header: Vec<String> = ["l", "epsilon", "weight_sum", "d1", "d2", "d_ave", "metric"].map(String::from).to_vec();
    header.extend((1..=r).map(|j| format!("sigma_{j}")));
    header.extend((1..=r).map(|j| format!("alpha_{j}")));
    let mut t = Table::new(header);
    let opt = |v: Option<&f64>| v.map_or_else(String::new, |x| f(*x));
    for l in 0..scan.eps_grid.len() {
        let mut row = vec![
            l.to_string(),
            f(scan.eps_grid[l]),
            f(scan.weight_sums[l]),
            opt(scan.d1.get(l)),
            opt(scan.d2.get(l)),
            opt(scan.d_ave.get(l)),
            opt(scan.metric.get(l)),
        ];
        for j in 0..r {
            row.push(opt(scan.singular.get(l).and_then(|s| s.get(j))));
        }
        for j in 0..r {
            row.push(opt(scan.alpha.get(l).and_then(|a| a.get(j)).and_then(Option::as_ref)));
        }
        t.push(row);
    }
    t
}

fn sel_cells(s: Option<Selection>) -> [String; 3] {
    match s {
        Some(s) => [s.index.to_string(), f(s.epsilon), f(s.dimension)],
        None => [String::new(), String::new(), String::new()],
    }
}

pub(super) fn tune(global: &GlobalArgs, a: &TuneArgs) -> Result<()> {
    let st = Settings::resolve(global, Some(&a.data), Some(&a.pipeline))?;
    let inputs = st.config.data.resolve(st.seed)?;
    let points = &inputs.points;
    let params = st.config.idm_params()?;
    let k = params.k.min(points.len());
    let opts = ScanOptions {
        grid_len: params.grid_len,
        mode: params.mode,
        with_singular_values: a.singular_values,
        ..ScanOptions::default()
    };
    let mut tables: Vec<usize> = a.points.clone();
    if let Some(b) = base_sample(points, None, a.base_point.as_deref())? {
        tables.push(b);
    }
    if let Some(&bad) = tables.iter().find(|&&i| i >= points.len()) {
        return Err(usage(format!("sample {bad} out of range for {} samples", points.len())));
    }
    tables.sort_unstable();
    tables.dedup();
    if a.only_tables && tables.is_empty() {
        return Err(usage("--only-tables needs --points or --base-point"));
    }
    io::create_dir(&st.out)?;

    let scanned: Vec<usize> = if a.only_tables { tables.clone() } else { (0..points.len()).collect() };
    let full: Option<NeighborGraph> = if a.only_tables { None } else { Some(knn(points, k)?) };
    let scan_one = |i: usize, pts: &PointCloud| -> Result<BandwidthScan> {
        Ok(match &full {
            Some(g) => bandwidth_scan(pts, g, i, &opts)?,
            None => {
                let (g, row) = single_point_graph(pts, i, k)?;
                bandwidth_scan(pts, &g, row, &opts)?
            }
        })
    };

    let mut sel = Table::new([
        "sample",
        "selected_index",
        "selected_epsilon",
        "selected_dimension",
        "simple_index",
        "simple_epsilon",
        "simple_dimension",
        "robust_index",
        "robust_epsilon",
        "robust_dimension",
    ]);
    let mut warnings = Vec::new();
    for &i in &scanned {
        let scan = scan_one(i, points)?;
        let mut row = vec![i.to_string()];
        row.extend(sel_cells(Some(scan.selected)));
        row.extend(sel_cells(Some(scan.simple)));
        row.extend(sel_cells(scan.robust));
        sel.push(row);
        warnings.extend(scan.warnings.iter().map(|w| format!("sample {i}: {w}")));
        if tables.binary_search(&i).is_ok() {
            scan_table(&scan).write(&st.out.join("scans").join(format!("sample_{i}.csv")))?;
        }
    }
    sel.write(&st.path("selections.csv"))?;
    io::write_json(
        &st.path("tune.json"),
        &json!({
            "schema_version": io::SCHEMA_VERSION,
            "command": "tune",
            "samples": points.len(),
            "k": k,
            "grid_len": params.grid_len,
            "mode": format!("{:?}", params.mode).to_lowercase(),
            "tables": tables,
            "warnings": warnings,
        }),
    )
}
