//! Matrix files and artifact tables.
//!
//! Matrices are stored either as headerless CSV (one sample per row) or as a
//! JSON object `{"shape": [rows, cols], "data": [[...], ...], "meta": {...}}`.
//! Floats are written in shortest round-trip form, so save then load returns
//! the same bits in either format. Non-finite values are rejected on load.

use std::fs;
use std::path::{Path, PathBuf};

use idm_core::{DiffusionEmbedding, FeatureSet, PointCloud, RowMatrix};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, DataKind, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        let mut buf = ryu::Buffer::new();
        let s = buf.format_finite(v);
        s.strip_suffix(".0").unwrap_or(s).to_string()
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact values serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::data(path, DataKind::Format, format!(" at line {}, column {}", e.line(), e.column()), e.to_string())
    })
}

fn cell(row: usize, col: usize) -> String {
    format!(" at row {}, column {}", row + 1, col + 1)
}

fn finite_or_err(path: &Path, m: &RowMatrix) -> Result<()> {
    match m.find_non_finite() {
        Some((r, c)) => Err(CliError::data(path, DataKind::Validation, cell(r, c), "non-finite value")),
        None => Ok(()),
    }
}

/// Reads a matrix, choosing the format from the extension.
pub fn read_matrix(path: &Path) -> Result<RowMatrix> {
    match Format::from_path(path) {
        Format::Csv => read_csv_matrix(path),
        Format::Json => Ok(read_json_matrix(path)?.0),
    }
}

fn read_csv_matrix(path: &Path) -> Result<RowMatrix> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(path, DataKind::Format, format!(" at row {}", r + 1), e.to_string()))?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(CliError::data(
                    path,
                    DataKind::Shape,
                    format!(" at row {}", r + 1),
                    format!("{} fields, expected {c}", record.len()),
                ))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::data(path, DataKind::Format, cell(r, c), format!("`{field}` is not a number")))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(CliError::data(path, DataKind::Shape, "", "no data rows"));
    }
    let m = RowMatrix::new(rows, cols, data)?;
    finite_or_err(path, &m)?;
    Ok(m)
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    shape: [usize; 2],
    data: Vec<Vec<f64>>,
    #[serde(default)]
    meta: serde_json::Map<String, Value>,
}

fn read_json_matrix(path: &Path) -> Result<(RowMatrix, serde_json::Map<String, Value>)> {
    let doc: MatrixDoc = read_json(path)?;
    let [rows, cols] = doc.shape;
    if let Some(v) = doc.meta.get("schema_version") {
        if v.as_u64() != Some(SCHEMA_VERSION as u64) {
            return Err(CliError::data(path, DataKind::Format, "", format!("unsupported schema_version {v}")));
        }
    }
    if doc.data.len() != rows {
        return Err(CliError::data(path, DataKind::Shape, "", format!("shape says {rows} rows, data has {}", doc.data.len())));
    }
    if rows == 0 || cols == 0 {
        return Err(CliError::data(path, DataKind::Shape, "", "no data rows"));
    }
    let mut flat = Vec::with_capacity(rows * cols);
    for (r, row) in doc.data.iter().enumerate() {
        if row.len() != cols {
            return Err(CliError::data(
                path,
                DataKind::Shape,
                format!(" at row {}", r + 1),
                format!("{} fields, expected {cols}", row.len()),
            ));
        }
        flat.extend_from_slice(row);
    }
    let m = RowMatrix::new(rows, cols, flat)?;
    finite_or_err(path, &m)?;
    Ok((m, doc.meta))
}

/// Writes a matrix; JSON output carries `meta` (plus the schema version).
pub fn write_matrix(path: &Path, m: &RowMatrix, meta: serde_json::Map<String, Value>) -> Result<()> {
    match Format::from_path(path) {
        Format::Csv => {
            let mut out = String::with_capacity(m.rows() * m.cols() * 20);
            for i in 0..m.rows() {
                let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            write_text(path, &out)
        }
        Format::Json => {
            let mut meta = meta;
            meta.insert("schema_version".into(), json!(SCHEMA_VERSION));
            let doc = MatrixDoc {
                shape: [m.rows(), m.cols()],
                data: (0..m.rows()).map(|i| m.row(i).to_vec()).collect(),
                meta,
            };
            write_json(path, &doc)
        }
    }
}

pub fn load_point_cloud(path: &Path) -> Result<PointCloud> {
    let m = read_matrix(path)?;
    PointCloud::new(m).map_err(|e| CliError::data(path, DataKind::Shape, "", e.to_string()))
}

pub fn load_features(path: &Path, samples: usize) -> Result<FeatureSet> {
    let m = read_matrix(path)?;
    if m.rows() != samples {
        return Err(CliError::data(
            path,
            DataKind::Shape,
            "",
            format!("{} feature rows for {samples} samples", m.rows()),
        ));
    }
    FeatureSet::new(m).map_err(|e| CliError::data(path, DataKind::Shape, "", e.to_string()))
}

/// Sidecar next to a CSV embedding: `embedding.csv` -> `embedding.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingMeta {
    schema_version: u32,
    kind: String,
    rows: usize,
    cols: usize,
    iteration: usize,
    s: f64,
    local_dims: Vec<f64>,
}

fn embedding_meta(e: &DiffusionEmbedding) -> EmbeddingMeta {
    EmbeddingMeta {
        schema_version: SCHEMA_VERSION,
        kind: "embedding".into(),
        rows: e.coords.rows(),
        cols: e.coords.cols(),
        iteration: e.iteration,
        s: e.s,
        local_dims: e.local_dims.clone(),
    }
}

/// Saves coordinates plus metadata: a sidecar for CSV, the `meta` object
/// for JSON.
pub fn save_embedding(e: &DiffusionEmbedding, path: &Path) -> Result<()> {
    e.validate().map_err(CliError::Core)?;
    let meta = embedding_meta(e);
    match Format::from_path(path) {
        Format::Csv => {
            write_matrix(path, &e.coords, Default::default())?;
            write_json(&sidecar_path(path), &meta)
        }
        Format::Json => {
            let Value::Object(map) = serde_json::to_value(&meta).expect("metadata serializes") else {
                unreachable!("struct serializes to an object")
            };
            write_matrix(path, &e.coords, map)
        }
    }
}

pub fn load_embedding(path: &Path) -> Result<DiffusionEmbedding> {
    let (coords, meta_value) = match Format::from_path(path) {
        Format::Csv => {
            let coords = read_csv_matrix(path)?;
            let side = sidecar_path(path);
            let meta: Value = read_json(&side)?;
            (coords, (side, meta))
        }
        Format::Json => {
            let (coords, map) = read_json_matrix(path)?;
            (coords, (path.to_path_buf(), Value::Object(map)))
        }
    };
    let (meta_path, meta_value) = meta_value;
    let meta: EmbeddingMeta = serde_json::from_value(meta_value)
        .map_err(|e| CliError::data(&meta_path, DataKind::Format, "", format!("embedding metadata: {e}")))?;
    if meta.rows != coords.rows() || meta.cols != coords.cols() {
        return Err(CliError::data(
            &meta_path,
            DataKind::Shape,
            "",
            format!("metadata says {}x{}, data is {}x{}", meta.rows, meta.cols, coords.rows(), coords.cols()),
        ));
    }
    let e = DiffusionEmbedding {
        coords,
        iteration: meta.iteration,
        s: meta.s,
        local_dims: meta.local_dims,
    };
    e.validate().map_err(|err| CliError::data(path, DataKind::Validation, "", err.to_string()))?;
    Ok(e)
}

/// CSV table with a header row. Cells are preformatted strings.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        write_text(path, std::str::from_utf8(&bytes).expect("cells are UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, -2.5e-300, 1.0 / 3.0, 6.02214076e23, 5e-324, f64::MAX, 0.0, -0.0, 42.0] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s}");
        }
        assert_eq!(fmt_f64(42.0), "42");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn extension_picks_format() {
        assert_eq!(Format::from_path(Path::new("a/b.JSON")), Format::Json);
        assert_eq!(Format::from_path(Path::new("a/b.csv")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("a/b")), Format::Csv);
        assert_eq!(sidecar_path(Path::new("x/embedding.csv")), Path::new("x/embedding.meta.json"));
    }
}
