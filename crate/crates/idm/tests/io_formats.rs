use std::fs;

use idm::error::{exit, CliError, DataKind};
use idm::io::{load_embedding, read_matrix, save_embedding, write_matrix};
use idm_core::{DiffusionEmbedding, RowMatrix};

fn awkward() -> RowMatrix {
    RowMatrix::from_rows(&[
        vec![0.1, -2.5e-300, 1.0 / 3.0],
        vec![6.02214076e23, 5e-324, -0.0],
        vec![f64::MAX, f64::MIN_POSITIVE, 42.0],
    ])
    .unwrap()
}

fn bits(m: &RowMatrix) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn matrices_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["m.csv", "m.json"] {
        let p = dir.path().join(name);
        write_matrix(&p, &awkward(), Default::default()).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!((back.rows(), back.cols()), (3, 3));
        assert_eq!(bits(&back), bits(&awkward()), "{name}");
    }
}

#[test]
fn embeddings_keep_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let e = DiffusionEmbedding {
        coords: awkward(),
        iteration: 3,
        s: 0.0123,
        local_dims: vec![1.0, 1.5, 2.0000000000000004],
    };
    for name in ["e.csv", "e.json"] {
        let p = dir.path().join(name);
        save_embedding(&e, &p).unwrap();
        let back = load_embedding(&p).unwrap();
        assert_eq!(bits(&back.coords), bits(&e.coords));
        assert_eq!((back.iteration, back.s, back.local_dims.clone()), (3, 0.0123, e.local_dims.clone()));
    }
    assert!(dir.path().join("e.meta.json").is_file());
}

fn data_kind(err: CliError) -> (DataKind, String) {
    assert_eq!(err.exit_code(), exit::DATA, "{err}");
    match err {
        CliError::Data { kind, location, .. } => (kind, location),
        other => panic!("expected a data error, got {other}"),
    }
}

#[test]
fn bad_files_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let (kind, loc) = data_kind(read_matrix(&write("ragged.csv", "1,2\n3\n")).unwrap_err());
    assert_eq!((kind, loc.as_str()), (DataKind::Shape, " at row 2"));
    let (kind, loc) = data_kind(read_matrix(&write("word.csv", "1,2\n3,x\n")).unwrap_err());
    assert_eq!(kind, DataKind::Format);
    assert!(loc.contains("row 2") && loc.contains("column 2"), "{loc}");
    let (kind, _) = data_kind(read_matrix(&write("nan.csv", "1,NaN\n")).unwrap_err());
    assert_eq!(kind, DataKind::Validation);
    let (kind, _) = data_kind(read_matrix(&write("empty.csv", "")).unwrap_err());
    assert_eq!(kind, DataKind::Shape);
    let (kind, _) = data_kind(read_matrix(&write("short.json", r#"{"shape":[2,1],"data":[[1]]}"#)).unwrap_err());
    assert_eq!(kind, DataKind::Shape);
    let (kind, _) = data_kind(read_matrix(&write("broken.json", "{\"shape\":")).unwrap_err());
    assert_eq!(kind, DataKind::Format);
    let missing = read_matrix(&dir.path().join("absent.csv")).unwrap_err();
    assert_eq!(missing.exit_code(), exit::DATA);
    assert!(missing.to_string().contains("absent.csv"));
}
