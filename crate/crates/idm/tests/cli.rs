use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn idm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idm")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn generate_tiny_circle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = idm(&["--out", out.to_str().unwrap(), "generate", "circle", "--n", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Vec<Vec<f64>> = read(&out.join("points.csv"))
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for (j, r) in rows.iter().enumerate() {
        let t = 2.0 * std::f64::consts::PI * j as f64 / 4.0;
        assert_eq!(r, &vec![t.cos(), t.sin()]);
    }
    assert!(out.join("features/identity.csv").is_file());
    assert!(read(&out.join("manifest.json")).contains("\"samples\": 4"));
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = idm(&[
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "5",
            "--format",
            "json",
            "generate",
            "annulus",
            "--n",
            "120",
            "--noise",
            "0.01",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        texts.push((read(&out.join("points.json")), read(&out.join("features/radius.json")), read(&out.join("manifest.json"))));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();

    let usage = idm(&["generate", "circle", "--n", "4"]);
    assert_eq!(code(&usage), 2, "missing --out");
    assert_eq!(code(&idm(&["frobnicate"])), 2);
    assert_eq!(code(&idm(&["--out", o, "generate", "torus"])), 2, "torus needs --grid");
    assert_eq!(code(&idm(&["--out", o, "--threads", "0", "generate", "circle", "--n", "4"])), 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n3\n").unwrap();
    let data = idm(&["--out", o, "tune", "--input", bad.to_str().unwrap()]);
    assert_eq!(code(&data), 3, "{}", stderr(&data));
    assert!(stderr(&data).contains("row 2"));

    let missing = idm(&["--out", o, "eval", "decoder", "--dir", dir.path().join("nothing").to_str().unwrap()]);
    assert_eq!(code(&missing), 3);
    assert!(stderr(&missing).contains("manifest.json"));

    // Three identical points: every neighbor distance is zero.
    let flat = dir.path().join("flat.csv");
    fs::write(&flat, "1,1\n1,1\n1,1\n").unwrap();
    let num = idm(&["--out", o, "diffusion-map", "--input", flat.to_str().unwrap(), "--k", "3", "--modes", "1"]);
    assert!(matches!(code(&num), 3 | 4), "{}", stderr(&num));
}

#[test]
fn small_trajectory_writes_artifacts_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let run = idm(&[
        "--out",
        o,
        "idm",
        "--fixture",
        "circle",
        "--n",
        "200",
        "--feature",
        "identity",
        "--iters",
        "2",
        "--k",
        "30",
        "--modes",
        "8",
        "--diagnostics",
        "contraction,identity,neighbors,decoder",
        "--base",
        "0",
        "--count",
        "5",
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    for f in [
        "manifest.json",
        "input/points.csv",
        "input/features.csv",
        "iter_0/embedding.csv",
        "iter_2/embedding.meta.json",
        "iter_2/eigenvalues.csv",
        "iter_2/local.csv",
        "iter_2/diagnostics.json",
        "contraction.csv",
        "identity.json",
        "neighbors.csv",
        "decoder.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let emb = read(&out.join("iter_2/embedding.csv"));
    assert_eq!(emb.lines().count(), 200);
    assert!(emb.lines().all(|l| l.split(',').count() == 8));
    let neighbors = read(&out.join("neighbors.csv"));
    assert_eq!(neighbors.lines().count(), 1 + 3 * 5);
    assert!(neighbors.lines().nth(1).unwrap().ends_with(",0,0"), "self first");

    for which in ["neighbors", "decoder", "fixedpoint", "distances"] {
        let e = idm(&["eval", which, "--dir", o, "--k", "30", "--times", "0.001"]);
        assert_eq!(code(&e), 0, "{which}: {}", stderr(&e));
    }
    let dist = read(&out.join("eval/distances.csv"));
    let first = dist.lines().nth(1).unwrap();
    assert_eq!(first, "0,0,0,0");
    let geo: f64 = dist.lines().nth(2).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((geo - 2.0 * std::f64::consts::PI / 200.0).abs() < 1e-12);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let out = dir.path().join("cfg");
    fs::write(
        &cfg,
        format!(
            "out = {:?}\nseed = 2\n[data]\nfixture = \"circle\"\nn = 150\nfeature = \"identity\"\n[idm]\nk = 25\nmodes = 6\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = idm(&["--config", cfg.to_str().unwrap(), "diffusion-map", "--tau", "0.3", "--dump-kernel"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let diag = read(&out.join("diagnostics.json"));
    assert!(diag.contains("\"tau\": 0.3"), "{diag}");
    assert!(read(&out.join("kernel.csv")).starts_with("i,j,value\n"));

    fs::write(&cfg, "[idm]\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&idm(&["--config", cfg.to_str().unwrap(), "generate", "circle", "--n", "4"])), 2);
}
