mod common;

use std::path::Path;
use std::process::Command;

use kssl::cli::{read_trace, RunConfig};
use kssl::dataio::{read_matrix, read_points, write_points, MatrixFormat};
use nalgebra::DMatrix;

fn kssl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kssl")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/train_vicreg.json");
    let cfg = RunConfig::load(&path).unwrap();
    let r = cfg.resolve(kssl::cli::CommandKind::Train).unwrap();
    assert_eq!(r.train.epochs, 5000);
    assert_eq!(r.repeats, 3);
}

#[test]
fn synthesize_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("syn");
    let o = kssl(&[
        "synthesize", "--data", "gaussian:4:30", "--target", "random:2", "--preimages", "--clamp", "-3,3",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_matrix(out.join("M.mat64"), MatrixFormat::Mat64).unwrap();
    assert_eq!(m.shape(), (30, 30));
    assert_eq!(read_matrix(out.join("C.mat64"), MatrixFormat::Mat64).unwrap().shape(), (2, 30));
    let pre = read_points(out.join("preimages.csv")).unwrap();
    assert_eq!((pre.dim(), pre.len()), (4, 30));
    assert!(pre.values().iter().all(|v| (-3.0..=3.0).contains(v)));
    let manifest = json(&out.join("manifest.json"));
    assert!(manifest["mkm_residual"].as_f64().unwrap() < 1e-8);
    assert!(manifest["augmented_fit_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn train_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let x = common::gaussian(&mut rng, 3, 25) * 0.5;
    let f = DMatrix::from_fn(2, 25, |i, j| x[(i, j)] - 0.3 * x[(2, j)]);
    let (xp, fp) = (dir.path().join("x.csv"), dir.path().join("f.csv"));
    write_points(&x, &xp).unwrap();
    write_points(&f, &fp).unwrap();
    let out = dir.path().join("run");
    let o = kssl(&[
        "train", "--data", xp.to_str().unwrap(), "--target", fp.to_str().unwrap(), "--method", "scl",
        "--epochs", "400", "--lr", "0.01", "--repeats", "2", "--eval-every", "100", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read_trace(&out.join("trace.csv")).unwrap();
    assert_eq!(trace.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 100, 200, 300, 400]);
    assert!(out.join("trace_repeat1.csv").exists());
    let report = json(&out.join("report.json"));
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert!(report["final_procrustes_mean"].as_f64().unwrap() < report["baseline_procrustes"].as_f64().unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"epochs\": ").unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(kssl(&["train", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    // duplicated points make the Gram matrix singular
    let pts = dir.path().join("dup.csv");
    write_points(&DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 2.0, 1.0, 1.0, 0.5, 0.1]), &pts).unwrap();
    let o = kssl(&["synthesize", "--data", pts.to_str().unwrap(), "--target", "random:1", "--lambda-ridge", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = kssl(&["train", "--data", "gaussian:3:20", "--lr=-1", "--out", out]);
    assert_eq!(o.status.code(), Some(7));
    let o = kssl(&["train", "--data", "missing.csv", "--target", "random:1", "--out", out]);
    assert_eq!(o.status.code(), Some(6));
}
