use std::path::Path;
use std::process::{Command, Output};

use gcnn::data::{TEST_FILE, TRAIN_VALID_FILE};

fn gcnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcnn"))
        .args(args)
        .env_remove("GCNN_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A data directory holding the fixture under both standard file names.
fn data_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/rotmnist_proxy_4000.amat.gz");
    for name in [TRAIN_VALID_FILE, TEST_FILE] {
        std::fs::copy(&fixture, dir.path().join(format!("{name}.gz"))).unwrap();
    }
    dir
}

#[test]
fn equivariance_check_passes() {
    let o = gcnn(&["check", "equivariance", "--group", "p4", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("integer") && text.contains("real"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn impossible_tolerance_fails_the_check() {
    let o = gcnn(&["check", "equivariance", "--group", "z2", "--trials", "3", "--tol=-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradient_check_passes() {
    let o = gcnn(&["check", "gradients", "--trials", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn bench_prints_csv() {
    let o = gcnn(&["bench", "gconv", "--group", "p4", "--sizes", "6", "--k-in", "2", "--k-out", "2", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines().filter(|l| l.contains(','));
    assert_eq!(lines.next().unwrap(), "group,kind,K_in,K_out,n,H,direct_ns,fast_ns,planar_ns");
    assert_eq!(lines.count(), 2);
}

#[test]
fn bad_usage_exits_with_two() {
    assert_eq!(gcnn(&["check", "equivariance", "--group", "p6"]).status.code(), Some(2));
    assert_eq!(gcnn(&["frobnicate"]).status.code(), Some(2));
    let dir = data_dir();
    let data = dir.path().to_str().unwrap();
    let out = dir.path().join("m.ckpt");
    let o = gcnn(&["train", "--model", "resnet", "--data", data, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.ckpt");
    let o = gcnn(&["train", "--model", "z2cnn", "--data", dir.path().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let o = gcnn(&["eval", "--ckpt", out.to_str().unwrap(), "--data", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_then_eval() {
    let dir = data_dir();
    let data = dir.path().to_str().unwrap();
    let ckpt = dir.path().join("z2.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let base = ["train", "--model", "z2cnn", "--data", data, "--out", ckpt, "--epochs", "1"];

    // a non-standard file size needs explicit split sizes
    assert_eq!(gcnn(&base).status.code(), Some(3));

    let sized = [&base[..], &["--train-size", "64", "--valid-size", "64", "--batch-size", "32"]].concat();
    let o = gcnn(&sized);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("epoch=1"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(format!("{ckpt}.json")).unwrap()).unwrap();
    assert_eq!(manifest["model"], "z2cnn");
    assert_eq!(manifest["datasets"][0]["items"], 64);
    assert_eq!(manifest["selected_epoch"], 0);

    let o = gcnn(&["eval", "--ckpt", ckpt, "--data", data, "--split", "test"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rate: f64 = stdout(&o)
        .trim()
        .strip_prefix("error_rate=")
        .expect("error_rate line")
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&rate));

    // the validation split needs the standard 12000-item file
    let o = gcnn(&["eval", "--ckpt", ckpt, "--data", data, "--split", "valid"]);
    assert_eq!(o.status.code(), Some(3));

    std::fs::write(ckpt, b"GCNN1\nnot a manifest").unwrap();
    let o = gcnn(&["eval", "--ckpt", ckpt, "--data", data]);
    assert_eq!(o.status.code(), Some(3));
}
