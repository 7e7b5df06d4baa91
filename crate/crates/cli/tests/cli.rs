use std::path::Path;
use std::process::{Command, Output};

fn bwinr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bwinr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn fit_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bwinr(&["fit", "--size", "16", "--width", "16", "--epochs", "5", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["reconstruction.pgm", "train_log.csv", "variation.csv", "checkpoint.txt", "summary.csv"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let log = String::from_utf8(read(dir.path(), "train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,psnr,lr,vnorm_total,feat_cond"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PSNR"));
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = bwinr(&[
            "ct", "--size", "16", "--width", "12", "--epochs", "4", "--angles", "10", "--log-every", "1",
            "--track-condition", "--out", d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["train_log.csv", "variation.csv", "summary.csv", "sinogram.csv", "checkpoint.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn conditioning_reports_both_systems() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwinr(&["conditioning", "--j-max", "3", "--k-list", "8,16", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let dy = String::from_utf8(read(dir.path(), "dyadic_gram.csv")).unwrap();
    assert_eq!(dy.lines().count(), 4);
    let re = String::from_utf8(read(dir.path(), "relu_gram.csv")).unwrap();
    assert_eq!(re.lines().count(), 3);
}

#[test]
fn image_command_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.pgm");
    let o = bwinr(&["image", "--kind", "phantom", "--size", "32", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5"));
    assert_eq!(bytes.len(), b"P5\n32 32\n255\n".len() + 32 * 32);
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(bwinr(&["fit", "--act", "tanh", "--out", out]).status.code(), Some(1));
    assert_eq!(bwinr(&["fit", "--c", "-1", "--out", out]).status.code(), Some(1));
    assert_eq!(bwinr(&["fit", "--no-such-flag"]).status.code(), Some(1));
    let missing = dir.path().join("missing.pgm");
    assert_eq!(
        bwinr(&["fit", "--image", missing.to_str().unwrap(), "--out", out]).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, b"P2\n1 1\n255\n0").unwrap();
    assert_eq!(bwinr(&["fit", "--image", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    let o = bwinr(&[
        "fit", "--act", "relu", "--size", "8", "--width", "8", "--epochs", "50", "--lr", "1e6", "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_exits_cleanly() {
    let o = bwinr(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("vnorm-sweep"));
}
