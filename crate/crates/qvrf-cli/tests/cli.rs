//! End-to-end tests of the `qvrf` binary.

use std::path::Path;
use std::process::{Command, Output};

use qvrf::{pnm, synth};

fn qvrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvrf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_natural(path: &Path, w: usize, h: usize, seed: u64) {
    pnm::write_pgm(path, &synth::synthetic_natural(w, h, seed)).unwrap();
}

#[test]
fn encode_decode_psnr_matches_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let img_dir = dir.path().join("imgs");
    std::fs::create_dir(&img_dir).unwrap();
    let src = img_dir.join("nat.pgm");
    write_natural(&src, 192, 192, 40);

    let csv = dir.path().join("sweep.csv");
    let out = qvrf(&[
        "sweep",
        "--images",
        img_dir.to_str().unwrap(),
        "--a-min",
        "2",
        "--a-max",
        "2",
        "--points",
        "1",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let row = csv_text.lines().nth(1).unwrap();
    let sweep_psnr = row.split(',').nth(6).unwrap().to_string();

    let packed = dir.path().join("nat.qvrf");
    let recon = dir.path().join("recon.pgm");
    let out = qvrf(&[
        "encode",
        "-i",
        src.to_str().unwrap(),
        "-o",
        packed.to_str().unwrap(),
        "--a",
        "2",
    ]);
    assert!(out.status.success());
    let out = qvrf(&[
        "decode",
        "-i",
        packed.to_str().unwrap(),
        "-o",
        recon.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = qvrf(&[
        "psnr",
        "--reference",
        src.to_str().unwrap(),
        "--distorted",
        recon.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let cli_psnr = stdout(&out).lines().next().unwrap().to_string();
    assert_eq!(cli_psnr, sweep_psnr, "same code path must agree exactly");
}

#[test]
fn lambda_without_fit_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("img.pgm");
    write_natural(&src, 64, 64, 1);
    let out = qvrf(&[
        "encode",
        "-i",
        src.to_str().unwrap(),
        "-o",
        dir.path().join("x.qvrf").to_str().unwrap(),
        "--lambda",
        "4.0",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("--fit"),
        "diagnostic should mention --fit: {err}"
    );
}

#[test]
fn unknown_flag_fails() {
    let out = qvrf(&["encode", "--frobnicate"]);
    assert!(!out.status.success());
}

#[test]
fn fit_output_feeds_encode() {
    let dir = tempfile::tempdir().unwrap();
    let img_dir = dir.path().join("calib");
    std::fs::create_dir(&img_dir).unwrap();
    write_natural(&img_dir.join("c.pgm"), 96, 96, 7);

    let fit_path = dir.path().join("fit.txt");
    let out = qvrf(&[
        "fit",
        "--lambdas",
        "1.0,4.0,16.0",
        "--images",
        img_dir.to_str().unwrap(),
        "--out",
        fit_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&fit_path).unwrap();
    assert!(text.contains("slope="), "footer present: {text}");
    assert_eq!(text.lines().count(), 4, "3 pairs + footer: {text}");

    let src = dir.path().join("img.pgm");
    write_natural(&src, 120, 80, 9);
    let packed = dir.path().join("img.qvrf");
    let out = qvrf(&[
        "encode",
        "-i",
        src.to_str().unwrap(),
        "-o",
        packed.to_str().unwrap(),
        "--lambda",
        "4.0",
        "--fit",
        fit_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = qvrf(&["account", "-i", packed.to_str().unwrap()]);
    assert!(out.status.success());
    let report = stdout(&out);
    assert!(
        report.contains("total:") && report.contains("side:"),
        "{report}"
    );
}

#[test]
fn bdrate_of_identical_sweeps_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let img_dir = dir.path().join("imgs");
    std::fs::create_dir(&img_dir).unwrap();
    write_natural(&img_dir.join("nat.pgm"), 192, 192, 21);

    let csv = dir.path().join("curve.csv");
    let out = qvrf(&[
        "sweep",
        "--images",
        img_dir.to_str().unwrap(),
        "--a-min",
        "1",
        "--a-max",
        "2.2",
        "--points",
        "4",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = qvrf(&[
        "bdrate",
        "--anchor",
        csv.to_str().unwrap(),
        "--test",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout(&out).trim(), "+0.0000%");
}

#[test]
fn decode_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.qvrf");
    std::fs::write(&bad, b"not a container at all").unwrap();
    let out = qvrf(&[
        "decode",
        "-i",
        bad.to_str().unwrap(),
        "-o",
        dir.path().join("x.pgm").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("qvrf:"));
}
