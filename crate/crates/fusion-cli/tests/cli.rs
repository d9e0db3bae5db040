//! End-to-end tests of the `fusion` binary: every subcommand, exit codes,
//! machine-parsable error tags, and bitwise reproducibility of runs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fusion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusion"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

fn make_phantoms(dir: &Path, count: usize) {
    let out = fusion(&[
        "phantom",
        "--out",
        dir.to_str().unwrap(),
        "--count",
        &count.to_string(),
        "--width",
        "32",
        "--height",
        "32",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
}

fn train_quick(data: &Path, out_dir: &Path, epochs: usize) -> Output {
    fusion(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--epochs",
        &epochs.to_string(),
        "--seed",
        "3",
    ])
}

#[test]
fn full_pipeline_phantom_train_fuse_visualize_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    make_phantoms(&data, 3);
    assert_eq!(fs::read_dir(&data).unwrap().count(), 6);

    let out = train_quick(&data, &run, 2);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let ckpt = run.join("checkpoint.ckpt");
    assert!(ckpt.exists());
    assert!(run.join("loss_log.csv").exists());
    assert!(run.join("config.json").exists());
    let csv = fs::read_to_string(run.join("loss_log.csv")).unwrap();
    assert!(csv.starts_with("epoch,l_ssim_a,l_ssim_b,l_l2,l_total\n"));
    assert_eq!(csv.lines().count(), 3);

    let anat = data.join("ph000_anat.png");
    let func = data.join("ph000_func.png");
    let fuse_dir = tmp.path().join("fused");
    let out = fusion(&[
        "fuse",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--pair",
        anat.to_str().unwrap(),
        func.to_str().unwrap(),
        "--out",
        fuse_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    assert!(fuse_dir.join("ph000_fused.png").exists());

    let viz_dir = tmp.path().join("viz");
    let out = fusion(&[
        "visualize",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--pair",
        anat.to_str().unwrap(),
        func.to_str().unwrap(),
        "--omega",
        "0.6",
        "--out",
        viz_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    assert!(viz_dir.join("ph000_l0.80_o0.60_color.png").exists());
    assert!(viz_dir.join("ph000_fused.png").exists());

    let report = tmp.path().join("report.csv");
    let out = fusion(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let report_csv = fs::read_to_string(&report).unwrap();
    assert!(report_csv.starts_with("pair_id,q_ssim,q_g,fuse_ms\n"));
    assert_eq!(report_csv.lines().count(), 4);
}

#[test]
fn evaluate_grid_emits_121_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    make_phantoms(&data, 2);
    let out = train_quick(&data, &run, 1);
    assert!(out.status.success(), "{}", stderr_line(&out));

    let report = tmp.path().join("grid.csv");
    let out = fusion(&[
        "evaluate",
        "--checkpoint",
        run.join("checkpoint.ckpt").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--lambda-grid",
        "0:1:0.1",
        "--omega-grid",
        "0:1:0.1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let csv = fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 122, "header plus 121 cells");
}

#[test]
fn phantom_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    make_phantoms(&a, 2);
    make_phantoms(&b, 2);
    for entry in fs::read_dir(&a).unwrap() {
        let pa = entry.unwrap().path();
        let pb = b.join(pa.file_name().unwrap());
        assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap());
    }
}

#[test]
fn rerun_with_echoed_config_reproduces_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_phantoms(&data, 2);

    let run1 = tmp.path().join("run1");
    let out = train_quick(&data, &run1, 2);
    assert!(out.status.success(), "{}", stderr_line(&out));

    // Re-train purely from the echoed config, redirecting the output dir.
    let run2 = tmp.path().join("run2");
    let out = fusion(&[
        "train",
        "--config",
        run1.join("config.json").to_str().unwrap(),
        "--out",
        run2.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    assert_eq!(
        fs::read(run1.join("checkpoint.ckpt")).unwrap(),
        fs::read(run2.join("checkpoint.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read(run1.join("loss_log.csv")).unwrap(),
        fs::read(run2.join("loss_log.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_2_with_tag() {
    // Unknown flag: rejected by the parser.
    let out = fusion(&["phantom", "--out", "/tmp/x", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[usage]:"), "{}", stderr_line(&out));

    // Missing required flag.
    let out = fusion(&["fuse"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[usage]:"));

    // Invalid value: zero phantom count.
    let tmp = tempfile::tempdir().unwrap();
    let out = fusion(&[
        "phantom",
        "--out",
        tmp.path().to_str().unwrap(),
        "--count",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[usage]:"));

    // Invalid config file content.
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"fusion": {"lambda": 7.0}}"#).unwrap();
    let out = fusion(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error[usage]:"));

    // Unknown config key.
    fs::write(&cfg, r#"{"fusion": {}, "tpyo": 1}"#).unwrap();
    let out = fusion(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_machine_tag() {
    let tmp = tempfile::tempdir().unwrap();

    // Missing checkpoint file.
    let out = fusion(&[
        "evaluate",
        "--checkpoint",
        tmp.path().join("missing.ckpt").to_str().unwrap(),
        "--data",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let line = stderr_line(&out);
    assert!(line.starts_with("error[io]:"), "{}", line);

    // Corrupt checkpoint.
    let junk = tmp.path().join("junk.ckpt");
    fs::write(&junk, b"not a checkpoint").unwrap();
    let out = fusion(&[
        "fuse",
        "--checkpoint",
        junk.to_str().unwrap(),
        "--pair",
        "a.png",
        "b.png",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error[corrupt-checkpoint]:"));

    // Dimension mismatch between the two pair files.
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    make_phantoms(&data, 1);
    let out = train_quick(&data, &run, 1);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let wide = tmp.path().join("wide");
    let out = fusion(&[
        "phantom",
        "--out",
        wide.to_str().unwrap(),
        "--count",
        "1",
        "--width",
        "48",
        "--height",
        "32",
    ]);
    assert!(out.status.success());
    let out = fusion(&[
        "fuse",
        "--checkpoint",
        run.join("checkpoint.ckpt").to_str().unwrap(),
        "--pair",
        data.join("ph000_anat.png").to_str().unwrap(),
        wide.join("ph000_func.png").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let line = stderr_line(&out);
    assert!(line.starts_with("error[dimension-mismatch]:"), "{}", line);
}

#[test]
fn fused_output_roundtrips_within_quantization() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    make_phantoms(&data, 1);
    let out = train_quick(&data, &run, 1);
    assert!(out.status.success());

    // Fusing twice gives byte-identical images.
    let out1 = tmp.path().join("f1");
    let out2 = tmp.path().join("f2");
    for dir in [&out1, &out2] {
        let out = fusion(&[
            "fuse",
            "--checkpoint",
            run.join("checkpoint.ckpt").to_str().unwrap(),
            "--pair",
            data.join("ph000_anat.png").to_str().unwrap(),
            data.join("ph000_func.png").to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr_line(&out));
    }
    assert_eq!(
        fs::read(out1.join("ph000_fused.png")).unwrap(),
        fs::read(out2.join("ph000_fused.png")).unwrap()
    );
}
