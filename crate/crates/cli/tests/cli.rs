//! End-to-end exercises of the binary: the full gen/train/eval/predict/attn
//! pipeline on a miniature dataset, determinism across reruns, and the error
//! contract (nonzero exit with a one-line diagnostic).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_laneattn"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn laneattn");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("laneattn_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn gen_small(dir: &Path, seed: u64) {
    run_ok(&[
        "gen",
        "--counts",
        "24,8,8",
        "--noise-std",
        "0.05",
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = tmp_dir("pipe");
    gen_small(&dir, 7);
    for f in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        assert!(dir.join(f).exists(), "{f} written");
    }

    // Regenerating with the same seed is byte-identical; a different seed is not.
    let bytes = std::fs::read(dir.join("train.jsonl")).unwrap();
    let dir2 = tmp_dir("pipe2");
    gen_small(&dir2, 7);
    assert_eq!(bytes, std::fs::read(dir2.join("train.jsonl")).unwrap());
    let dir3 = tmp_dir("pipe3");
    gen_small(&dir3, 8);
    assert_ne!(bytes, std::fs::read(dir3.join("train.jsonl")).unwrap());

    // Tiny training run (dims shrunk through the config file to stay fast).
    let cfg_path = dir.join("config.json");
    std::fs::write(
        &cfg_path,
        r#"{
  "model": {
    "embed_dim": 4, "lstm_hidden": 8, "lane_enc_dim": 8, "overall_hidden": 16,
    "lane_shape": { "k": 3, "spacing_m": 2.0 },
    "aggregator": "attention", "t_pred_steps": 30
  },
  "train": { "max_epochs": 2, "batch_size": 8, "seed": 3 }
}"#,
    )
    .unwrap();
    let model_dir = dir.join("model");
    let train_args = [
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--data",
        dir.to_str().unwrap(),
        "--out",
        model_dir.to_str().unwrap(),
        "--aggregator",
        "attention",
        "--horizon",
        "3",
        "--seed",
        "3",
    ];
    run_ok(&train_args);
    let ckpt = model_dir.join("checkpoint.json");
    let log = model_dir.join("train_log.txt");
    assert!(ckpt.exists() && log.exists());

    // Training again with the same seed reproduces checkpoint and log bytes.
    let ckpt_bytes = std::fs::read(&ckpt).unwrap();
    let log_bytes = std::fs::read(&log).unwrap();
    run_ok(&train_args);
    assert_eq!(ckpt_bytes, std::fs::read(&ckpt).unwrap());
    assert_eq!(log_bytes, std::fs::read(&log).unwrap());

    // Evaluation: report rows for the model and the baseline at both horizons.
    let report = dir.join("report.jsonl");
    let out = run_ok(&[
        "eval",
        "--checkpoints",
        ckpt.to_str().unwrap(),
        "--data",
        dir.join("test.jsonl").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(table.contains("lane-attention") && table.contains("constant-velocity"));
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(
        report_text.lines().filter(|l| !l.starts_with('#')).count(),
        4,
        "2 models x 2 horizons"
    );

    // Determinism of eval.
    let report2 = dir.join("report2.jsonl");
    run_ok(&[
        "eval",
        "--checkpoints",
        ckpt.to_str().unwrap(),
        "--data",
        dir.join("test.jsonl").to_str().unwrap(),
        "--report",
        report2.to_str().unwrap(),
    ]);
    assert_eq!(report_text, std::fs::read_to_string(&report2).unwrap());

    // Prediction prints one JSON object with a 30-point trajectory.
    let out = run_ok(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        dir.join("test.jsonl").to_str().unwrap(),
        "--sample-id",
        "0",
    ]);
    let doc: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("predict emits JSON");
    assert_eq!(doc["trajectory"].as_array().unwrap().len(), 30);

    // Attention export writes trace + SVG pairs.
    let attn_dir = dir.join("attn");
    run_ok(&[
        "attn",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        dir.join("test.jsonl").to_str().unwrap(),
        "--out-dir",
        attn_dir.to_str().unwrap(),
        "--limit",
        "2",
    ]);
    assert!(attn_dir.join("attn_0.json").exists());
    assert!(attn_dir.join("attn_0.svg").exists());
    assert!(attn_dir.join("attn_1.svg").exists());

    for d in [dir, dir2, dir3] {
        std::fs::remove_dir_all(d).ok();
    }
}

#[test]
fn errors_exit_nonzero_with_one_line_diagnostic() {
    // Missing dataset file.
    let out = bin()
        .args(["eval", "--checkpoints", "/nonexistent/c.json", "--data", "/nonexistent/d.jsonl", "--report", "/tmp/r.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: "), "diagnostic line, got: {stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "single line");

    // Bad flag value.
    let out = bin()
        .args(["gen", "--counts", "1,2", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    // Malformed dataset: parse error names the line.
    let dir = tmp_dir("err");
    let bad = dir.join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":0,\"kind\":\"straight\",\"dt\":0.1,\"obs\":[[0.0,1.0]\n").unwrap();
    let out = bin()
        .args([
            "predict",
            "--checkpoint",
            "/nonexistent/c.json",
            "--data",
            bad.to_str().unwrap(),
            "--sample-id",
            "0",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    std::fs::remove_dir_all(dir).ok();
}
