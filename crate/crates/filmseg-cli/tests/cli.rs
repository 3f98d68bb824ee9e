//! End-to-end tests of the `filmseg` binary: exit codes, error records,
//! artifact layout, and cross-invocation determinism.

use std::path::Path;
use std::process::{Command, Output};

use filmseg_core::evalkit::{
    BucketRow, MetricsConfig, MetricsReport, PrecisionEntry, ReportFile, RunIdentity, SampleRow,
    REPORT_SCHEMA_VERSION,
};
use filmseg_core::scenegen::Split;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filmseg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_error_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON record on stderr:\n{text}"));
    serde_json::from_str(line).expect("record parses")
}

/// Overrides that make every stage run in seconds.
const TINY: &[&str] = &[
    "--set",
    "dataset.n_train=12",
    "--set",
    "dataset.n_test_seen=8",
    "--set",
    "dataset.n_test_unseen=8",
    "--set",
    "pretrain.n_pairs=64",
    "--set",
    "pretrain.heldout=8",
    "--set",
    "pretrain.batch_size=16",
    "--set",
    "pretrain.epochs=1",
    "--set",
    "pretrain.mlm_epochs=1",
    "--set",
    "decoder.width=32",
    "--set",
    "train.epochs=1",
    "--set",
    "train.batch_size=4",
    "--set",
    "eval.sa_trials=2",
];

#[test]
fn help_and_version_exit_zero() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
}

#[test]
fn usage_errors_exit_one_with_record() {
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    let rec = stderr_error_record(&out);
    assert_eq!(rec["error"]["kind"], "usage");
    assert_eq!(rec["error"]["exit_code"], 1);

    // A bad enum value for --split is also caught at the usage layer.
    let out = run(&[
        "eval", "--data", "x", "--encoder", "y", "--decoder", "z", "--split", "weird",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["ablate", "--axis", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    let rec = stderr_error_record(&out);
    let msg = rec["error"]["message"].as_str().unwrap();
    assert!(msg.contains("nonsense") && msg.contains("fusion_variant"), "{msg}");
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&[
        "gen-data",
        "--set",
        "decoder.depthh=3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let rec = stderr_error_record(&out);
    assert_eq!(rec["error"]["kind"], "config");
    assert!(rec["error"]["message"].as_str().unwrap().contains("decoder.depthh"));
    // The record is also left on disk for tooling.
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("error.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk["error"]["exit_code"], 2);

    let out = run(&["pretrain", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

#[test]
fn dataset_encoder_decoder_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let enc_dir = dir.path().join("enc");
    let train_dir = dir.path().join("train");
    let eval_dir = dir.path().join("eval");

    let out = bin()
        .args(["gen-data", "--out", data_dir.to_str().unwrap()])
        .args(TINY)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data_dir.join("dataset").is_dir());
    let gen_manifest = manifest(&data_dir);
    let dataset_hash = gen_manifest["dataset_hash"].as_str().unwrap().to_string();
    assert!(!dataset_hash.is_empty());
    assert!(data_dir.join("config.snapshot").is_file());

    let out = bin()
        .args(["pretrain", "--out", enc_dir.to_str().unwrap()])
        .args(TINY)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let encoder = enc_dir.join("encoder.ckpt");
    assert!(encoder.is_file());
    assert!(enc_dir.join("pretrain_report.json").is_file());

    let out = bin()
        .args([
            "train",
            "--data",
            data_dir.join("dataset").to_str().unwrap(),
            "--encoder",
            encoder.to_str().unwrap(),
            "--out",
            train_dir.to_str().unwrap(),
        ])
        .args(TINY)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let decoder = train_dir.join("decoder.ckpt");
    assert!(decoder.is_file());
    // The train manifest points at the same dataset as gen-data's.
    assert_eq!(manifest(&train_dir)["dataset_hash"].as_str().unwrap(), dataset_hash);

    let out = bin()
        .args([
            "eval",
            "--data",
            data_dir.join("dataset").to_str().unwrap(),
            "--encoder",
            encoder.to_str().unwrap(),
            "--decoder",
            decoder.to_str().unwrap(),
            "--split",
            "test_seen",
            "--out",
            eval_dir.to_str().unwrap(),
        ])
        .args(TINY)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report_path = eval_dir.join("reports").join("report.json");
    let file: ReportFile =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(file.reports.len(), 1);
    let r = &file.reports[0];
    assert_eq!(r.identity.variant_tag, "hierarchical_film");
    assert_eq!(r.identity.dataset_hash, dataset_hash);
    assert_eq!(r.n_samples, 8);
    assert!(r.sa.is_some(), "interaction summary requested via eval.sa_trials");
    assert!(eval_dir.join("reports").join("summary.tsv").is_file());
}

#[test]
fn repro_smoke_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for out_dir in [&first, &second] {
        let out = bin()
            .args([
                "repro",
                "--profile",
                "smoke",
                "--seed",
                "5",
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .args(TINY)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stdout:\n{}\nstderr:\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("PASS"), "{stdout}");
        assert!(!stdout.contains("FAIL"), "{stdout}");
    }
    // Two separate invocations produce identical metric files.
    for rel in ["a/reports/report.json", "a/reports/summary.tsv", "a/run.json"] {
        let x = std::fs::read(first.join(rel)).unwrap();
        let y = std::fs::read(second.join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs across invocations");
    }
}

fn fabricated_report(tag: &str, iou: f64, hash: &str) -> MetricsReport {
    let cfg = MetricsConfig::default();
    MetricsReport {
        split: Split::TestUnseen,
        n_samples: 2,
        mean_iou: iou,
        precision: cfg
            .thresholds
            .iter()
            .map(|&t| PrecisionEntry { threshold: t, value: if iou > t { 1.0 } else { 0.0 } })
            .collect(),
        buckets: vec![BucketRow { attribute_count: 1, n_samples: 2, mean_iou: iou }],
        rows: vec![
            SampleRow { sample_id: 0, attribute_count: 1, iou },
            SampleRow { sample_id: 1, attribute_count: 1, iou },
        ],
        identity: RunIdentity {
            variant_tag: tag.to_string(),
            checkpoint_fingerprint: "f".repeat(64),
            dataset_hash: hash.to_string(),
            seed: 9,
        },
        sa: None,
    }
}

#[test]
fn report_merges_inputs_and_carries_shared_hash() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for (i, tag) in ["alpha", "beta"].iter().enumerate() {
        let file = ReportFile {
            schema_version: REPORT_SCHEMA_VERSION,
            reports: vec![fabricated_report(tag, 0.25 * (i as f64 + 1.0), "deadbeef")],
        };
        let path = dir.path().join(format!("{tag}.json"));
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        inputs.push(path);
    }
    let out_dir = dir.path().join("merged");
    let out = run(&[
        "report",
        "--inputs",
        inputs[0].to_str().unwrap(),
        inputs[1].to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let merged: ReportFile = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("reports").join("report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(merged.reports.len(), 2);
    let tags: Vec<_> = merged.reports.iter().map(|r| r.identity.variant_tag.as_str()).collect();
    assert_eq!(tags, vec!["alpha", "beta"]);
    assert_eq!(manifest(&out_dir)["dataset_hash"], "deadbeef");

    // A schema from the future is refused rather than misread.
    let bad = ReportFile {
        schema_version: REPORT_SCHEMA_VERSION + 1,
        reports: vec![fabricated_report("gamma", 0.5, "deadbeef")],
    };
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, serde_json::to_string(&bad).unwrap()).unwrap();
    let out = run(&[
        "report",
        "--inputs",
        bad_path.to_str().unwrap(),
        "--out",
        dir.path().join("m2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
