//! End-to-end tests of the `hpm` binary: pipeline behavior, exit codes,
//! config/flag precedence, and equivalence with the in-process API.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hpm_core::{fit_metric, report::read_score_csv, score_batch, FeatureBank, Variant};
use ndarray::array;

fn hpm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hpm"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn hpm");
    assert!(
        out.status.success(),
        "command failed (code {:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth_small(out: &Path, seed: u64) {
    run_ok(hpm().args([
        "synth",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--classes",
        "6",
        "--dim",
        "12",
        "--n-max",
        "40",
        "--imbalance-ratio",
        "10",
    ]));
}

fn report_args(data: &Path, out: &Path) -> Vec<String> {
    [
        "--id-bank",
        data.join("id").to_str().unwrap(),
        "--id-eval",
        data.join("id_eval").to_str().unwrap(),
        "--ood-bank",
        &format!("shifted={}", data.join("ood_shifted_gaussian").display()),
        "--out",
        out.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn full_pipeline_produces_reports_and_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_small(&data, 0);

    run_ok(hpm().arg("fit").args(report_args(&data, &run)));
    run_ok(hpm().arg("score").args(report_args(&data, &run)));
    run_ok(hpm()
        .arg("diagnose")
        .args(report_args(&data, &run))
        .arg("--plots"));
    run_ok(hpm()
        .arg("eval")
        .args(report_args(&data, &run))
        .args(["--cost", "0.5", "--cost-unit", "hours"]));

    for det in ["energy", "msp", "md", "rp-md", "hc-md", "hpm"] {
        assert!(run.join(format!("scores/{det}__id.csv")).is_file());
        assert!(run.join(format!("scores/{det}__shifted.csv")).is_file());
    }
    for v in ["md", "rp-md", "hc-md", "hpm"] {
        assert!(run.join(format!("models/{v}/metric.json")).is_file());
        assert!(run.join(format!("models/{v}/anchors.bin")).is_file());
        assert!(run.join(format!("models/{v}/precision_l.bin")).is_file());
    }
    for f in [
        "report.json",
        "report.csv",
        "les.csv",
        "diagnostics/null_scatter.csv",
        "diagnostics/radius.csv",
        "diagnostics/spectrum.csv",
        "diagnostics/summary.json",
        "diagnostics/radius.svg",
        "diagnostics/spectrum.svg",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["orientation"], "larger_is_ood");
    // single OOD set: averaged equals per-set
    let avg = report["averaged"]["hpm"]["auroc"].as_f64().unwrap();
    let per = report["per_set"]["shifted"]["hpm"]["auroc"].as_f64().unwrap();
    assert_eq!(avg, per);
    assert!(report["les"].as_f64().is_some());
}

#[test]
fn averaging_over_two_ood_sets_matches_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data2 = tmp.path().join("data2");
    let run = tmp.path().join("run");
    synth_small(&data, 0);
    // second OOD set from the same seed, different kind (ID banks identical)
    run_ok(hpm().args([
        "synth",
        "--out",
        data2.to_str().unwrap(),
        "--seed",
        "0",
        "--classes",
        "6",
        "--dim",
        "12",
        "--n-max",
        "40",
        "--imbalance-ratio",
        "10",
        "--ood-kind",
        "uniform-sphere",
    ]));

    let mut args = report_args(&data, &run);
    args.push("--ood-bank".into());
    args.push(format!(
        "uniform={}",
        data2.join("ood_uniform_sphere").display()
    ));
    run_ok(hpm().arg("report").args(&args).args(["--detectors", "hpm,energy"]));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    for det in ["hpm", "energy"] {
        let a = report["per_set"]["shifted"][det]["auroc"].as_f64().unwrap();
        let b = report["per_set"]["uniform"][det]["auroc"].as_f64().unwrap();
        let avg = report["averaged"][det]["auroc"].as_f64().unwrap();
        assert!((avg - 0.5 * (a + b)).abs() <= 1e-12);
    }
}

#[test]
fn cli_scores_equal_in_process_api() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_small(&data, 3);
    run_ok(hpm().arg("fit").args(report_args(&data, &run)).args(["--detectors", "hpm"]));
    run_ok(hpm().arg("score").args(report_args(&data, &run)).args(["--detectors", "hpm"]));

    let fit_bank = FeatureBank::load(&data.join("id")).unwrap();
    let eval_bank = FeatureBank::load(&data.join("id_eval")).unwrap();
    let model = fit_metric(&fit_bank, Variant::HPM, 1e-3).unwrap();
    let expected = score_batch(&model, eval_bank.features().view(), "id").unwrap();

    let from_cli = read_score_csv(&run.join("scores/hpm__id.csv")).unwrap();
    assert_eq!(from_cli.scores, expected.scores);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_small(&data, 1);
    let config = tmp.path().join("run.json");
    fs::write(
        &config,
        serde_json::json!({
            "id_bank": data.join("id"),
            "out_dir": run,
            "detectors": ["hpm"],
            "lambda_rel": 0.5
        })
        .to_string(),
    )
    .unwrap();

    run_ok(hpm().args([
        "fit",
        "--config",
        config.to_str().unwrap(),
        "--lambda-rel",
        "0.001",
    ]));
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(run.join("models/hpm/metric.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["lambda_rel"].as_f64().unwrap(), 0.001);
}

#[test]
fn fit_on_singleton_class_exits_1_naming_the_class() {
    let tmp = tempfile::tempdir().unwrap();
    let bank_dir = tmp.path().join("bank");
    let features = array![[1.0, 0.0], [1.1, 0.2], [0.0, 1.0]];
    FeatureBank::new(features, vec![0, 0, 1], 2)
        .unwrap()
        .save(&bank_dir)
        .unwrap();

    let out = hpm()
        .args([
            "fit",
            "--id-bank",
            bank_dir.to_str().unwrap(),
            "--out",
            tmp.path().join("run").to_str().unwrap(),
            "--detectors",
            "md",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("class 1"),
        "error should name the class: {stderr}"
    );
}

#[test]
fn unwritable_output_path_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, 2);
    let blocker = tmp.path().join("blocker");
    fs::write(&blocker, b"file, not a dir").unwrap();

    let out = hpm()
        .args([
            "fit",
            "--id-bank",
            data.join("id").to_str().unwrap(),
            "--out",
            blocker.join("run").to_str().unwrap(),
            "--detectors",
            "hpm",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_without_scores_exits_1_enumerating_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_small(&data, 4);
    let out = hpm()
        .arg("eval")
        .args(report_args(&data, &run))
        .args(["--detectors", "hpm,energy"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("hpm__id.csv"), "{stderr}");
    assert!(stderr.contains("energy__shifted.csv"), "{stderr}");
}

#[test]
fn energy_without_head_or_logits_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_small(&data, 5);
    // strip the stored head so no logit source remains
    fs::remove_file(data.join("id/head_w.bin")).unwrap();
    fs::remove_file(data.join("id/head_b.bin")).unwrap();

    let out = hpm()
        .arg("score")
        .args(report_args(&data, &run))
        .args(["--detectors", "energy"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing logits"), "{stderr}");
}

#[test]
fn score_before_fit_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_small(&data, 6);
    let out = hpm()
        .arg("score")
        .args(report_args(&data, &run))
        .args(["--detectors", "hpm"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hpm fit"));
}

#[test]
fn diagnose_without_head_skips_null_scatter_with_notice() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    synth_small(&data, 7);
    fs::remove_file(data.join("id/head_w.bin")).unwrap();
    fs::remove_file(data.join("id/head_b.bin")).unwrap();

    let out = run_ok(hpm().arg("diagnose").args(report_args(&data, &run)));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("skipping null-space diagnostics"), "{stderr}");
    assert!(run.join("diagnostics/radius.csv").is_file());
    assert!(run.join("diagnostics/spectrum.csv").is_file());
    assert!(!run.join("diagnostics/null_scatter.csv").exists());
}

/// Collect (relative path, bytes) for every file under a directory.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn synth_is_deterministic_on_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    synth_small(&a, 9);
    synth_small(&b, 9);
    let sa = snapshot(&a);
    let sb = snapshot(&b);
    assert_eq!(sa.len(), sb.len());
    for ((pa, ba), (pb, bb)) in sa.iter().zip(sb.iter()) {
        assert_eq!(pa, pb);
        assert_eq!(ba, bb, "file {} differs between identical synth runs", pa.display());
    }
}
