use std::path::Path;
use std::process::{Command, Output};

fn sfdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfdm"))
        .args(args)
        .env("SFDM_THREADS", "1")
        .output()
        .expect("spawn sfdm")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn gen_heat(dir: &Path) {
    let out = sfdm(&[
        "gen-data",
        "--kind",
        "heat2d",
        "--resolution",
        "8",
        "--count",
        "10",
        "--seed",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn heat_config(dir: &Path) -> String {
    let manifest = dir.join("dataset.json");
    write_config(
        dir,
        &format!(
            r#"{{"datamodule":{{"manifest":{:?}}},
                "model":{{"wiring":"t1","transform":"dft","depth":2,"width":4,"modes":3}},
                "train":{{"epochs":3,"batch_size":4,"learning_rate":0.01,"seed":1}}}}"#,
            manifest.to_str().unwrap()
        ),
    )
}

#[test]
fn help_lists_every_subcommand() {
    let out = sfdm(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "gen-data",
        "train",
        "eval",
        "analyze-modes",
        "check-init",
        "bench",
        "verify",
    ] {
        assert!(text.contains(sub), "missing {sub}");
    }
}

#[test]
fn invalid_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = sfdm(&[
        "gen-data",
        "--kind",
        "heat2d",
        "--resolution",
        "0",
        "--count",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);

    let cfg = write_config(dir.path(), r#"{"model":{"wiring":"t1"},"surprise":1}"#);
    assert_eq!(code(&sfdm(&["train", "--config", &cfg])), 1);

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_sfdm"))
        .args(["verify"])
        .env("SFDM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&bad_threads), 1);
}

#[test]
fn unreadable_files_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&sfdm(&["train", "--config", missing.to_str().unwrap()])),
        3
    );

    gen_heat(dir.path());
    std::fs::write(dir.path().join("dataset.sfds"), b"SFDS").unwrap();
    let out = sfdm(&[
        "analyze-modes",
        "--data",
        dir.path().join("dataset.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn injected_faults_fail_verification_with_two() {
    assert_eq!(code(&sfdm(&["verify", "--inject", "unnormalized-dft"])), 2);
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    gen_heat(dir.path());
    let cfg = heat_config(dir.path());
    let run = dir.path().join("run");
    let out = sfdm(&["train", "--config", &cfg, "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "checkpoint.sfdm",
        "learning_curve.csv",
        "timing.csv",
        "report.json",
        "config.json",
        "provenance.json",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let curve = std::fs::read_to_string(run.join("learning_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 3);

    let prov: serde_json::Value =
        serde_json::from_slice(&std::fs::read(run.join("provenance.json")).unwrap()).unwrap();
    let files = prov["files"].as_object().unwrap();
    assert!(files.contains_key("checkpoint.sfdm") && !files.contains_key("timing.csv"));

    let out = sfdm(&[
        "eval",
        "--checkpoint",
        run.join("checkpoint.sfdm").to_str().unwrap(),
        "--data",
        dir.path().join("dataset.json").to_str().unwrap(),
        "--config",
        &cfg,
        "--split",
        "all",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let nmse = report["nmse"].as_f64().unwrap();
    assert!(nmse.is_finite() && nmse >= 0.0);
}

#[test]
fn analyze_modes_writes_both_families() {
    let dir = tempfile::tempdir().unwrap();
    gen_heat(dir.path());
    let out = sfdm(&[
        "analyze-modes",
        "--data",
        dir.path().join("dataset.json").to_str().unwrap(),
        "--m-values",
        "1,2,4",
        "--split",
        "all",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("m,selector_family,nspace_nmse,R_o_l1,R_o_l2")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    assert!(
        rows.iter().any(|r| r.contains(",lowpass,")) && rows.iter().any(|r| r.contains(",topk,"))
    );
}
