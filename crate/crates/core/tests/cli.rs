use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scandoc(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scandoc"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_train_report_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(&scandoc(d, &["synth", "--out", "corpus", "--n-reports", "30", "--seed", "2"]));
    fs::write(
        d.join("exp.json"),
        r#"{"model": {"type": "classical", "spec": {"kind": "NaiveBayes"}},
            "paths": {"manifest": "corpus/manifest.jsonl", "workdir": "work"}}"#,
    )
    .unwrap();
    let out = stdout(&scandoc(d, &["train", "--config", "exp.json", "--seed", "4"]));
    assert!(out.contains("Document accuracy"), "{out}");
    let run = fs::read_dir(d.join("work/runs")).unwrap().next().unwrap().unwrap().path();
    let report = stdout(&scandoc(d, &["report", "--dir", run.to_str().unwrap()]));
    assert!(report.contains("AUROC"));
    let eval = stdout(&scandoc(d, &["evaluate", "--run", run.to_str().unwrap(), "--level", "0.9"]));
    assert!(eval.starts_with("Class"));

    let seg = stdout(&scandoc(
        d,
        &[
            "segment",
            "--input",
            "corpus/pages/rpt00001/page_1.tsv",
            "--output",
            "inst.csv",
            "--report-id",
            "rpt00001",
        ],
    ));
    assert!(seg.contains("instances"));
    assert!(fs::read_to_string(d.join("inst.csv")).unwrap().starts_with("report_id,"));
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"model": {"type": "classical", "spec": {"kind": "LR"}}, "paths": {"manifest": "m"}, "extra": 1}"#).unwrap();
    let o = scandoc(dir.path(), &["train", "--config", "bad.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));
    let o = scandoc(dir.path(), &["train"]);
    assert!(!o.status.success());
}

#[test]
fn preprocess_writes_image() {
    let dir = tempfile::tempdir().unwrap();
    let img = scandoc::image_prep::GrayImage::filled(8, 8, 200);
    img.save(&dir.path().join("in.png")).unwrap();
    stdout(&scandoc(dir.path(), &["preprocess", "--input", "in.png", "--output", "out.pgm", "--recipe", "gray_de_c60"]));
    let out = scandoc::image_prep::GrayImage::load(&dir.path().join("out.pgm")).unwrap();
    assert_eq!((out.width(), out.height()), (8, 8));
}
