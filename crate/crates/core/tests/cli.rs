//! Runs the `outerloop` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn outerloop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outerloop")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout_lines(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stdout).lines().map(|l| serde_json::from_str(l).expect("valid JSON line")).collect()
}

fn check_record(rec: &Value, seed: u64) {
    assert_eq!(rec["seed"].as_u64(), Some(seed));
    assert!(rec["iter"].as_u64().unwrap() >= 1);
    assert!(rec["x"].as_array().unwrap().iter().all(Value::is_f64));
    assert!(rec["y"].as_array().unwrap().iter().all(Value::is_f64));
    assert!(rec["best"].is_f64() || rec["best"].is_null());
    assert!(rec["acq"].is_f64() || rec["acq"].is_null());
}

#[test]
fn branin_runs_on_both_backends() {
    let dir = tempfile::tempdir().unwrap();
    for backend in ["gp", "blr"] {
        let o = outerloop(
            dir.path(),
            &["run", "--task", "branin", "--method", "bo", "--backend", backend, "--acquisition", "ei", "--iters", "20", "--seed", "7", "--out", "-"],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let lines = stdout_lines(&o);
        assert_eq!(lines.len(), 21);
        for (k, rec) in lines[..20].iter().enumerate() {
            check_record(rec, 7);
            assert_eq!(rec["iter"].as_u64(), Some(k as u64 + 1));
            assert_eq!(rec["x"].as_array().unwrap().len(), 2);
        }
        let bests: Vec<f64> = lines[..20].iter().map(|r| r["best"].as_f64().unwrap()).collect();
        assert!(bests.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(lines[20]["summary"]["backend"], backend);
    }
}

#[test]
fn seir_summary_reports_both_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let o = outerloop(dir.path(), &["run", "--task", "seir-peak", "--method", "bq", "--iters", "15", "--seed", "1", "--out", "-"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout_lines(&o);
    let summary = &lines.last().unwrap()["summary"]["runs"][0];
    for q in ["height", "time"] {
        assert!(summary[q]["mean"].as_f64().unwrap() > 0.0);
        assert!(summary[q]["std"].as_f64().unwrap() >= 0.0);
        assert_eq!(lines.iter().filter(|l| l["quantity"] == q).count(), 15);
    }
}

#[test]
fn default_output_file_is_named_by_config_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--task", "quadratic", "--iters", "3", "--seed", "2"];
    assert!(outerloop(dir.path(), &args).status.success());
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let name = files[0].file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("outerloop-run-") && name.ends_with(".jsonl"), "{name}");
    let first = std::fs::read(&files[0]).unwrap();
    assert!(outerloop(dir.path(), &args).status.success());
    assert_eq!(std::fs::read(&files[0]).unwrap(), first);

    // a different configuration lands in a different file
    assert!(outerloop(dir.path(), &["run", "--task", "quadratic", "--iters", "4", "--seed", "2"]).status.success());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn benchmark_writes_the_cross_product() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let o = outerloop(
        dir.path(),
        &[
            "benchmark", "--task", "branin", "--acquisition", "ei", "--acquisition", "random", "--iters", "4", "--seed", "1", "--seed", "2",
            "--seed", "3", "--out", out.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("task,method,backend,acquisition,seed,iters,best,wall_ms"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r.len(), 8);
        assert_eq!(r[0], "branin");
        assert!(r[6].parse::<f64>().unwrap().is_finite());
        r[7].parse::<u64>().unwrap();
    }
}

#[test]
fn sensitivity_reports_indices_with_error_bars() {
    let dir = tempfile::tempdir().unwrap();
    let o = outerloop(dir.path(), &["sensitivity", "--task", "linear-x1", "--n-base", "4096", "--seed", "3", "--out", "-"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = &stdout_lines(&o)[0];
    let s = report["first_order"].as_array().unwrap();
    assert!(s[1].as_f64().unwrap().abs() <= 0.05);
    assert!((s[0].as_f64().unwrap() - 1.0).abs() <= 0.05);
    assert_eq!(report["first_order_std"].as_array().unwrap().len(), s.len());
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"task": "forrester", "method": "ed", "acquisition": "ivr", "iters": 3, "seed": [5, 6], "out": "-"}"#).unwrap();
    let o = outerloop(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout_lines(&o);
    assert_eq!(lines.len(), 7);
    assert!(lines.last().unwrap()["summary"]["runs"][1]["rmse"].as_f64().is_some());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| outerloop(dir.path(), args).status.code();
    assert_eq!(code(&["run", "--task", "no-such-task", "--out", "-"]), Some(2));
    assert_eq!(code(&["sensitivity", "--task", "no-such-task", "--out", "-"]), Some(2));
    assert_eq!(code(&["run", "--task", "branin", "--iters", "many"]), Some(2));
    assert_eq!(code(&["run", "--task", "sin10", "--method", "bq", "--backend", "blr", "--out", "-"]), Some(3));
    assert_eq!(code(&["run", "--task", "forrester", "--method", "mf-demo", "--backend", "blr", "--out", "-"]), Some(3));
    std::fs::write(dir.path().join("c.json"), r#"{"task": "quadratic", "n-base": 8, "bogus": true}"#).unwrap();
    assert_eq!(code(&["sensitivity", "--config", "c.json", "--out", "-"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
}
