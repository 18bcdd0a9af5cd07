use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ssb-bench"));
    c.env_remove("SSB_BENCH_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn sweep_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("sweep.json");
    let text = format!(
        r#"{{
  "dataset": {{"kind": "synthetic", "n_features": 3}},
  "sizes": [300],
  "event_rates": [0.2, 0.3],
  "nonselect_rates": [0.2],
  "methods": ["oracle", "naive"],
  "num_seeds": 2,
  "training": {{"max_epochs": 10}},
  "fit": {{"grid": {{"hidden": [[8]], "head": [[4]], "learning_rates": [0.01]}}}},
  "output_dir": "{}"{extra}
}}"#,
        dir.join("out").display()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn generate_writes_dataset_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data.csv");
    let o = run(&["generate", "--n-total", "200", "--features", "3", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("feature_0,feature_1,feature_2,y,s\n"));
    assert_eq!(text.lines().count(), 201);
    assert!(dir.path().join("data.csv.provenance.json").exists());

    let bad = run(&["generate", "--event-rate", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn sweep_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(dir.path(), "");
    let o = bin().args(["sweep", "--config", cfg.to_str().unwrap()]).env("SSB_BENCH_THREADS", "2").output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("8 cells, 2 workers"));
    let results = dir.path().join("out/results.csv");
    let first = fs::read(&results).unwrap();
    assert!(String::from_utf8_lossy(&first).starts_with("# ssbench cell results v1\n"));

    let again = run(&["sweep", "--config", cfg.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code(&again), 0);
    assert_eq!(fs::read(&results).unwrap(), first);

    let resumed = run(&["sweep", "--config", cfg.to_str().unwrap(), "--resume"]);
    assert_eq!(code(&resumed), 0);
    assert!(String::from_utf8_lossy(&resumed.stderr).contains("ran 0 cells"));

    let svg = dir.path().join("heat.svg");
    let p = run(&[
        "plot", "--results", results.to_str().unwrap(), "--kind", "heatmap", "--method", "naive", "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&p), 0, "{}", String::from_utf8_lossy(&p.stderr));
    assert_eq!(fs::read_to_string(&svg).unwrap().matches("class=\"cell\"").count(), 2);
    for kind in ["box", "line-by-size", "subpop-bars"] {
        let out = dir.path().join(format!("{kind}.svg"));
        let p = run(&["plot", "--results", results.to_str().unwrap(), "--kind", kind, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&p), 0, "{kind}");
        assert!(fs::read_to_string(&out).unwrap().starts_with("<svg"));
    }

    let unknown = run(&[
        "plot", "--results", results.to_str().unwrap(), "--kind", "heatmap", "--method", "kmm", "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&unknown), 2);
    let bad_metric = run(&[
        "plot", "--results", results.to_str().unwrap(), "--kind", "box", "--metric", "f1", "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad_metric), 2);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(dir.path(), r#", "unknown_key": true"#);
    assert_eq!(code(&run(&["sweep", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["sweep", "--config", "/nonexistent.json"])), 2);
    let good = sweep_config(dir.path(), "");
    let o = bin().args(["sweep", "--config", good.to_str().unwrap()]).env("SSB_BENCH_THREADS", "lots").output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&["run", "--method", "bogus"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn partial_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort.csv");
    let mut text = String::from("a,b,outcome\n");
    for i in 0..300 {
        let y = u8::from(i % 4 == 0);
        text += &format!("{},{},{y}\n", (i % 13) as f64 * 0.2 + f64::from(y), (i % 7) as f64);
    }
    fs::write(&cohort, text).unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"dataset": {{"kind": "csv", "path": "{}", "outcome_column": "outcome"}},
                "sizes": [150, 50000], "event_rates": [0.25], "nonselect_rates": [0.2], "methods": ["naive"],
                "num_seeds": 1, "training": {{"max_epochs": 5}},
                "fit": {{"grid": {{"hidden": [[4]], "head": [[4]], "learning_rates": [0.01]}}}},
                "output_dir": "{}"}}"#,
            cohort.display(),
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"failed\""));
    assert!(manifest.contains("\"stage\": \"data\""));
}

#[test]
fn run_single_cell_with_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cell = dir.path().join("cell.json");
    fs::write(
        &cell,
        r#"{"dataset_id": "synthetic", "dataset": {"kind": "synthetic", "n_features": 3}, "n_total": 400,
            "event_rate": 0.2, "nonselect_rate": 0.2, "method": "tnet", "training": {"max_epochs": 10},
            "fit": {"grid": {"hidden": [[8]], "head": [[4]], "learning_rates": [0.01]}}}"#,
    )
    .unwrap();
    let preds = dir.path().join("preds.csv");
    let o = run(&["run", "--config", cell.to_str().unwrap(), "--predictions", preds.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("# ssbench cell results v1"));
    assert!(lines.next().unwrap().starts_with("dataset,n_total,event_rate"));
    assert!(lines.next().unwrap().contains(",tnet,"));
    let p = fs::read_to_string(&preds).unwrap();
    assert!(p.starts_with("row_id,score,selection_score,deferred,y,s\n"));
    assert_eq!(p.lines().count(), 1 + 80);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let load = |name: &str| ssbench::bench::SweepConfig::load(dir.join(name)).unwrap();
    assert_eq!(load("synthetic-full.json").cells().len(), 12_500);
    assert_eq!(load("headline.json").cells().len(), 60);
    assert_eq!(load("cohort-csv.json").dataset_label(), "cohort");
}
