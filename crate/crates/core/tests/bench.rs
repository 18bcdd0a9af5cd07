use std::fs;

use ssbench::bench::{
    config_hash, load_manifest, render_heatmap, render_summary, resolve_parallelism, run_cell, sweep, CellSpec,
    CellStatus, DatasetSource, HeatmapValue, SummaryKind, SweepConfig, TrainingConfig, MANIFEST_FILE,
    RESULTS_FILE, THREADS_ENV,
};
use ssbench::methods::{FitConfig, MethodKind, TuningGrid};
use ssbench::metrics::{read_cells_csv, CellResult, Metric, MetricStats};
use ssbench::Error;

fn fast_fit() -> FitConfig {
    FitConfig {
        grid: TuningGrid::single(vec![8], vec![4], 0.01),
        ..FitConfig::default()
    }
}

fn fast_training() -> TrainingConfig {
    TrainingConfig {
        max_epochs: 15,
        ..TrainingConfig::default()
    }
}

fn small_sweep(dir: &std::path::Path) -> SweepConfig {
    SweepConfig {
        dataset: DatasetSource::Synthetic {
            n_features: 4,
            flip_rate: 0.01,
        },
        dataset_id: None,
        sizes: vec![300],
        event_rates: vec![0.2, 0.3],
        nonselect_rates: vec![0.2],
        methods: vec![MethodKind::Naive, MethodKind::Oracle, MethodKind::TNet],
        seeds: None,
        num_seeds: 2,
        base_seed: 17,
        training: fast_training(),
        fit: fast_fit(),
        output_dir: dir.to_path_buf(),
        parallelism: None,
    }
}

fn cell(method: MethodKind) -> CellSpec {
    CellSpec {
        dataset_id: "synthetic".into(),
        dataset: DatasetSource::default(),
        n_total: 1000,
        event_rate: 0.1,
        nonselect_rate: 0.1,
        method,
        seed_index: 0,
        base_seed: 0,
        training: TrainingConfig {
            max_epochs: 60,
            ..TrainingConfig::default()
        },
        fit: FitConfig {
            grid: TuningGrid::single(vec![50], vec![50], 0.0005),
            ..FitConfig::default()
        },
    }
}

#[test]
fn naive_cell_has_every_slice() {
    let r = run_cell(&cell(MethodKind::Naive)).unwrap();
    assert!(r.auc_overall.is_some());
    assert!(r.auc_selected.is_some());
    assert!(r.auc_nonselected.is_some());
    assert_eq!(r.method, MethodKind::Naive);
    assert_eq!(r.config.n_total, 1000);
    let again = run_cell(&cell(MethodKind::Naive)).unwrap();
    assert_eq!(CellResult { wall_time: 0.0, ..r }, CellResult { wall_time: 0.0, ..again });
}

#[test]
fn oracle_cell_has_no_nonselected_slice() {
    let r = run_cell(&cell(MethodKind::Oracle)).unwrap();
    assert!(r.auc_nonselected.is_none());
    assert!(r.auc_overall.is_some());
}

#[test]
fn bad_cell_reports_stage() {
    let mut c = cell(MethodKind::Naive);
    c.event_rate = 1.5;
    assert_eq!(run_cell(&c).unwrap_err().stage, "config");
    let mut c = cell(MethodKind::Naive);
    c.dataset = DatasetSource::Csv {
        path: "/nonexistent/cohort.csv".into(),
        outcome_column: "y".into(),
    };
    assert_eq!(run_cell(&c).unwrap_err().stage, "data");
}

#[test]
fn full_synthetic_grid_cell_count() {
    let cfg = SweepConfig {
        sizes: vec![1000, 2000, 3000, 4000, 5000],
        event_rates: vec![0.05, 0.1, 0.2, 0.3, 0.4],
        nonselect_rates: vec![0.05, 0.1, 0.2, 0.3, 0.4],
        methods: vec![MethodKind::Naive],
        num_seeds: 10,
        ..small_sweep(std::path::Path::new("unused"))
    };
    assert_eq!(cfg.cells().len(), 1250);
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = sweep(&small_sweep(a.path()), 1, false).unwrap();
    let out_b = sweep(&small_sweep(b.path()), 4, false).unwrap();
    assert_eq!(out_a.total, 12);
    assert_eq!(out_a.done, 12);
    assert_eq!(out_b.failed, 0);
    let ca = fs::read(a.path().join(RESULTS_FILE)).unwrap();
    let cb = fs::read(b.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(
        fs::read(a.path().join("aggregate.csv")).unwrap(),
        fs::read(b.path().join("aggregate.csv")).unwrap()
    );

    let cells = read_cells_csv(ca.as_slice()).unwrap();
    assert_eq!(cells.len(), 12);
    let m = load_manifest(a.path().join(MANIFEST_FILE)).unwrap();
    assert!(m.finished);
    assert_eq!(m.count(CellStatus::Pending), 0);
    assert_eq!(m.config_hash, config_hash(&small_sweep(a.path())));
    // same grid point, same seed: oracle, naive and tnet share the risk network
    let key = |c: &CellResult| (c.config.event_rate.to_bits(), c.config.seed_index);
    for o in cells.iter().filter(|c| c.method == MethodKind::Oracle) {
        let n = cells.iter().find(|c| c.method == MethodKind::Naive && key(c) == key(o)).unwrap();
        assert_eq!(o.auc_selected, n.auc_selected);
    }
}

#[test]
fn resume_reruns_only_unfinished_cells() {
    let clean = tempfile::tempdir().unwrap();
    sweep(&small_sweep(clean.path()), 2, false).unwrap();
    let reference = fs::read(clean.path().join(RESULTS_FILE)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_sweep(dir.path());
    sweep(&cfg, 2, false).unwrap();
    // simulate an interrupted run: three cells never finished
    let path = dir.path().join(MANIFEST_FILE);
    let mut m = load_manifest(&path).unwrap();
    for rec in m.cells.iter_mut().step_by(4) {
        rec.status = CellStatus::Pending;
        rec.result = None;
    }
    m.finished = false;
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    fs::remove_file(dir.path().join(RESULTS_FILE)).unwrap();

    let out = sweep(&cfg, 3, true).unwrap();
    assert_eq!(out.ran, 3);
    assert_eq!(out.done, 12);
    assert_eq!(fs::read(dir.path().join(RESULTS_FILE)).unwrap(), reference);

    let mut other = cfg.clone();
    other.base_seed += 1;
    assert!(matches!(sweep(&other, 1, true), Err(Error::Config(_))));
}

#[test]
fn failed_cells_are_listed_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("cohort.csv");
    let mut text = String::from("a,b,outcome\n");
    for i in 0..400 {
        let y = u8::from(i % 3 == 0);
        text += &format!("{},{},{}\n", (i % 17) as f64 * 0.3 + y as f64, (i % 5) as f64, y);
    }
    fs::write(&src, text).unwrap();
    let mut cfg = small_sweep(&dir.path().join("out"));
    cfg.dataset = DatasetSource::Csv {
        path: src.to_string_lossy().into_owned(),
        outcome_column: "outcome".into(),
    };
    cfg.sizes = vec![200, 100_000];
    cfg.event_rates = vec![0.3];
    cfg.methods = vec![MethodKind::Naive];
    let out = sweep(&cfg, 2, false).unwrap();
    assert_eq!(out.total, 4);
    assert_eq!(out.done, 2);
    assert_eq!(out.failed, 2);
    let m = load_manifest(cfg.output_dir.join(MANIFEST_FILE)).unwrap();
    for rec in m.cells.iter().filter(|c| c.status == CellStatus::Failed) {
        assert_eq!(rec.key.n_total, 100_000);
        assert_eq!(rec.stage.as_deref(), Some("data"));
        assert!(!rec.error.as_deref().unwrap().is_empty());
    }
    let cells = read_cells_csv(fs::read(cfg.output_dir.join(RESULTS_FILE)).unwrap().as_slice()).unwrap();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|c| c.config.dataset == "cohort"));
}

#[test]
fn config_errors() {
    let bad = [
        r#"{"sizes": [], "event_rates": [0.1], "nonselect_rates": [0.1], "methods": ["naive"]}"#,
        r#"{"sizes": [100], "event_rates": [0.1], "nonselect_rates": [0.1], "methods": ["bogus"]}"#,
        r#"{"sizes": [100], "event_rates": [1.2], "nonselect_rates": [0.1], "methods": ["naive"]}"#,
        r#"{"sizes": [100], "event_rates": [0.1], "nonselect_rates": [0.1], "methods": ["naive"], "typo": 1}"#,
        r#"{"sizes": [100], "event_rates": [0.1], "nonselect_rates": [0.1], "methods": ["naive"], "parallelism": 0}"#,
        "not json",
    ];
    for text in bad {
        assert!(matches!(SweepConfig::from_json(text), Err(Error::Config(_))), "{text}");
    }
    let ok = SweepConfig::from_json(
        r#"{"sizes": [1000], "event_rates": [0.1, 0.2], "nonselect_rates": [0.1], "methods": ["oracle", "tnet"],
            "fit": {"grid": {"hidden": [[50]], "head": [[50]], "learning_rates": [0.0005]}}}"#,
    )
    .unwrap();
    assert_eq!(ok.cells().len(), 2 * 2 * 10);
    assert_eq!(ok.fit.dann_lambda, 1.0);
    assert_eq!(ok.training.max_epochs, 1000);
}

#[test]
fn thread_resolution() {
    assert_eq!(resolve_parallelism(Some(3), Some(5)).unwrap(), 3);
    std::env::set_var(THREADS_ENV, "6");
    assert_eq!(resolve_parallelism(None, Some(5)).unwrap(), 6);
    std::env::set_var(THREADS_ENV, "zero");
    assert!(matches!(resolve_parallelism(None, None), Err(Error::Config(_))));
    std::env::remove_var(THREADS_ENV);
    assert_eq!(resolve_parallelism(None, Some(5)).unwrap(), 5);
    assert!(resolve_parallelism(Some(0), None).is_err());
}

fn fake(method: MethodKind, n: usize, e: f64, ns: f64, seed: u32, overall: Option<f64>) -> CellResult {
    CellResult {
        method,
        config: ssbench::metrics::CellConfig {
            dataset: "synthetic".into(),
            n_total: n,
            event_rate: e,
            nonselect_rate: ns,
            seed_index: seed,
            hparams: String::new(),
        },
        auc_overall: overall,
        auc_selected: overall.map(|v| (v + 0.05f64).min(1.0)),
        auc_nonselected: if method == MethodKind::Oracle { None } else { overall.map(|v| v / 2.0) },
        auc_identification: None,
        deferral_rate: 0.0,
        wall_time: 0.0,
    }
}

fn attr(fragment: &str, name: &str) -> Option<f64> {
    let key = format!("{name}=\"");
    let start = fragment.find(&key)? + key.len();
    let end = fragment[start..].find('"')? + start;
    fragment[start..end].parse().ok()
}

fn text_of(fragment: &str) -> &str {
    let start = fragment.find("<text").unwrap();
    let open = fragment[start..].find('>').unwrap() + start + 1;
    let close = fragment[open..].find("</text>").unwrap() + open;
    &fragment[open..close]
}

#[test]
fn heatmap_numbers_match_recomputed_deltas() {
    let rates = [0.05, 0.1, 0.2, 0.3, 0.4];
    let mut cells = Vec::new();
    for (i, &e) in rates.iter().enumerate() {
        for (j, &ns) in rates.iter().enumerate() {
            for seed in 0..3u32 {
                for n in [1000, 2000] {
                    let base = 0.9 - 0.01 * (i + j) as f64 + 0.001 * seed as f64;
                    cells.push(fake(MethodKind::Oracle, n, e, ns, seed, Some(base)));
                    cells.push(fake(MethodKind::Naive, n, e, ns, seed, Some(base - 0.02 * j as f64 - 0.0001 * n as f64 / 1000.0)));
                }
            }
        }
    }
    // round trip through the CSV so the check recomputes from exported data
    let mut buf = Vec::new();
    ssbench::metrics::write_cells_csv(&cells, &mut buf).unwrap();
    let cells = read_cells_csv(buf.as_slice()).unwrap();

    let svg = render_heatmap(&cells, Metric::AucOverall, MethodKind::Naive, HeatmapValue::DeltaFromOracle).unwrap();
    let groups: Vec<&str> = svg.split("<g class=\"cell\"").skip(1).collect();
    assert_eq!(groups.len(), 25);
    for g in groups {
        let e = attr(g, "data-event-rate").unwrap();
        let ns = attr(g, "data-nonselect-rate").unwrap();
        let mean_of = |m: MethodKind| {
            let v: Vec<f64> = cells
                .iter()
                .filter(|c| c.method == m && c.config.event_rate == e && c.config.nonselect_rate == ns)
                .filter_map(|c| c.auc_overall)
                .collect();
            MetricStats::from_values(&v).mean.unwrap()
        };
        let expected = mean_of(MethodKind::Oracle) - mean_of(MethodKind::Naive);
        let shown = text_of(g);
        assert_eq!(shown, format!("{expected:.3}").replace("-0.000", "0.000"), "{g}");
    }

    let oracle = render_heatmap(&cells, Metric::AucOverall, MethodKind::Oracle, HeatmapValue::DeltaFromOracle).unwrap();
    assert_eq!(oracle.matches(">0.000</text></g>").count(), 25);
    assert!(matches!(
        render_heatmap(&cells, Metric::AucOverall, MethodKind::Kmm, HeatmapValue::DeltaFromOracle),
        Err(Error::Usage(_))
    ));
}

#[test]
fn summary_plots() {
    let one = vec![fake(MethodKind::Naive, 1000, 0.1, 0.1, 0, Some(0.8))];
    let svg = render_summary(&one, SummaryKind::Box).unwrap();
    let b = svg.split("<g class=\"box\"").nth(1).unwrap();
    for name in ["data-min", "data-q1", "data-median", "data-q3", "data-max"] {
        assert_eq!(attr(b, name), Some(0.8), "{name}");
    }

    let flat: Vec<CellResult> = (0..3)
        .flat_map(|s| [1000, 2000].map(|n| fake(MethodKind::Naive, n, 0.1, 0.1, s, Some(0.75))))
        .collect();
    let svg = render_summary(&flat, SummaryKind::LineBySize).unwrap();
    let points: Vec<&str> = svg.split("<g class=\"point\"").skip(1).collect();
    assert_eq!(points.len(), 2);
    for p in points {
        assert_eq!(attr(p, "data-std"), Some(0.0));
        assert_eq!(attr(p, "data-mean"), Some(0.75));
    }

    let mixed = vec![
        fake(MethodKind::Oracle, 1000, 0.1, 0.1, 0, Some(0.9)),
        fake(MethodKind::Kmm, 1000, 0.1, 0.1, 0, Some(0.7)),
    ];
    let svg = render_summary(&mixed, SummaryKind::SubpopBars).unwrap();
    let groups: Vec<&str> = svg.split("<g class=\"group\"").skip(1).collect();
    assert!(groups[0].contains("data-method=\"oracle\""));
    assert!(!groups[0].contains("data-slice=\"non-selected\""));
    assert!(groups[1].contains("data-slice=\"non-selected\""));
    assert!(render_summary(&[], SummaryKind::Box).is_err());
}
