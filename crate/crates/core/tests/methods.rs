use ssbench::datagen::{gen_synthetic, split, Dataset, GenSpec, SplitBundle};
use ssbench::methods::{
    evaluate, fit, fit_ipw_from_propensities, predict, read_predictions_csv, score_predictions,
    write_predictions_csv, FitConfig, MethodKind, Prediction, TuningGrid,
};
use ssbench::metrics::{auc, CellConfig};
use ssbench::nn::HyperParams;
use ssbench::Error;

fn bundle(n: usize, d: usize, flip: f64, seed: u64) -> SplitBundle {
    let ds = gen_synthetic(&GenSpec {
        n_total: n,
        n_features: d,
        event_rate: 0.3,
        nonselect_rate: 0.2,
        flip_rate: flip,
        seed,
    })
    .unwrap();
    split(&ds, seed ^ 0xabc).unwrap()
}

fn quick() -> (HyperParams, FitConfig) {
    let hp = HyperParams {
        max_epochs: 40,
        ..HyperParams::default()
    }
    .with_seed(3);
    let cfg = FitConfig {
        grid: TuningGrid::single(vec![16], vec![8], 0.005),
        ..FitConfig::default()
    };
    (hp, cfg)
}

fn config() -> CellConfig {
    CellConfig {
        dataset: "synthetic".into(),
        n_total: 0,
        event_rate: 0.3,
        nonselect_rate: 0.2,
        seed_index: 0,
        hparams: String::new(),
    }
}

#[test]
fn oracle_and_naive_share_weights() {
    let b = bundle(800, 4, 0.01, 1);
    let (hp, cfg) = quick();
    let o = fit(MethodKind::Oracle, &b.train, &b.val, &hp, &cfg).unwrap();
    let n = fit(MethodKind::Naive, &b.train, &b.val, &hp, &cfg).unwrap();
    let t = fit(MethodKind::TNet, &b.train, &b.val, &hp, &cfg).unwrap();
    assert_eq!(o.risk_model.network.params(), n.risk_model.network.params());
    assert_eq!(o.risk_model.network.params(), t.risk_model.network.params());

    let ro = evaluate(&o, &b.test, config()).unwrap();
    let rn = evaluate(&n, &b.test, config()).unwrap();
    assert!(ro.auc_nonselected.is_none());
    assert!(rn.auc_nonselected.is_some());
    assert_eq!(ro.auc_overall, ro.auc_selected);
    assert_eq!(rn.auc_selected, ro.auc_selected);
}

#[test]
fn separable_selection_is_identified() {
    let b = bundle(3000, 3, 0.0, 4);
    let hp = HyperParams::default().with_seed(9);
    let cfg = FitConfig {
        grid: TuningGrid::single(vec![100], vec![50], 0.0005),
        ..FitConfig::default()
    };
    let fm = fit(MethodKind::TNet, &b.train, &b.val, &hp, &cfg).unwrap();
    let sel = fm.selection_scores(b.val.x.view()).unwrap().unwrap();
    let a = auc(sel.as_slice().unwrap(), &b.val.s).unwrap();
    assert!(a >= 0.99, "validation identification AUC {a}");
}

#[test]
fn deferral_follows_threshold() {
    let b = bundle(800, 4, 0.01, 2);
    let (hp, cfg) = quick();
    let fm = fit(MethodKind::TNet, &b.train, &b.val, &hp, &cfg).unwrap();
    let preds = predict(&fm, b.test.x.view()).unwrap();
    for p in &preds {
        let sel = p.selection_score.unwrap();
        assert_eq!(p.deferred, sel < 0.5);
        assert!(p.score > 0.0 && p.score < 1.0);
    }
    let mut previous: Option<Vec<bool>> = None;
    for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let d: Vec<bool> = predict(&fm.clone().with_deferral_threshold(t), b.test.x.view())
            .unwrap()
            .iter()
            .map(|p| p.deferred)
            .collect();
        if let Some(prev) = &previous {
            assert!(prev.iter().zip(&d).all(|(a, b)| !a || *b), "deferred set shrank at {t}");
        }
        previous = Some(d);
    }
    let everyone = fm.with_deferral_threshold(1.0 + 1e-9);
    let r = evaluate(&everyone, &b.test, config()).unwrap();
    assert_eq!(r.auc_overall, None);
    assert_eq!(r.deferral_rate, 1.0);
}

#[test]
fn non_identification_methods_never_defer() {
    let b = bundle(600, 3, 0.01, 5);
    let (hp, cfg) = quick();
    for kind in [MethodKind::Naive, MethodKind::MtNaive, MethodKind::Dann, MethodKind::Kliep] {
        let fm = fit(kind, &b.train, &b.val, &hp, &cfg).unwrap();
        let preds = predict(&fm, b.test.x.view()).unwrap();
        assert!(preds.iter().all(|p| !p.deferred), "{kind}");
        assert_eq!(preds[0].selection_score.is_some(), kind.has_selection_score(), "{kind}");
    }
}

#[test]
fn constant_propensity_ipw_equals_naive() {
    let b = bundle(800, 4, 0.01, 6);
    let (hp, cfg) = quick();
    let naive = fit(MethodKind::Naive, &b.train, &b.val, &hp, &cfg).unwrap();
    let n_sel = b.train.selected_indices().len();
    for p in [0.8, 0.37] {
        let ipw = fit_ipw_from_propensities(&b.train, &b.val, &hp, &cfg, &vec![p; n_sel]).unwrap();
        assert!(ipw.weights.as_ref().unwrap().w.iter().all(|&w| w == 1.0));
        assert_eq!(ipw.risk_model.network.params(), naive.risk_model.network.params());
    }
}

#[test]
fn evaluate_matches_exported_predictions() {
    let b = bundle(700, 3, 0.01, 7);
    let (hp, cfg) = quick();
    for kind in MethodKind::ALL {
        let fm = fit(kind, &b.train, &b.val, &hp, &cfg).unwrap();
        let reported = evaluate(&fm, &b.test, config()).unwrap();
        let preds = predict(&fm, b.test.x.view()).unwrap();
        let mut buf = Vec::new();
        write_predictions_csv(&preds, &b.test, &mut buf).unwrap();
        let rows = read_predictions_csv(buf.as_slice()).unwrap();
        let back: Vec<Prediction> = rows.iter().map(|r| r.prediction()).collect();
        assert_eq!(back, preds, "{kind}");
        let y: Vec<u8> = rows.iter().map(|r| r.y).collect();
        let s: Vec<u8> = rows.iter().map(|r| r.s).collect();
        let m = score_predictions(kind, &back, &y, &s).unwrap();
        assert_eq!(m.auc_overall, reported.auc_overall, "{kind}");
        assert_eq!(m.auc_selected, reported.auc_selected, "{kind}");
        assert_eq!(m.auc_nonselected, reported.auc_nonselected, "{kind}");
        assert_eq!(m.auc_identification, reported.auc_identification, "{kind}");
        assert_eq!(m.deferral_rate, reported.deferral_rate, "{kind}");
        assert_eq!(reported.config.hparams, fm.choices);
    }
}

#[test]
fn predictions_csv_layout() {
    let b = bundle(300, 2, 0.01, 8);
    let preds: Vec<Prediction> = (0..b.test.len())
        .map(|i| Prediction {
            score: 0.25,
            deferred: i == 0,
            selection_score: (i == 0).then_some(0.125),
        })
        .collect();
    let mut buf = Vec::new();
    write_predictions_csv(&preds, &b.test, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row_id,score,selection_score,deferred,y,s"));
    let first = lines.next().unwrap();
    assert!(first.ends_with(&format!(",0.25,0.125,true,{},{}", b.test.y[0], b.test.s[0])), "{first}");
    assert!(lines.next().unwrap().contains(",0.25,,false,"));
}

fn strip(ds: &Dataset, keep_s: u8) -> Dataset {
    let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.s[i] == keep_s).collect();
    ds.subset(&idx)
}

#[test]
fn missing_strata_name_the_method() {
    let b = bundle(600, 3, 0.01, 9);
    let (hp, cfg) = quick();
    let only_selected = strip(&b.train, 1);
    match fit(MethodKind::TNet, &only_selected, &b.val, &hp, &cfg) {
        Err(Error::MissingStratum { method, .. }) => assert_eq!(method, "tnet"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(fit(MethodKind::Naive, &only_selected, &b.val, &hp, &cfg).is_ok());
    let only_nonselected = strip(&b.train, 0);
    assert!(matches!(
        fit(MethodKind::Naive, &only_nonselected, &b.val, &hp, &cfg),
        Err(Error::MissingStratum { .. })
    ));
}

#[test]
fn predict_checks_feature_count() {
    let b = bundle(400, 3, 0.01, 10);
    let (hp, cfg) = quick();
    let fm = fit(MethodKind::Naive, &b.train, &b.val, &hp, &cfg).unwrap();
    let wrong = ndarray::Array2::<f64>::zeros((4, 5));
    assert!(matches!(predict(&fm, wrong.view()), Err(Error::DimensionMismatch { .. })));
}
