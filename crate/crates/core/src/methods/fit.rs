use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{mix_seed, MethodKind};
use crate::datagen::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::nn::{
    train_with, HeadSpec, HeadTargets, HyperParams, LabeledSet, MlpSpec, Monitor, TrainOptions,
    TrainedModel,
};
use crate::reweight::{self, ipw_weights, KernelConfig, WeightVector};

pub const DEFAULT_DEFERRAL_THRESHOLD: f64 = 0.5;

const SELECTION_TAG: u64 = 1;
const IMPUTED_TAG: u64 = 2;
const KERNEL_TAG: u64 = 3;

/// Architecture and learning-rate candidates; the one with the lowest validation risk loss wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningGrid {
    pub hidden: Vec<Vec<usize>>,
    /// Task-specific head layers, used only by shared-representation networks.
    pub head: Vec<Vec<usize>>,
    pub learning_rates: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        TuningGrid {
            hidden: vec![vec![50], vec![100], vec![100, 100]],
            head: vec![vec![50], vec![100]],
            learning_rates: vec![0.0001, 0.0005],
        }
    }
}

impl TuningGrid {
    pub fn single(hidden: Vec<usize>, head: Vec<usize>, learning_rate: f64) -> Self {
        TuningGrid {
            hidden: vec![hidden],
            head: vec![head],
            learning_rates: vec![learning_rate],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.head.is_empty() || self.learning_rates.is_empty() {
            return Err(Error::Config("tuning grid lists must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationMode {
    /// Imputed outcome is the auxiliary prediction thresholded at 0.5.
    #[default]
    Hard,
    /// Imputed outcome is the auxiliary probability itself.
    Soft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub grid: TuningGrid,
    pub dann_lambda: f64,
    /// Fraction of `max_epochs` over which the reversal strength ramps up.
    pub dann_warmup: f64,
    pub imputation: ImputationMode,
    pub kernel: KernelConfig,
    pub deferral_threshold: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            grid: TuningGrid::default(),
            dann_lambda: 1.0,
            dann_warmup: 0.1,
            imputation: ImputationMode::Hard,
            kernel: KernelConfig::default(),
            deferral_threshold: DEFAULT_DEFERRAL_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug)]
pub enum SelectionModel {
    /// An independent network whose only head predicts `s`.
    Separate(TrainedModel),
    /// A head of the shared risk network.
    SharedHead(usize),
}

#[derive(Clone, Debug)]
pub struct FittedMethod {
    pub kind: MethodKind,
    pub standardizer: Standardizer,
    pub risk_model: TrainedModel,
    pub risk_head: usize,
    /// Present for tnet, ipw (separate) and mtnet, mt_naive, dann (shared head).
    pub selection_model: Option<SelectionModel>,
    pub weights: Option<WeightVector>,
    pub deferral_threshold: f64,
    /// Tuned architecture and learning rate of every fitted network.
    pub choices: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub deferred: bool,
    pub selection_score: Option<f64>,
}

struct Candidate {
    hidden: Vec<usize>,
    head: Vec<usize>,
    learning_rate: f64,
}

fn describe(c: &Candidate, shared: bool) -> String {
    if shared {
        format!("{:?}+{:?}@{}", c.hidden, c.head, c.learning_rate)
    } else {
        format!("{:?}@{}", c.hidden, c.learning_rate)
    }
}

/// Trains every grid candidate from the same seed and keeps the one with the lowest validation
/// loss on head `score_head` at its best epoch. Ties keep the earlier candidate.
fn tune(
    grid: &TuningGrid,
    shared: bool,
    build: impl Fn(&Candidate) -> MlpSpec,
    train: &LabeledSet,
    val: &LabeledSet,
    hp: &HyperParams,
    opts: &TrainOptions,
    score_head: usize,
) -> Result<(TrainedModel, String)> {
    grid.validate()?;
    let heads: Vec<Vec<usize>> = if shared { grid.head.clone() } else { vec![Vec::new()] };
    let mut best: Option<(f64, TrainedModel, String)> = None;
    for hidden in &grid.hidden {
        for head in &heads {
            for &lr in &grid.learning_rates {
                let c = Candidate {
                    hidden: hidden.clone(),
                    head: head.clone(),
                    learning_rate: lr,
                };
                let model = train_with(&build(&c), train, val, &hp.clone().with_learning_rate(lr), opts)?;
                let score = model.history.val_head_loss[model.best_epoch.max(1) - 1][score_head];
                if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
                    best = Some((score, model, describe(&c, shared)));
                }
            }
        }
    }
    let (_, model, choice) = best.expect("grid is nonempty");
    Ok((model, choice))
}

struct Prepared {
    std: Standardizer,
    x: Array2<f64>,
    y: Array1<f64>,
    s: Array1<f64>,
    sel: Vec<usize>,
    x_val: Array2<f64>,
    y_val: Array1<f64>,
    s_val: Array1<f64>,
    sel_val: Vec<usize>,
}

impl Prepared {
    fn new(kind: MethodKind, train: &Dataset, val: &Dataset) -> Result<Self> {
        if train.n_features() != val.n_features() {
            return Err(Error::DimensionMismatch {
                expected: train.n_features(),
                actual: val.n_features(),
            });
        }
        let missing = |stratum: &str| Error::MissingStratum {
            method: kind.name().to_string(),
            stratum: stratum.to_string(),
        };
        let sel = train.selected_indices();
        if sel.is_empty() {
            return Err(missing("selected training rows"));
        }
        if kind.needs_nonselected() && sel.len() == train.len() {
            return Err(missing("non-selected training rows"));
        }
        let sel_val = val.selected_indices();
        if sel_val.is_empty() {
            return Err(missing("selected validation rows"));
        }
        if kind.needs_nonselected() && sel_val.len() == val.len() {
            return Err(missing("non-selected validation rows"));
        }
        let std = Standardizer::fit(&train.x);
        Ok(Prepared {
            x: std.apply(&train.x)?,
            y: train.y_f64(),
            s: train.s_f64(),
            sel,
            x_val: std.apply(&val.x)?,
            y_val: val.y_f64(),
            s_val: val.s_f64(),
            sel_val,
            std,
        })
    }

    fn d(&self) -> usize {
        self.x.ncols()
    }

    fn risk_sets(&self) -> Result<(LabeledSet, LabeledSet)> {
        Ok((
            LabeledSet::single(self.x.select(Axis(0), &self.sel), self.y.select(Axis(0), &self.sel))?,
            LabeledSet::single(
                self.x_val.select(Axis(0), &self.sel_val),
                self.y_val.select(Axis(0), &self.sel_val),
            )?,
        ))
    }

    fn selection_sets(&self) -> Result<(LabeledSet, LabeledSet)> {
        Ok((
            LabeledSet::single(self.x.clone(), self.s.clone())?,
            LabeledSet::single(self.x_val.clone(), self.s_val.clone())?,
        ))
    }

    /// Head 0: risk, labeled where `s = 1`. Head 1: selection, labeled everywhere.
    fn multitask_sets(&self) -> Result<(LabeledSet, LabeledSet)> {
        let make = |x: &Array2<f64>, y: &Array1<f64>, s: &Array1<f64>| {
            let labeled: Vec<bool> = s.iter().map(|&v| v == 1.0).collect();
            LabeledSet::new(
                x.clone(),
                vec![HeadTargets::masked(y.clone(), &labeled), HeadTargets::full(s.clone())],
            )
        };
        Ok((make(&self.x, &self.y, &self.s)?, make(&self.x_val, &self.y_val, &self.s_val)?))
    }
}

fn single_spec(d: usize, c: &Candidate) -> MlpSpec {
    MlpSpec::single(d, c.hidden.clone())
}

fn selection_spec(d: usize, c: &Candidate) -> MlpSpec {
    MlpSpec::single(d, c.hidden.clone()).with_heads(vec![HeadSpec::new("selection")])
}

fn shared_spec(d: usize, c: &Candidate, reversal: Option<f64>) -> MlpSpec {
    let mut selection = HeadSpec::new("selection").with_layers(c.head.clone());
    if let Some(lambda) = reversal {
        selection = selection.with_reversal(lambda);
    }
    MlpSpec::single(d, c.hidden.clone()).with_heads(vec![
        HeadSpec::new("risk").with_layers(c.head.clone()),
        selection,
    ])
}

fn fit_risk(p: &Prepared, hp: &HyperParams, cfg: &FitConfig, weights: Option<Vec<f64>>) -> Result<(TrainedModel, String)> {
    let (train, val) = p.risk_sets()?;
    let (train, weights) = match weights {
        None => (train, None),
        Some(w) => {
            // weighted methods drop rows whose weight is exactly zero
            let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
            if keep.len() == w.len() {
                (train, Some(w))
            } else {
                let kept = keep.iter().map(|&i| w[i]).collect();
                (train.select(&keep), Some(kept))
            }
        }
    };
    let opts = TrainOptions {
        sample_weights: weights,
        ..TrainOptions::default()
    };
    tune(&cfg.grid, false, |c| single_spec(p.d(), c), &train, &val, hp, &opts, 0)
}

fn fit_selection(p: &Prepared, hp: &HyperParams, cfg: &FitConfig) -> Result<(TrainedModel, String)> {
    let (train, val) = p.selection_sets()?;
    let hp = hp.clone().with_seed(mix_seed(hp.seed, SELECTION_TAG));
    tune(&cfg.grid, false, |c| selection_spec(p.d(), c), &train, &val, &hp, &TrainOptions::default(), 0)
}

fn fit_shared(p: &Prepared, hp: &HyperParams, cfg: &FitConfig, reversal: Option<f64>) -> Result<(TrainedModel, String)> {
    let (train, val) = p.multitask_sets()?;
    let opts = match reversal {
        Some(_) => TrainOptions {
            monitor: Monitor::Heads(vec![0]),
            reversal_warmup: cfg.dann_warmup,
            ..TrainOptions::default()
        },
        None => TrainOptions::default(),
    };
    tune(&cfg.grid, true, |c| shared_spec(p.d(), c, reversal), &train, &val, hp, &opts, 0)
}

fn assemble(kind: MethodKind, p: Prepared, risk: (TrainedModel, String), cfg: &FitConfig) -> FittedMethod {
    FittedMethod {
        kind,
        standardizer: p.std,
        risk_model: risk.0,
        risk_head: 0,
        selection_model: None,
        weights: None,
        deferral_threshold: cfg.deferral_threshold,
        choices: format!("risk={}", risk.1),
    }
}

/// Fits one method on `train`, using `val` for early stopping and architecture selection.
///
/// The risk network of oracle, naive, tnet and ipw is trained from `hp.seed` on the same rows
/// and architecture, so with uniform weights all four share bit-identical risk models.
pub fn fit(kind: MethodKind, train: &Dataset, val: &Dataset, hp: &HyperParams, cfg: &FitConfig) -> Result<FittedMethod> {
    let p = Prepared::new(kind, train, val)?;
    match kind {
        MethodKind::Oracle | MethodKind::Naive => {
            let risk = fit_risk(&p, hp, cfg, None)?;
            Ok(assemble(kind, p, risk, cfg))
        }
        MethodKind::TNet => {
            let selection = fit_selection(&p, hp, cfg)?;
            let risk = fit_risk(&p, hp, cfg, None)?;
            let mut fm = assemble(kind, p, risk, cfg);
            fm.choices = format!("{};selection={}", fm.choices, selection.1);
            fm.selection_model = Some(SelectionModel::Separate(selection.0));
            Ok(fm)
        }
        MethodKind::MtNet | MethodKind::MtNaive | MethodKind::Dann => {
            let reversal = (kind == MethodKind::Dann).then_some(cfg.dann_lambda);
            let (model, choice) = fit_shared(&p, hp, cfg, reversal)?;
            let fm = FittedMethod {
                kind,
                standardizer: p.std,
                risk_model: model,
                risk_head: 0,
                selection_model: Some(SelectionModel::SharedHead(1)),
                weights: None,
                deferral_threshold: cfg.deferral_threshold,
                choices: format!("shared={choice}"),
            };
            Ok(fm)
        }
        MethodKind::Ipw => {
            let (selection, choice) = fit_selection(&p, hp, cfg)?;
            let study = p.x.select(Axis(0), &p.sel);
            let propensities = selection.predict_head(study.view(), 0)?;
            let mut fm = ipw_with(p, hp, cfg, propensities.as_slice().unwrap())?;
            fm.choices = format!("{};selection={choice}", fm.choices);
            fm.selection_model = Some(SelectionModel::Separate(selection));
            Ok(fm)
        }
        MethodKind::Kmm | MethodKind::Kliep => {
            let study = p.x.select(Axis(0), &p.sel);
            let kernel = KernelConfig {
                seed: mix_seed(hp.seed, KERNEL_TAG),
                ..cfg.kernel.clone()
            };
            let mut wv = if kind == MethodKind::Kmm {
                reweight::kmm_weights(study.view(), p.x.view(), &kernel)?
            } else {
                reweight::kliep_weights(study.view(), p.x.view(), &kernel)?
            };
            wv.w = reweight::normalize_mean_one(&wv.w);
            let risk = fit_risk(&p, hp, cfg, Some(wv.w.clone()))?;
            let mut fm = assemble(kind, p, risk, cfg);
            fm.weights = Some(wv);
            Ok(fm)
        }
        MethodKind::Imputation => {
            let (aux, aux_choice) = fit_risk(&p, hp, cfg, None)?;
            let impute = |x: &Array2<f64>, y: &Array1<f64>, s: &Array1<f64>| -> Result<Array1<f64>> {
                let probs = aux.predict_head(x.view(), 0)?;
                Ok(Array1::from_iter((0..y.len()).map(|i| {
                    if s[i] == 1.0 {
                        y[i]
                    } else {
                        match cfg.imputation {
                            ImputationMode::Hard => f64::from(u8::from(probs[i] >= 0.5)),
                            ImputationMode::Soft => probs[i],
                        }
                    }
                })))
            };
            let train_set = LabeledSet::single(p.x.clone(), impute(&p.x, &p.y, &p.s)?)?;
            let val_set = LabeledSet::single(p.x_val.clone(), impute(&p.x_val, &p.y_val, &p.s_val)?)?;
            let hp_final = hp.clone().with_seed(mix_seed(hp.seed, IMPUTED_TAG));
            let risk = tune(&cfg.grid, false, |c| single_spec(p.d(), c), &train_set, &val_set, &hp_final, &TrainOptions::default(), 0)?;
            let mut fm = assemble(kind, p, risk, cfg);
            fm.choices = format!("{};imputer={aux_choice}", fm.choices);
            Ok(fm)
        }
    }
}

fn ipw_with(p: Prepared, hp: &HyperParams, cfg: &FitConfig, propensities: &[f64]) -> Result<FittedMethod> {
    let marginal = p.sel.len() as f64 / p.x.nrows() as f64;
    let mut wv = ipw_weights(propensities, marginal)?;
    wv.w = reweight::normalize_mean_one(&wv.w);
    let risk = fit_risk(&p, hp, cfg, Some(wv.w.clone()))?;
    let mut fm = assemble(MethodKind::Ipw, p, risk, cfg);
    fm.weights = Some(wv);
    Ok(fm)
}

/// IPW risk fitting with externally supplied propensities for the selected training rows
/// (in training-row order). No selection model is stored.
pub fn fit_ipw_from_propensities(
    train: &Dataset,
    val: &Dataset,
    hp: &HyperParams,
    cfg: &FitConfig,
    propensities: &[f64],
) -> Result<FittedMethod> {
    let p = Prepared::new(MethodKind::Ipw, train, val)?;
    if propensities.len() != p.sel.len() {
        return Err(Error::DimensionMismatch {
            expected: p.sel.len(),
            actual: propensities.len(),
        });
    }
    ipw_with(p, hp, cfg, propensities)
}

impl FittedMethod {
    pub fn with_deferral_threshold(mut self, threshold: f64) -> Self {
        self.deferral_threshold = threshold;
        self
    }

    /// Risk probabilities on raw (unstandardised) features.
    pub fn risk_scores(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let z = self.standardizer.apply(&x.to_owned())?;
        self.risk_model.predict_head(z.view(), self.risk_head)
    }

    pub fn selection_scores(&self, x: ArrayView2<'_, f64>) -> Result<Option<Array1<f64>>> {
        let z = self.standardizer.apply(&x.to_owned())?;
        match &self.selection_model {
            Some(SelectionModel::Separate(m)) => m.predict_head(z.view(), 0).map(Some),
            Some(SelectionModel::SharedHead(h)) => self.risk_model.predict_head(z.view(), *h).map(Some),
            None => Ok(None),
        }
    }
}

/// Scores target rows. Identification methods defer rows whose selection score is below the
/// deferral threshold but still report their risk score.
pub fn predict(fm: &FittedMethod, x: ArrayView2<'_, f64>) -> Result<Vec<Prediction>> {
    let scores = fm.risk_scores(x)?;
    let selection = if fm.kind.has_selection_score() {
        fm.selection_scores(x)?
    } else {
        None
    };
    Ok((0..scores.len())
        .map(|i| {
            let sel = selection.as_ref().map(|s| s[i]);
            Prediction {
                score: scores[i],
                deferred: fm.kind.defers() && sel.is_some_and(|v| v < fm.deferral_threshold),
                selection_score: sel,
            }
        })
        .collect())
}
