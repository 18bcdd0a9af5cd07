use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::weighted_bce;
use super::network::{Mode, Network};
use super::{HyperParams, MlpSpec};
use crate::error::{Error, Result};
use crate::SeededRng;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Labels for one head. A weight of zero marks the row as unlabeled for that head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadTargets {
    pub labels: Array1<f64>,
    pub weights: Array1<f64>,
}

impl HeadTargets {
    pub fn full(labels: Array1<f64>) -> Self {
        let weights = Array1::ones(labels.len());
        HeadTargets { labels, weights }
    }

    pub fn masked(labels: Array1<f64>, labeled: &[bool]) -> Self {
        let weights = labeled.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        HeadTargets { labels, weights }
    }

    pub fn labeled_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    fn select(&self, idx: &[usize]) -> HeadTargets {
        HeadTargets {
            labels: self.labels.select(Axis(0), idx),
            weights: self.weights.select(Axis(0), idx),
        }
    }
}

/// Feature rows with one target vector per network head.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub x: Array2<f64>,
    pub heads: Vec<HeadTargets>,
}

impl LabeledSet {
    pub fn new(x: Array2<f64>, heads: Vec<HeadTargets>) -> Result<Self> {
        let n = x.nrows();
        for h in &heads {
            if h.labels.len() != n || h.weights.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: h.labels.len().min(h.weights.len()),
                });
            }
        }
        Ok(LabeledSet { x, heads })
    }

    pub fn single(x: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        Self::new(x, vec![HeadTargets::full(labels)])
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            x: self.x.select(Axis(0), idx),
            heads: self.heads.iter().map(|h| h.select(idx)).collect(),
        }
    }
}

/// Per-epoch losses. Index `e` holds epoch `e + 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_head_loss: Vec<Vec<f64>>,
}

impl History {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

/// A network with the parameters from its best validation epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub network: Network,
    pub history: History,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn spec(&self) -> &MlpSpec {
        self.network.spec()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>, mode: Mode<'_>) -> Result<Vec<Array1<f64>>> {
        self.network.forward(x, mode)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array1<f64>>> {
        self.network.predict(x)
    }

    pub fn predict_head(&self, x: ArrayView2<'_, f64>, head: usize) -> Result<Array1<f64>> {
        Ok(self.predict(x)?.swap_remove(head))
    }

    /// Loss on `set` with dropout disabled, as `(sum over heads, per head)`.
    pub fn loss(&self, set: &LabeledSet) -> Result<(f64, Vec<f64>)> {
        evaluate_loss(&self.network, set)
    }
}

/// Which heads' validation losses drive early stopping.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Monitor {
    #[default]
    AllHeads,
    Heads(Vec<usize>),
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Positive per-row weights multiplied into every head's loss.
    pub sample_weights: Option<Vec<f64>>,
    pub monitor: Monitor,
    /// Fraction of `max_epochs` over which gradient reversal strength ramps linearly to its
    /// configured value. Zero disables the ramp.
    pub reversal_warmup: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Patience-based stopping on a loss that should decrease. Ties keep the earlier epoch.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            Verdict::Improved
        } else if epoch - self.best_epoch >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

pub(crate) fn evaluate_loss(net: &Network, set: &LabeledSet) -> Result<(f64, Vec<f64>)> {
    let probs = net.predict(set.x.view())?;
    let per_head: Vec<f64> = probs
        .iter()
        .zip(&set.heads)
        .map(|(p, t)| weighted_bce(p.view(), t.labels.view(), t.weights.view()).0)
        .collect();
    Ok((per_head.iter().sum(), per_head))
}

fn check_targets(spec: &MlpSpec, set: &LabeledSet, what: &str) -> Result<()> {
    if set.heads.len() != spec.heads.len() {
        return Err(Error::InvalidInput(format!(
            "{what} set has {} target vectors for {} heads",
            set.heads.len(),
            spec.heads.len()
        )));
    }
    if set.x.ncols() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            actual: set.x.ncols(),
        });
    }
    if set.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} features contain non-finite values")));
    }
    Ok(())
}

fn rng_stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fresh Glorot-initialised network for `spec`, drawn from the same stream `train` uses.
pub fn init_network(spec: &MlpSpec, seed: u64) -> Result<Network> {
    Network::init(spec.clone(), &mut rng_stream(seed, INIT_STREAM))
}

/// Mini-batch Adam on mean binary cross-entropy with early stopping on validation loss.
pub fn train(
    spec: &MlpSpec,
    train: &LabeledSet,
    val: &LabeledSet,
    hp: &HyperParams,
    sample_weights: Option<&[f64]>,
) -> Result<TrainedModel> {
    let opts = TrainOptions {
        sample_weights: sample_weights.map(<[f64]>::to_vec),
        ..TrainOptions::default()
    };
    train_with(spec, train, val, hp, &opts)
}

pub fn train_with(
    spec: &MlpSpec,
    train: &LabeledSet,
    val: &LabeledSet,
    hp: &HyperParams,
    opts: &TrainOptions,
) -> Result<TrainedModel> {
    spec.validate()?;
    hp.validate()?;
    check_targets(spec, train, "training")?;
    check_targets(spec, val, "validation")?;
    let n = train.len();

    for (head, targets) in spec.heads.iter().zip(&train.heads) {
        let labeled = targets
            .labels
            .iter()
            .zip(&targets.weights)
            .filter(|(_, &w)| w > 0.0);
        let (mut pos, mut neg) = (0usize, 0usize);
        for (&y, _) in labeled {
            if y >= 0.5 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateData {
                head: head.name.clone(),
                reason: format!("{pos} positive and {neg} negative labeled rows"),
            });
        }
    }

    let monitored: Vec<usize> = match &opts.monitor {
        Monitor::AllHeads => (0..spec.heads.len()).collect(),
        Monitor::Heads(h) => h.clone(),
    };
    if monitored.is_empty() || monitored.iter().any(|&h| h >= spec.heads.len()) {
        return Err(Error::InvalidInput("monitored heads out of range".into()));
    }
    if monitored.iter().all(|&h| val.heads[h].labeled_count() == 0) {
        return Err(Error::InvalidInput(
            "validation set has no labeled rows for the monitored heads".into(),
        ));
    }

    let mut heads = train.heads.clone();
    if let Some(w) = &opts.sample_weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: w.len(),
            });
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "sample weights must be strictly positive, found {bad}"
            )));
        }
        let w = Array1::from(w.clone());
        for h in &mut heads {
            h.weights *= &w;
        }
    }

    let mut net = init_network(spec, hp.seed)?;
    let mut shuffle_rng = rng_stream(hp.seed, SHUFFLE_STREAM);
    let mut dropout_rng = rng_stream(hp.seed, DROPOUT_STREAM);
    let mut adam = AdamState::new(net.num_params());
    let mut stopper = EarlyStopping::new(hp.patience);
    let mut best_params = net.params().to_vec();
    let mut history = History::default();
    let warmup_epochs = opts.reversal_warmup * hp.max_epochs as f64;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=hp.max_epochs {
        let reversal_scale = if warmup_epochs > 0.0 {
            (epoch as f64 / warmup_epochs).min(1.0)
        } else {
            1.0
        };
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hp.batch_size) {
            let xb = train.x.select(Axis(0), chunk);
            let trace = net.forward_trace(xb.view(), Mode::Train(&mut dropout_rng))?;
            let mut batch_loss = 0.0;
            let mut dlogits = Vec::with_capacity(heads.len());
            for (t, h) in heads.iter().zip(&trace.heads) {
                let y = t.labels.select(Axis(0), chunk);
                let w = t.weights.select(Axis(0), chunk);
                let (l, g) = weighted_bce(h.prob.view(), y.view(), w.view());
                batch_loss += l;
                dlogits.push(g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    reason: format!("training loss became {batch_loss}"),
                });
            }
            let grads = net.backward(xb.view(), &trace, &dlogits, reversal_scale);
            adam_step(net.params_mut(), &grads, &mut adam, hp).map_err(|e| match e {
                Error::Divergence { reason, .. } => Error::Divergence { epoch, reason },
                other => other,
            })?;
            epoch_loss += batch_loss;
            batches += 1;
        }

        let (_, val_heads) = evaluate_loss(&net, val)?;
        let val_loss: f64 = monitored.iter().map(|&h| val_heads[h]).sum();
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: format!("validation loss became {val_loss}"),
            });
        }
        history.train_loss.push(epoch_loss / batches as f64);
        history.val_loss.push(val_loss);
        history.val_head_loss.push(val_heads);

        match stopper.observe(epoch, val_loss) {
            Verdict::Improved => best_params.copy_from_slice(net.params()),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }

    net.set_params(best_params)?;
    log::debug!(
        "trained {:?} for {} epochs, best epoch {} (val loss {:.5})",
        spec.hidden_layers,
        history.epochs_run(),
        stopper.best_epoch(),
        stopper.best_loss()
    );
    Ok(TrainedModel {
        network: net,
        history,
        best_epoch: stopper.best_epoch(),
    })
}
