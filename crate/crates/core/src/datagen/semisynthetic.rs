use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{calibrate_threshold, Cohort, Dataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::SeededRng;

const PROJECTION_RETRIES: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Deselect exactly the rows with the lowest selection probability.
    #[default]
    Quantile,
    /// Draw `s ~ Bernoulli(p)` after shifting the logits to the target mean.
    Bernoulli,
}

/// Standardised projection `v = 4 a·(x − x̄) / σ` and selection probability `sigmoid(v)`.
///
/// `σ` is the population standard deviation of `a·(x − x̄)`, so `v` has standard deviation 4.
pub fn selection_scores(x: &Array2<f64>, projection: &[f64]) -> Result<(Array1<f64>, Array1<f64>)> {
    if projection.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: projection.len(),
        });
    }
    let mean = x
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::InvalidInput("no rows to project".into()))?;
    let centered = x - &mean;
    let proj = centered.dot(&Array1::from(projection.to_vec()));
    let sigma = proj.std(0.0);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::ZeroVariance { retries: 0 });
    }
    let v = proj.mapv(|u| 4.0 * u / sigma);
    let p = v.mapv(sigmoid);
    Ok((v, p))
}

pub fn inject_bias(cohort: &Cohort, nonselect_rate: f64, seed: u64) -> Result<Dataset> {
    inject_bias_with(cohort, nonselect_rate, seed, SelectionMode::Quantile)
}

/// Adds a selection variable to real features and outcomes.
pub fn inject_bias_with(
    cohort: &Cohort,
    nonselect_rate: f64,
    seed: u64,
    mode: SelectionMode,
) -> Result<Dataset> {
    if !(nonselect_rate > 0.0 && nonselect_rate < 1.0) {
        return Err(Error::InvalidInput(format!(
            "nonselect_rate {nonselect_rate} outside (0, 1)"
        )));
    }
    if cohort.is_empty() {
        return Err(Error::InvalidInput("empty cohort".into()));
    }
    if cohort.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("features must be finite".into()));
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    let d = cohort.n_features();
    let mut found = None;
    for _ in 0..=PROJECTION_RETRIES {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        match selection_scores(&cohort.x, &a) {
            Ok((v, p)) => {
                found = Some((a, v, p));
                break;
            }
            Err(Error::ZeroVariance { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let (projection, v, p) = found.ok_or(Error::ZeroVariance {
        retries: PROJECTION_RETRIES,
    })?;

    let s: Vec<u8> = match mode {
        SelectionMode::Quantile => {
            let t = calibrate_threshold(p.as_slice().unwrap(), 1.0 - nonselect_rate);
            p.iter().map(|&pi| (pi > t) as u8).collect()
        }
        SelectionMode::Bernoulli => {
            let target = 1.0 - nonselect_rate;
            let mean_p = |off: f64| v.iter().map(|&vi| sigmoid(vi + off)).sum::<f64>() / v.len() as f64;
            let (mut lo, mut hi) = (-50.0, 50.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mean_p(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let off = 0.5 * (lo + hi);
            v.iter()
                .map(|&vi| rng.random_bool(sigmoid(vi + off).clamp(0.0, 1.0)) as u8)
                .collect()
        }
    };

    let mut ds = Dataset::new(
        cohort.x.clone(),
        cohort.y.clone(),
        s,
        Provenance::SemiSynthetic {
            source: cohort.source.clone(),
            projection,
            nonselect_rate,
            mode,
            seed,
        },
    )?;
    ds.feature_names = cohort.feature_names.clone();
    Ok(ds)
}

fn event_rate_indices(y: &[u8], target: f64, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidInput(format!("event rate {target} outside (0, 1)")));
    }
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateData {
            head: "outcome".into(),
            reason: "cohort has a single outcome class".into(),
        });
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    if np / (np + nn) > target {
        let k = (target * nn / (1.0 - target)).round().max(1.0) as usize;
        pos.shuffle(rng);
        pos.truncate(k);
    } else {
        let k = (np * (1.0 - target) / target).round().max(1.0) as usize;
        neg.shuffle(rng);
        neg.truncate(k);
    }
    let mut idx: Vec<usize> = pos.into_iter().chain(neg).collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Drops majority-class rows at random until the event rate matches `target`.
///
/// Kept rows stay in their original order.
pub fn subsample_event_rate(cohort: &Cohort, target: f64, seed: u64) -> Result<Cohort> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let idx = event_rate_indices(&cohort.y, target, &mut rng)?;
    Ok(cohort.subset(&idx))
}

/// Real cohort with an optional event rate and size cap, then selection injected.
///
/// `row_ids` of the result index into `cohort`.
pub fn semi_synthetic(
    cohort: &Cohort,
    n_total: Option<usize>,
    event_rate: Option<f64>,
    nonselect_rate: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut ids: Vec<usize> = match event_rate {
        Some(er) => event_rate_indices(&cohort.y, er, &mut rng)?,
        None => (0..cohort.len()).collect(),
    };
    if let Some(n) = n_total {
        if n > ids.len() {
            return Err(Error::InvalidInput(format!(
                "requested {n} rows but only {} are available",
                ids.len()
            )));
        }
        let mut pos: Vec<usize> = ids.iter().copied().filter(|&i| cohort.y[i] == 1).collect();
        let mut neg: Vec<usize> = ids.iter().copied().filter(|&i| cohort.y[i] == 0).collect();
        let rate = pos.len() as f64 / ids.len() as f64;
        let n_pos = ((rate * n as f64).round() as usize).min(pos.len());
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        ids = pos[..n_pos].iter().chain(&neg[..n - n_pos]).copied().collect();
        ids.sort_unstable();
    }
    let work = cohort.subset(&ids);
    let mut ds = inject_bias(&work, nonselect_rate, rng.random())?;
    ds.row_ids = ids;
    Ok(ds)
}
