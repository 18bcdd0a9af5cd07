use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::SeededRng;

const FEATURE_RANGE: f64 = 10.0;
const MAX_POOL_CHUNKS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_total: usize,
    pub n_features: usize,
    /// Fraction of positive outcomes, among selected rows and among non-selected rows.
    pub event_rate: f64,
    /// Fraction of rows with `s = 0`.
    pub nonselect_rate: f64,
    pub flip_rate: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_total: 1000,
            n_features: 25,
            event_rate: 0.1,
            nonselect_rate: 0.1,
            flip_rate: 0.01,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 || self.n_features == 0 {
            return Err(Error::InvalidInput("n_total and n_features must be positive".into()));
        }
        for (name, r) in [("event_rate", self.event_rate), ("nonselect_rate", self.nonselect_rate)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidInput(format!("{name} {r} outside (0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&self.flip_rate) {
            return Err(Error::InvalidInput(format!("flip_rate {} outside [0, 1)", self.flip_rate)));
        }
        Ok(())
    }
}

/// Outcome and selection hyperplanes: `y = (x·a + c) > 0`, `s = y XOR ((x·b + d) > 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub d_intercept: f64,
}

impl SyntheticParams {
    /// Noise-free outcomes.
    pub fn outcomes(&self, x: &Array2<f64>) -> Vec<u8> {
        let a = Array1::from(self.a.clone());
        x.dot(&a).iter().map(|&v| (v + self.c > 0.0) as u8).collect()
    }

    /// Selection flags from features and the observed (possibly flipped) outcomes.
    pub fn selection(&self, x: &Array2<f64>, y: &[u8]) -> Vec<u8> {
        let b = Array1::from(self.b.clone());
        x.dot(&b)
            .iter()
            .zip(y)
            .map(|(&v, &yi)| yi ^ ((v + self.d_intercept > 0.0) as u8))
            .collect()
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

struct Targets {
    // indexed by [s][y]
    counts: [[usize; 2]; 2],
}

impl Targets {
    fn new(spec: &GenSpec) -> Self {
        let n = spec.n_total;
        let n_ns = ((spec.nonselect_rate * n as f64).round() as usize).min(n);
        let n_sel = n - n_ns;
        let sel_pos = (spec.event_rate * n_sel as f64).round() as usize;
        let ns_pos = (spec.event_rate * n_ns as f64).round() as usize;
        Targets {
            counts: [[n_ns - ns_pos, ns_pos], [n_sel - sel_pos, sel_pos]],
        }
    }
}

/// Synthetic dataset with exact selection and event rates.
///
/// Rows are drawn in chunks of `n_total` from the uniform feature distribution, labelled by the
/// outcome hyperplane (with `ceil(flip_rate · n_total)` distinct outcomes flipped per chunk) and
/// by the XOR selection rule. The intercepts are the negated medians of the projections on the
/// first chunk so every (s, y) stratum is populated. Chunks accumulate until each stratum can
/// supply its quota; the quotas are then taken in draw order and the result is shuffled.
pub fn gen_synthetic(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = SeededRng::seed_from_u64(spec.seed);
    let d = spec.n_features;
    let n = spec.n_total;
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets = Targets::new(spec);
    let flips = (spec.flip_rate * n as f64).ceil() as usize;

    let mut params = SyntheticParams {
        a,
        b,
        c: 0.0,
        d_intercept: 0.0,
    };
    let mut pool_rows: Vec<Array2<f64>> = Vec::new();
    let mut strata: [[Vec<(usize, usize)>; 2]; 2] = Default::default();
    let mut pool_y: Vec<Vec<u8>> = Vec::new();
    let mut pool_s: Vec<Vec<u8>> = Vec::new();

    let enough = |strata: &[[Vec<(usize, usize)>; 2]; 2]| {
        (0..2).all(|s| (0..2).all(|y| strata[s][y].len() >= targets.counts[s][y]))
    };

    for chunk in 0..MAX_POOL_CHUNKS {
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-FEATURE_RANGE..FEATURE_RANGE));
        if chunk == 0 {
            let xa = x.dot(&Array1::from(params.a.clone()));
            let xb = x.dot(&Array1::from(params.b.clone()));
            params.c = -median(xa.as_slice().unwrap());
            params.d_intercept = -median(xb.as_slice().unwrap());
        }
        let mut y = params.outcomes(&x);
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        for &i in &rows[..flips.min(n)] {
            y[i] ^= 1;
        }
        let s = params.selection(&x, &y);
        for i in 0..n {
            strata[s[i] as usize][y[i] as usize].push((chunk, i));
        }
        pool_rows.push(x);
        pool_y.push(y);
        pool_s.push(s);
        if enough(&strata) {
            break;
        }
    }

    if !enough(&strata) {
        let take = |s: usize, y: usize| strata[s][y].len().min(targets.counts[s][y]) as f64;
        let sel = take(1, 0) + take(1, 1);
        let total = sel + take(0, 0) + take(0, 1);
        return Err(Error::Calibration {
            target_event: spec.event_rate,
            target_nonselect: spec.nonselect_rate,
            achieved_event: if sel > 0.0 { take(1, 1) / sel } else { 0.0 },
            achieved_nonselect: if total > 0.0 { 1.0 - sel / total } else { 0.0 },
        });
    }

    let mut picked: Vec<(usize, usize)> = Vec::with_capacity(n);
    for s in 0..2 {
        for y in 0..2 {
            picked.extend_from_slice(&strata[s][y][..targets.counts[s][y]]);
        }
    }
    picked.shuffle(&mut rng);

    let mut x = Array2::zeros((n, d));
    let mut y = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for (row, &(chunk, i)) in picked.iter().enumerate() {
        x.row_mut(row).assign(&pool_rows[chunk].index_axis(Axis(0), i));
        y.push(pool_y[chunk][i]);
        s.push(pool_s[chunk][i]);
    }
    let pool_size = pool_rows.len() * n;
    Dataset::new(
        x,
        y,
        s,
        Provenance::Synthetic {
            spec: spec.clone(),
            params,
            pool_size,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_of(ds: &Dataset) -> &SyntheticParams {
        match &ds.provenance {
            Provenance::Synthetic { params, .. } => params,
            other => panic!("unexpected provenance {other:?}"),
        }
    }

    #[test]
    fn footnote_counts() {
        let ds = gen_synthetic(&GenSpec {
            n_total: 1000,
            event_rate: 0.1,
            nonselect_rate: 0.1,
            ..GenSpec::default()
        })
        .unwrap();
        assert_eq!(ds.s.iter().filter(|&&s| s == 0).count(), 100);
        let sel = ds.selected_indices();
        assert_eq!(sel.len(), 900);
        assert_eq!(sel.iter().filter(|&&i| ds.y[i] == 1).count(), 90);
        assert_eq!(ds.n_features(), 25);
    }

    #[test]
    fn unit_projection_outcomes() {
        let mut e1 = vec![0.0; 4];
        e1[0] = 1.0;
        let params = SyntheticParams {
            a: e1,
            b: vec![0.5; 4],
            c: 0.0,
            d_intercept: 0.0,
        };
        let x = Array2::from_shape_fn((50, 4), |(i, j)| ((i * 7 + j * 3) % 19) as f64 - 9.0);
        let y = params.outcomes(&x);
        for (i, row) in x.outer_iter().enumerate() {
            assert_eq!(y[i] == 1, row[0] > 0.0);
        }
    }

    #[test]
    fn xor_truth_table() {
        let params = SyntheticParams {
            a: vec![1.0],
            b: vec![1.0],
            c: 0.0,
            d_intercept: 0.0,
        };
        let x = ndarray::array![[2.0], [2.0], [-2.0], [-2.0]];
        // (y, h): (1,1) -> 0, (0,1) -> 1, (1,0) -> 1, (0,0) -> 0
        assert_eq!(params.selection(&x, &[1, 0, 1, 0]), vec![0, 1, 1, 0]);
    }

    #[test]
    fn selection_recomputes_from_provenance() {
        let ds = gen_synthetic(&GenSpec {
            n_total: 2000,
            event_rate: 0.3,
            nonselect_rate: 0.2,
            seed: 9,
            ..GenSpec::default()
        })
        .unwrap();
        assert_eq!(params_of(&ds).selection(&ds.x, &ds.y), ds.s);
    }

    #[test]
    fn identical_spec_is_bit_identical() {
        let spec = GenSpec {
            n_total: 500,
            seed: 42,
            ..GenSpec::default()
        };
        assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
        let other = gen_synthetic(&GenSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(other.x, gen_synthetic(&GenSpec { seed: 42, n_total: 500, ..GenSpec::default() }).unwrap().x);
    }

    #[test]
    fn features_stay_in_range() {
        let ds = gen_synthetic(&GenSpec::default()).unwrap();
        assert!(ds.x.iter().all(|v| v.abs() < FEATURE_RANGE));
    }

    #[test]
    fn invalid_rates_are_rejected() {
        for (e, s) in [(0.0, 0.1), (0.1, 1.0), (-0.2, 0.5)] {
            let spec = GenSpec {
                event_rate: e,
                nonselect_rate: s,
                ..GenSpec::default()
            };
            assert!(gen_synthetic(&spec).is_err());
        }
    }
}
