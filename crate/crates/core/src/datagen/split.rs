use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct SplitBundle {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub seed: u64,
}

/// Splits `count` rows of a stratum in proportion to the stratum's share of the whole.
fn share(part: usize, total: usize, stratum: usize) -> usize {
    ((part as f64 * stratum as f64 / total as f64).round() as usize).min(stratum)
}

/// Test gets `ceil(0.2 n)` rows, validation `ceil(0.2 (n − test))`, training the rest.
///
/// Selected and non-selected rows are shuffled separately and allotted to each partition in
/// proportion, so both strata reach every partition whenever they are large enough.
pub fn split(ds: &Dataset, seed: u64) -> Result<SplitBundle> {
    let n = ds.len();
    if n < 10 {
        return Err(Error::InvalidInput(format!("need at least 10 rows to split, got {n}")));
    }
    let n_test = (0.2 * n as f64).ceil() as usize;
    let n_val = (0.2 * (n - n_test) as f64).ceil() as usize;

    let mut rng = SeededRng::seed_from_u64(seed);
    let mut sel = ds.selected_indices();
    let mut non = ds.nonselected_indices();
    sel.shuffle(&mut rng);
    non.shuffle(&mut rng);

    let test_non = share(n_test, n, non.len()).min(n_test);
    let test_sel = n_test - test_non;
    let rest_non = non.len() - test_non;
    let rest = n - n_test;
    let val_non = share(n_val, rest, rest_non).min(n_val);
    let val_sel = n_val - val_non;
    if test_sel > sel.len() || test_sel + val_sel > sel.len() {
        return Err(Error::Stratification(
            "not enough selected rows to fill the partitions".into(),
        ));
    }

    let mut test: Vec<usize> = sel[..test_sel].iter().chain(&non[..test_non]).copied().collect();
    let mut val: Vec<usize> = sel[test_sel..test_sel + val_sel]
        .iter()
        .chain(&non[test_non..test_non + val_non])
        .copied()
        .collect();
    let mut train: Vec<usize> = sel[test_sel + val_sel..]
        .iter()
        .chain(&non[test_non + val_non..])
        .copied()
        .collect();
    for part in [&mut test, &mut val, &mut train] {
        part.shuffle(&mut rng);
    }

    for (name, part) in [("train", &train), ("validation", &val), ("test", &test)] {
        if !part.iter().any(|&i| ds.s[i] == 1) {
            return Err(Error::Stratification(format!("{name} partition has no selected rows")));
        }
    }
    Ok(SplitBundle {
        train: ds.subset(&train),
        val: ds.subset(&val),
        test: ds.subset(&test),
        seed,
    })
}

/// Column-wise z-scoring with statistics from one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get unit scale.
    pub fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Standardizer {
            mean: mean.to_vec(),
            std: std.to_vec(),
        }
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: x.ncols(),
            });
        }
        let mean = Array1::from(self.mean.clone());
        let std = Array1::from(self.std.clone());
        Ok((x - &mean) / &std)
    }
}
