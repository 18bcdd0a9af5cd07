//! Tie-aware AUC, subpopulation slices and cross-seed aggregation.

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::MethodKind;

pub const CELL_SCHEMA: &str = "# ssbench cell results v1";
pub const AGGREGATE_SCHEMA: &str = "# ssbench aggregate results v1";

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("AUC scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks of the positives; every term is a half-integer so the sum is exact
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid_rank * tied_pos as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// AUC where a single-class or empty slice is absent rather than an error.
pub fn auc_or_absent(scores: &[f64], labels: &[u8]) -> Option<f64> {
    auc(scores, labels).ok()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubpopAuc {
    pub overall: Option<f64>,
    pub selected: Option<f64>,
    pub nonselected: Option<f64>,
}

/// AUC over all rows and over the `s = 1` and `s = 0` slices.
pub fn subpop_auc(scores: &[f64], y: &[u8], s: &[u8]) -> Result<SubpopAuc> {
    if scores.len() != y.len() || y.len() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: y.len().min(s.len()),
        });
    }
    let slice = |keep: u8| {
        let (sc, lab): (Vec<f64>, Vec<u8>) = scores
            .iter()
            .zip(y)
            .zip(s)
            .filter(|(_, &si)| si == keep)
            .map(|((&sc, &yi), _)| (sc, yi))
            .unzip();
        auc_or_absent(&sc, &lab)
    };
    Ok(SubpopAuc {
        overall: auc_or_absent(scores, y),
        selected: slice(1),
        nonselected: slice(0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AucOverall,
    AucSelected,
    AucNonselected,
    AucIdentification,
    DeferralRate,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::AucOverall,
        Metric::AucSelected,
        Metric::AucNonselected,
        Metric::AucIdentification,
        Metric::DeferralRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AucOverall => "auc_overall",
            Metric::AucSelected => "auc_selected",
            Metric::AucNonselected => "auc_nonselected",
            Metric::AucIdentification => "auc_identification",
            Metric::DeferralRate => "deferral_rate",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown metric `{s}`")))
    }
}

/// Where a cell sits in the experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub dataset: String,
    pub n_total: usize,
    pub event_rate: f64,
    pub nonselect_rate: f64,
    pub seed_index: u32,
    /// Architecture and learning rate picked by tuning, e.g. `risk=[50]@0.0005`.
    #[serde(default)]
    pub hparams: String,
}

/// Grid coordinates without the seed: the unit results are averaged over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    pub dataset: String,
    pub n_total: usize,
    pub event_rate: f64,
    pub nonselect_rate: f64,
    pub method: MethodKind,
}

impl GroupKey {
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.dataset
            .cmp(&other.dataset)
            .then(self.n_total.cmp(&other.n_total))
            .then(self.event_rate.total_cmp(&other.event_rate))
            .then(self.nonselect_rate.total_cmp(&other.nonselect_rate))
            .then(self.method.cmp(&other.method))
    }

    fn same_config(&self, other: &Self) -> bool {
        self.dataset == other.dataset
            && self.n_total == other.n_total
            && self.event_rate == other.event_rate
            && self.nonselect_rate == other.nonselect_rate
    }
}

/// Result of one (method, grid point, seed) experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: MethodKind,
    pub config: CellConfig,
    pub auc_overall: Option<f64>,
    pub auc_selected: Option<f64>,
    pub auc_nonselected: Option<f64>,
    pub auc_identification: Option<f64>,
    pub deferral_rate: f64,
    /// Seconds; kept out of the results CSV so reruns are byte-identical.
    #[serde(default)]
    pub wall_time: f64,
}

impl CellResult {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::AucOverall => self.auc_overall,
            Metric::AucSelected => self.auc_selected,
            Metric::AucNonselected => self.auc_nonselected,
            Metric::AucIdentification => self.auc_identification,
            Metric::DeferralRate => Some(self.deferral_rate),
        }
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            dataset: self.config.dataset.clone(),
            n_total: self.config.n_total,
            event_rate: self.config.event_rate,
            nonselect_rate: self.config.nonselect_rate,
            method: self.method,
        }
    }

    /// Total order on grid position then seed, used for every serialized listing.
    pub fn cmp_cell(&self, other: &Self) -> Ordering {
        self.group_key()
            .cmp_key(&other.group_key())
            .then(self.config.seed_index.cmp(&other.config.seed_index))
    }

    pub fn validate(&self) -> Result<()> {
        for m in Metric::ALL {
            if let Some(v) = self.metric(m) {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!("{m} = {v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl MetricStats {
    /// Mean and sample standard deviation (n − 1 denominator; zero for a single value).
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return MetricStats::default();
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count == 1 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (count - 1) as f64).sqrt()
        };
        MetricStats {
            count,
            mean: Some(mean),
            std: Some(std),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub key: GroupKey,
    pub auc_overall: MetricStats,
    pub auc_selected: MetricStats,
    pub auc_nonselected: MetricStats,
    pub auc_identification: MetricStats,
    pub deferral_rate: MetricStats,
    /// Oracle mean overall AUC of the same grid point minus this group's mean.
    pub delta_from_oracle: Option<f64>,
}

impl AggregateRow {
    pub fn stats(&self, m: Metric) -> &MetricStats {
        match m {
            Metric::AucOverall => &self.auc_overall,
            Metric::AucSelected => &self.auc_selected,
            Metric::AucNonselected => &self.auc_nonselected,
            Metric::AucIdentification => &self.auc_identification,
            Metric::DeferralRate => &self.deferral_rate,
        }
    }
}

/// Group cells by grid point and method and summarise each metric over seeds.
///
/// Absent values are skipped; a metric with no present values stays absent.
pub fn aggregate(cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&CellResult> = cells.iter().collect();
    sorted.sort_by(|a, b| a.cmp_cell(b));

    let mut rows: Vec<AggregateRow> = Vec::new();
    for group in sorted.chunk_by(|a, b| a.group_key().cmp_key(&b.group_key()).is_eq()) {
        let stats = |m: Metric| {
            let vals: Vec<f64> = group.iter().filter_map(|c| c.metric(m)).collect();
            MetricStats::from_values(&vals)
        };
        rows.push(AggregateRow {
            key: group[0].group_key(),
            auc_overall: stats(Metric::AucOverall),
            auc_selected: stats(Metric::AucSelected),
            auc_nonselected: stats(Metric::AucNonselected),
            auc_identification: stats(Metric::AucIdentification),
            deferral_rate: stats(Metric::DeferralRate),
            delta_from_oracle: None,
        });
    }

    let oracle_means: Vec<(GroupKey, Option<f64>)> = rows
        .iter()
        .filter(|r| r.key.method == MethodKind::Oracle)
        .map(|r| (r.key.clone(), r.auc_overall.mean))
        .collect();
    for row in &mut rows {
        let oracle = oracle_means
            .iter()
            .find(|(k, _)| k.same_config(&row.key))
            .and_then(|(_, m)| *m);
        row.delta_from_oracle = match (oracle, row.auc_overall.mean) {
            (Some(o), Some(m)) => Some(o - m),
            _ => None,
        };
    }
    rows
}

#[derive(Serialize, Deserialize)]
struct CellRow {
    dataset: String,
    n_total: usize,
    event_rate: f64,
    nonselect_rate: f64,
    seed_index: u32,
    method: MethodKind,
    auc_overall: Option<f64>,
    auc_selected: Option<f64>,
    auc_nonselected: Option<f64>,
    auc_identification: Option<f64>,
    deferral_rate: f64,
    hparams: String,
}

/// Results CSV: a schema comment line, then one row per cell in [`CellResult::cmp_cell`] order.
/// Absent AUCs are empty fields.
pub fn write_cells_csv<W: Write>(cells: &[CellResult], mut out: W) -> Result<()> {
    writeln!(out, "{CELL_SCHEMA}").map_err(|e| Error::io("<results csv>", e))?;
    let mut sorted: Vec<&CellResult> = cells.iter().collect();
    sorted.sort_by(|a, b| a.cmp_cell(b));
    let mut w = csv::Writer::from_writer(out);
    for c in sorted {
        w.serialize(CellRow {
            dataset: c.config.dataset.clone(),
            n_total: c.config.n_total,
            event_rate: c.config.event_rate,
            nonselect_rate: c.config.nonselect_rate,
            seed_index: c.config.seed_index,
            method: c.method,
            auc_overall: c.auc_overall,
            auc_selected: c.auc_selected,
            auc_nonselected: c.auc_nonselected,
            auc_identification: c.auc_identification,
            deferral_rate: c.deferral_rate,
            hparams: c.config.hparams.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io("<results csv>", e))?;
    Ok(())
}

pub fn read_cells_csv<R: Read>(input: R) -> Result<Vec<CellResult>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut cells = Vec::new();
    for row in r.deserialize() {
        let row: CellRow = row?;
        let cell = CellResult {
            method: row.method,
            config: CellConfig {
                dataset: row.dataset,
                n_total: row.n_total,
                event_rate: row.event_rate,
                nonselect_rate: row.nonselect_rate,
                seed_index: row.seed_index,
                hparams: row.hparams,
            },
            auc_overall: row.auc_overall,
            auc_selected: row.auc_selected,
            auc_nonselected: row.auc_nonselected,
            auc_identification: row.auc_identification,
            deferral_rate: row.deferral_rate,
            wall_time: 0.0,
        };
        cell.validate()?;
        cells.push(cell);
    }
    Ok(cells)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Aggregate CSV: key columns, then `<metric>_count,<metric>_mean,<metric>_std` per metric, then
/// `delta_from_oracle`.
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], mut out: W) -> Result<()> {
    writeln!(out, "{AGGREGATE_SCHEMA}").map_err(|e| Error::io("<aggregate csv>", e))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["dataset", "n_total", "event_rate", "nonselect_rate", "method"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in Metric::ALL {
        for suffix in ["count", "mean", "std"] {
            header.push(format!("{m}_{suffix}"));
        }
    }
    header.push("delta_from_oracle".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.key.dataset.clone(),
            r.key.n_total.to_string(),
            r.key.event_rate.to_string(),
            r.key.nonselect_rate.to_string(),
            r.key.method.to_string(),
        ];
        for m in Metric::ALL {
            let s = r.stats(m);
            rec.push(s.count.to_string());
            rec.push(opt(s.mean));
            rec.push(opt(s.std));
        }
        rec.push(opt(r.delta_from_oracle));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<aggregate csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for (i, &a) in scores.iter().enumerate() {
            for (j, &b) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if a > b {
                        credit += 1.0;
                    } else if a == b {
                        credit += 0.5;
                    }
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn tie_counts_half() {
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn two_wins_two_losses() {
        let (s, y) = ([0.2, 0.6, 0.4, 0.8], [0u8, 1, 1, 0]);
        assert_eq!(brute_auc(&s, &y), 0.5);
        assert_eq!(auc(&s, &y).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedAuc {
                positives: 2,
                negatives: 0
            })
        ));
        assert!(auc(&[], &[]).is_err());
    }

    #[test]
    fn slices_follow_selection() {
        let y = [1u8, 0, 1, 0];
        let r = subpop_auc(&[1.0, 0.0, 1.0, 0.0], &y, &[1, 1, 1, 1]).unwrap();
        assert_eq!(r.overall, Some(1.0));
        assert_eq!(r.selected, Some(1.0));
        assert_eq!(r.nonselected, None);
        let r = subpop_auc(&[0.9, 0.1, 0.2, 0.8], &y, &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.selected, Some(1.0));
        assert_eq!(r.nonselected, Some(0.0));
    }

    fn cell(method: MethodKind, seed: u32, overall: Option<f64>) -> CellResult {
        CellResult {
            method,
            config: CellConfig {
                dataset: "synthetic".into(),
                n_total: 1000,
                event_rate: 0.1,
                nonselect_rate: 0.2,
                seed_index: seed,
                hparams: String::new(),
            },
            auc_overall: overall,
            auc_selected: overall,
            auc_nonselected: None,
            auc_identification: None,
            deferral_rate: 0.0,
            wall_time: 1.5,
        }
    }

    #[test]
    fn two_seed_mean_and_std() {
        let rows = aggregate(&[
            cell(MethodKind::Naive, 0, Some(0.8)),
            cell(MethodKind::Naive, 1, Some(0.9)),
        ]);
        assert_eq!(rows.len(), 1);
        let s = rows[0].auc_overall;
        assert_eq!(s.count, 2);
        assert!((s.mean.unwrap() - 0.85).abs() < 1e-12);
        assert!((s.std.unwrap() - 0.070_710_678_118_654_76).abs() < 1e-9);
        assert_eq!(rows[0].auc_nonselected.mean, None);
        assert_eq!(rows[0].auc_nonselected.count, 0);
        assert_eq!(rows[0].delta_from_oracle, None);
    }

    #[test]
    fn oracle_delta() {
        let rows = aggregate(&[
            cell(MethodKind::Naive, 0, Some(0.7)),
            cell(MethodKind::Oracle, 0, Some(0.9)),
        ]);
        let oracle = rows.iter().find(|r| r.key.method == MethodKind::Oracle).unwrap();
        assert_eq!(oracle.delta_from_oracle, Some(0.0));
        assert_eq!(oracle.auc_overall.std, Some(0.0));
        let naive = rows.iter().find(|r| r.key.method == MethodKind::Naive).unwrap();
        assert!((naive.delta_from_oracle.unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn absent_values_are_not_zero() {
        let rows = aggregate(&[
            cell(MethodKind::Naive, 0, Some(0.8)),
            cell(MethodKind::Naive, 1, None),
        ]);
        assert_eq!(rows[0].auc_overall.count, 1);
        assert_eq!(rows[0].auc_overall.mean, Some(0.8));
    }

    #[test]
    fn cells_csv_roundtrip_keeps_values() {
        let cells = vec![
            cell(MethodKind::Oracle, 1, Some(0.912_345_678_901_234_5)),
            cell(MethodKind::Naive, 0, None),
        ];
        let mut buf = Vec::new();
        write_cells_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CELL_SCHEMA));
        let back = read_cells_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        // written in cell order, oracle first
        assert_eq!(back[0].method, MethodKind::Oracle);
        assert_eq!(back[0].auc_overall, cells[0].auc_overall);
        assert_eq!(back[1].auc_overall, None);
        assert_eq!(aggregate(&back)[0].auc_overall, aggregate(&cells)[0].auc_overall);
    }

    proptest! {
        #[test]
        fn matches_pairwise_count(
            raw in prop::collection::vec((0u8..6, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| *y as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            prop_assert_eq!(auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        }

        #[test]
        fn complement_labels_sum_to_one(
            raw in prop::collection::vec((-50i32..50, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| *y as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
            let total = auc(&scores, &labels).unwrap() + auc(&scores, &flipped).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_increasing_transform(
            raw in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, y)| *y as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&mapped, &labels).unwrap());
        }
    }
}
