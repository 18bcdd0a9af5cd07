//! Example-weight estimators for covariate shift between the study and target samples.
//!
//! * [`ipw_weights`]: marginal selection rate over the per-row selection propensity.
//! * [`kmm_weights`]: kernel mean matching, a box- and sum-constrained quadratic program solved
//!   by projected gradient descent with backtracking.
//! * [`kliep_weights`]: a non-negative kernel expansion of the density ratio fitted by projected
//!   gradient ascent on the target log-likelihood.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SeededRng;

pub const PROPENSITY_FLOOR: f64 = 0.01;
const MEDIAN_SUBSAMPLE: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub estimator: String,
    /// Hyperparameters actually used, e.g. the resolved bandwidth.
    pub params: Vec<(String, f64)>,
    /// Objective after each accepted iteration (empty for closed-form estimators).
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.w.iter().sum::<f64>() / self.w.len() as f64
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// Writes `index,weight` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "weight"])?;
        for (i, v) in self.w.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<weights csv>", e))?;
        Ok(())
    }
}

/// Rescales to mean one. Uniform weights become exactly one.
pub fn normalize_mean_one(w: &[f64]) -> Vec<f64> {
    let first = w.first().copied().unwrap_or(1.0);
    if w.iter().all(|&v| v == first) {
        return vec![1.0; w.len()];
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().map(|v| v / mean).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// RBF bandwidth; `None` uses the median pairwise distance.
    pub bandwidth: Option<f64>,
    pub kmm_b: f64,
    /// Slack on the KMM mean constraint; `None` uses `(√n − 1) / √n`.
    pub kmm_eps: Option<f64>,
    /// Number of KLIEP basis centres; `None` uses `min(100, m)`.
    pub kliep_num_centers: Option<usize>,
    pub max_iters: usize,
    /// KMM stops once an accepted step lowers `n²·MMD²` by less than this fraction of it; KLIEP
    /// stops once the mean log-ratio gains less than this fraction of its magnitude.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: None,
            kmm_b: 10.0,
            kmm_eps: None,
            kliep_num_centers: None,
            max_iters: 1000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

pub fn ipw_weights(selection_probs: &[f64], marginal: f64) -> Result<WeightVector> {
    if !(marginal > 0.0 && marginal < 1.0) {
        return Err(Error::InvalidInput(format!("marginal {marginal} outside (0, 1)")));
    }
    if selection_probs.iter().any(|p| p.is_nan()) {
        return Err(Error::InvalidInput("propensities contain NaN".into()));
    }
    let w = selection_probs
        .iter()
        .map(|p| marginal / p.clamp(PROPENSITY_FLOOR, 1.0))
        .collect();
    Ok(WeightVector {
        w,
        estimator: "ipw".into(),
        params: vec![("marginal".into(), marginal)],
        trace: Vec::new(),
        converged: true,
    })
}

pub fn rbf_kernel(u: &[f64], v: &[f64], bandwidth: f64) -> f64 {
    debug_assert!(bandwidth > 0.0);
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
}

/// Squared Euclidean distances between every row of `a` and every row of `b`.
fn sq_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let na: Array1<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
    let nb: Array1<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut d = a.dot(&b.t());
    d.indexed_iter_mut()
        .for_each(|((i, j), v)| *v = (na[i] + nb[j] - 2.0 * *v).max(0.0));
    d
}

pub fn gram(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, bandwidth: f64) -> Array2<f64> {
    let scale = -1.0 / (2.0 * bandwidth * bandwidth);
    sq_distances(a, b).mapv_into(|d| (d * scale).exp())
}

/// Median pairwise distance over a seeded subsample of at most 500 rows.
pub fn median_bandwidth(x: ArrayView2<'_, f64>, seed: u64) -> f64 {
    let n = x.nrows();
    let rows: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut v = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let sub = x.select(Axis(0), &rows);
    let d2 = sq_distances(sub.view(), sub.view());
    let mut dists: Vec<f64> = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            dists.push(d2[[i, j]].sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

fn check_pair(study: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<()> {
    if study.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::InvalidInput("study and target samples must be nonempty".into()));
    }
    if study.ncols() != target.ncols() {
        return Err(Error::DimensionMismatch {
            expected: study.ncols(),
            actual: target.ncols(),
        });
    }
    Ok(())
}

fn resolve_bandwidth(study: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, cfg: &KernelConfig) -> Result<f64> {
    match cfg.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => Ok(h),
        Some(h) => Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}"))),
        None => {
            let both = ndarray::concatenate(Axis(0), &[study, target])
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            Ok(median_bandwidth(both.view(), cfg.seed))
        }
    }
}

/// Euclidean projection onto `{0 ≤ β ≤ upper, lo ≤ Σβ ≤ hi}`.
pub fn project_box_sum(z: &[f64], upper: f64, lo: f64, hi: f64) -> Vec<f64> {
    let clipped = |tau: f64| -> Vec<f64> { z.iter().map(|v| (v - tau).clamp(0.0, upper)).collect() };
    let sum = |b: &[f64]| b.iter().sum::<f64>();
    let base = clipped(0.0);
    let s0 = sum(&base);
    if s0 >= lo && s0 <= hi {
        return base;
    }
    let target = if s0 > hi { hi } else { lo };
    // Σ clip(z − τ) is non-increasing in τ
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let zmin = z.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut t_lo, mut t_hi) = (zmin - upper - 1.0, zmax + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (t_lo + t_hi);
        if sum(&clipped(mid)) > target {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
        if t_hi - t_lo <= f64::EPSILON * t_hi.abs().max(1.0) {
            break;
        }
    }
    let mut beta = clipped(0.5 * (t_lo + t_hi));
    // spread the rounding residual over coordinates strictly inside the box
    let residual = target - sum(&beta);
    let free: Vec<usize> = (0..beta.len())
        .filter(|&i| beta[i] > 0.0 && beta[i] < upper)
        .collect();
    if !free.is_empty() {
        let share = residual / free.len() as f64;
        for i in free {
            beta[i] = (beta[i] + share).clamp(0.0, upper);
        }
    }
    beta
}

fn quad_objective(k: &Array2<f64>, kappa: &Array1<f64>, beta: &Array1<f64>) -> f64 {
    0.5 * beta.dot(&k.dot(beta)) - kappa.dot(beta)
}

/// Kernel mean matching weights for the study rows.
///
/// Minimises `½ βᵀKβ − κᵀβ` over `0 ≤ β ≤ B`, `|Σβ − n| ≤ nε` where `K` is the study Gram
/// matrix and `κ_i = (n/m) Σ_j k(x_i, x'_j)`. Iteration starts from the uniform vector; each
/// accepted step satisfies a sufficient-decrease test so the objective never increases.
pub fn kmm_weights(study: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, cfg: &KernelConfig) -> Result<WeightVector> {
    check_pair(study, target)?;
    if !(cfg.kmm_b > 1.0) {
        return Err(Error::InvalidInput(format!("KMM bound B = {} must exceed 1", cfg.kmm_b)));
    }
    let n = study.nrows();
    let m = target.nrows();
    let h = resolve_bandwidth(study, target, cfg)?;
    let sqrt_n = (n as f64).sqrt();
    let eps = cfg.kmm_eps.unwrap_or((sqrt_n - 1.0) / sqrt_n);
    let (lo, hi) = (n as f64 * (1.0 - eps), n as f64 * (1.0 + eps));
    let upper = cfg.kmm_b;

    let k = gram(study, study, h);
    let ratio = n as f64 / m as f64;
    let kappa: Array1<f64> = gram(study, target, h).sum_axis(Axis(1)) * ratio;
    // 2f(β) + c = n²·MMD²(β) ≥ 0, so progress is measured against a quantity that vanishes at a
    // perfect match rather than against f's arbitrary offset.
    let c = gram(target, target, h).sum() * ratio * ratio;
    let lipschitz = k
        .rows()
        .into_iter()
        .map(|r| r.sum())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut beta = Array1::from(project_box_sum(&vec![1.0; n], upper, lo, hi));
    let mut obj = quad_objective(&k, &kappa, &beta);
    let mut trace = vec![obj];
    let mut step = 1.0 / lipschitz;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let grad = k.dot(&beta) - &kappa;
        let mut accepted = None;
        let mut t = step * 2.0;
        for _ in 0..60 {
            let z: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - t * g).collect();
            let cand = Array1::from(project_box_sum(&z, upper, lo, hi));
            let diff = &cand - &beta;
            let cand_obj = quad_objective(&k, &kappa, &cand);
            let model = obj + grad.dot(&diff) + diff.dot(&diff) / (2.0 * t);
            if cand_obj <= model && cand_obj <= obj {
                accepted = Some((cand, cand_obj, diff));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_obj, diff)) = accepted else {
            converged = true;
            break;
        };
        step = t;
        let moved = diff.dot(&diff).sqrt();
        let scale = beta.dot(&beta).sqrt().max(1.0);
        beta = cand;
        let improvement = 2.0 * (obj - cand_obj);
        obj = cand_obj;
        trace.push(obj);
        let discrepancy = (2.0 * obj + c).max(0.0);
        if moved <= cfg.tol * scale || improvement <= cfg.tol * discrepancy {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("KMM stopped after {} iterations without converging", cfg.max_iters);
    }
    Ok(WeightVector {
        w: beta.to_vec(),
        estimator: "kmm".into(),
        params: vec![
            ("bandwidth".into(), h),
            ("B".into(), upper),
            ("eps".into(), eps),
        ],
        trace,
        converged,
    })
}

/// Restores `bᵀα = 1` after a gradient step: affine correction, clamp to `α ≥ 0`, rescale.
pub fn kliep_project(alpha: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let bb: f64 = b.iter().map(|v| v * v).sum();
    if !(bb > 0.0) {
        return Err(Error::InvalidInput("KLIEP normalisation vector is zero".into()));
    }
    let ba: f64 = alpha.iter().zip(b).map(|(a, v)| a * v).sum();
    let shift = (1.0 - ba) / bb;
    let mut out: Vec<f64> = alpha
        .iter()
        .zip(b)
        .map(|(a, v)| (a + v * shift).max(0.0))
        .collect();
    let norm: f64 = out.iter().zip(b).map(|(a, v)| a * v).sum();
    if !(norm > 0.0) {
        return Err(Error::InvalidInput("KLIEP coefficients collapsed to zero".into()));
    }
    out.iter_mut().for_each(|a| *a /= norm);
    Ok(out)
}

fn mean_log(a: &Array2<f64>, alpha: &Array1<f64>) -> f64 {
    let w = a.dot(alpha);
    w.iter().map(|v| v.ln()).sum::<f64>() / w.len() as f64
}

/// KLIEP weights for the study rows.
///
/// The density ratio is modelled as `w(x) = Σ_l α_l k(x, c_l)` with centres drawn from the
/// target sample. Ascent maximises the mean target log-ratio subject to `α ≥ 0` and a study-side
/// mean of one; a step that lowers the objective is rejected and retried with half the size.
pub fn kliep_weights(study: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, cfg: &KernelConfig) -> Result<WeightVector> {
    check_pair(study, target)?;
    let m = target.nrows();
    let h = resolve_bandwidth(study, target, cfg)?;
    let b_count = cfg.kliep_num_centers.unwrap_or(100).min(m).max(1);
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut centre_rows = sample(&mut rng, m, b_count).into_vec();
    centre_rows.sort_unstable();
    let centres = target.select(Axis(0), &centre_rows);

    let a_target = gram(target, centres.view(), h);
    let a_study = gram(study, centres.view(), h);
    let too_small = |what: &str| Error::BandwidthTooSmall {
        bandwidth: h,
        reason: format!("a {what} row has zero kernel mass on every centre"),
    };
    if a_target.rows().into_iter().any(|r| r.iter().all(|&v| v == 0.0)) {
        return Err(too_small("target"));
    }
    if a_study.rows().into_iter().any(|r| r.iter().all(|&v| v == 0.0)) {
        return Err(too_small("study"));
    }
    let bvec = a_study.mean_axis(Axis(0)).expect("study is nonempty");
    let bslice = bvec.as_slice().unwrap().to_vec();

    let mut alpha = Array1::from(kliep_project(&vec![1.0; b_count], &bslice)?);
    let mut obj = mean_log(&a_target, &alpha);
    let mut trace = vec![obj];
    let mut step = 0.1;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let w = a_target.dot(&alpha);
        let grad = a_target.t().dot(&w.mapv(|v| 1.0 / v)) / m as f64;
        let gnorm = grad.dot(&grad).sqrt();
        if gnorm == 0.0 {
            converged = true;
            break;
        }
        let direction = grad * (alpha.dot(&alpha).sqrt().max(1e-300) / gnorm);
        let mut accepted = None;
        let mut t = step;
        while t > 1e-12 {
            let cand_raw = &alpha + &(&direction * t);
            let cand = Array1::from(kliep_project(cand_raw.as_slice().unwrap(), &bslice)?);
            let cand_obj = mean_log(&a_target, &cand);
            if cand_obj.is_finite() && cand_obj >= obj {
                accepted = Some((cand, cand_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_obj)) = accepted else {
            converged = true;
            break;
        };
        step = (t * 1.5).min(1.0);
        let gain = cand_obj - obj;
        alpha = cand;
        obj = cand_obj;
        trace.push(obj);
        if gain <= cfg.tol * obj.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    let raw = a_study.dot(&alpha);
    let mean = raw.mean().expect("study is nonempty");
    let w: Vec<f64> = raw.iter().map(|v| v / mean).collect();
    Ok(WeightVector {
        w,
        estimator: "kliep".into(),
        params: vec![("bandwidth".into(), h), ("centres".into(), b_count as f64)],
        trace,
        converged,
    })
}
