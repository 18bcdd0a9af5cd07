#![allow(dead_code)]

use ndarray::{Array1, Array2};
use ssbench::reweight::rbf_kernel;

pub fn objective(study: &[f64], target: &[f64], h: f64, beta: &[f64]) -> f64 {
    let n = study.len() as f64;
    let m = target.len() as f64;
    let mut q = 0.0;
    for (i, xi) in study.iter().enumerate() {
        for (j, xj) in study.iter().enumerate() {
            q += 0.5 * beta[i] * beta[j] * rbf_kernel(&[*xi], &[*xj], h);
        }
        let kappa: f64 = target.iter().map(|t| rbf_kernel(&[*xi], &[*t], h)).sum::<f64>() * n / m;
        q -= kappa * beta[i];
    }
    q
}

/// Exhaustive search on a 0.01 lattice inside the box: a coarse pass at 0.1, then repeated
/// 0.01-step scans of the ±0.15 window around the incumbent until it stops moving.
pub fn grid_oracle(study: &[f64], target: &[f64], h: f64, b: f64) -> Vec<f64> {
    let n = study.len();
    let nf = n as f64;
    let eps = (nf.sqrt() - 1.0) / nf.sqrt();
    let feasible = |beta: &[f64]| (beta.iter().sum::<f64>() - nf).abs() <= nf * eps + 1e-12;
    let scan = |axes: &[Vec<f64>]| -> Option<(f64, Vec<f64>)> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut idx = vec![0usize; n];
        loop {
            let beta: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| axes[k][i]).collect();
            if feasible(&beta) {
                let f = objective(study, target, h, &beta);
                if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                    best = Some((f, beta));
                }
            }
            let mut k = 0;
            loop {
                if k == n {
                    return best;
                }
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    };
    let lattice = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
        let a = (lo / step).round().max(0.0) as i64;
        let z = (hi / step).round().min(b / step) as i64;
        (a..=z).map(|i| i as f64 * step).collect()
    };
    let coarse: Vec<Vec<f64>> = (0..n).map(|_| lattice(0.0, b, 0.1)).collect();
    let (_, mut best) = scan(&coarse).expect("uniform vector is feasible");
    for _ in 0..50 {
        let axes: Vec<Vec<f64>> = best.iter().map(|&c| lattice(c - 0.15, c + 0.15, 0.01)).collect();
        let (_, next) = scan(&axes).unwrap();
        let moved = next.iter().zip(&best).any(|(a, c)| (a - c).abs() > 1e-9);
        best = next;
        if !moved {
            break;
        }
    }
    best
}

pub fn column(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let x = Array1::from(x.to_vec());
    let y = Array1::from(y.to_vec());
    let (mx, my) = (x.mean().unwrap(), y.mean().unwrap());
    let cov = ((&x - mx) * (&y - my)).sum();
    cov / (((&x - mx).mapv(|v| v * v).sum() * (&y - my).mapv(|v| v * v).sum()).sqrt())
}
