use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use ssbench::reweight::{kliep_weights, kmm_weights, KernelConfig};
use ssbench::SeededRng;

mod support;
use support::{column, grid_oracle, pearson};

fn tight(h: f64, b: f64) -> KernelConfig {
    KernelConfig {
        bandwidth: Some(h),
        kmm_b: b,
        max_iters: 200_000,
        tol: 1e-14,
        ..KernelConfig::default()
    }
}

#[test]
fn kmm_three_point_grid_oracle() {
    let study = [0.0, 1.0, 2.0];
    let target = [2.0];
    let w = kmm_weights(column(&study).view(), column(&target).view(), &tight(1.0, 3.0)).unwrap();
    let oracle = grid_oracle(&study, &target, 1.0, 3.0);
    for (a, o) in w.w.iter().zip(&oracle) {
        assert!((a - o).abs() <= 0.05, "kmm {:?} oracle {:?}", w.w, oracle);
    }
}

#[test]
fn kmm_small_instances_grid_oracle() {
    let mut rng = SeededRng::seed_from_u64(11);
    for case in 0..12 {
        let n = 2 + case % 3;
        let m = rng.random_range(1..=5);
        let b = rng.random_range(1.5..3.0);
        let study: Vec<f64> = (0..n).map(|i| i as f64 * 1.5 + rng.random_range(-0.3..0.3)).collect();
        let target: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..4.0)).collect();
        let w = kmm_weights(column(&study).view(), column(&target).view(), &tight(1.0, b)).unwrap();
        let oracle = grid_oracle(&study, &target, 1.0, b);
        for (a, o) in w.w.iter().zip(&oracle) {
            assert!((a - o).abs() <= 0.05, "case {case}: kmm {:?} oracle {:?}", w.w, oracle);
        }
    }
}

#[test]
fn kliep_tracks_shifted_gaussian() {
    let mut rng = SeededRng::seed_from_u64(8);
    let study: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
    let target: Vec<f64> = (0..500)
        .map(|_| 0.5 + Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let w = kliep_weights(column(&study).view(), column(&target).view(), &KernelConfig::default()).unwrap();
    assert!((w.mean() - 1.0).abs() < 1e-6);
    assert!(w.trace.windows(2).all(|p| p[1] >= p[0]));
    let r = pearson(&study, &w.w);
    assert!(r > 0.5, "pearson r {r}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kmm_always_feasible(
        n in 1usize..25,
        m in 1usize..25,
        d in 1usize..4,
        b in 1.1f64..6.0,
        h in 0.2f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let study = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let target = Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..3.0));
        let cfg = KernelConfig { bandwidth: Some(h), kmm_b: b, max_iters: 300, ..KernelConfig::default() };
        let w = kmm_weights(study.view(), target.view(), &cfg).unwrap();
        let nf = n as f64;
        let eps = (nf.sqrt() - 1.0) / nf.sqrt();
        prop_assert!(w.w.iter().all(|&v| (0.0..=b).contains(&v)));
        let total: f64 = w.w.iter().sum();
        prop_assert!((total - nf).abs() <= nf * eps + 1e-9 * nf, "sum {} n {} eps {}", total, nf, eps);
        prop_assert!(w.trace.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn kliep_normalised(n in 2usize..40, m in 2usize..40, seed in any::<u64>()) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let study = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let target = Array2::from_shape_fn((m, 2), |_| rng.random_range(-0.5..1.5));
        let w = kliep_weights(study.view(), target.view(), &KernelConfig { seed, ..KernelConfig::default() }).unwrap();
        prop_assert!((w.mean() - 1.0).abs() < 1e-6);
        prop_assert!(w.w.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!(w.trace.windows(2).all(|p| p[1] >= p[0]));
    }
}
