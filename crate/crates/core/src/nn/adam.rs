use serde::{Deserialize, Serialize};

use super::HyperParams;
use crate::error::{Error, Result};

/// First and second moment estimates for a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
///
/// Fails without touching `params` if any gradient entry is non-finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    hp: &HyperParams,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: state.m.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            epoch: 0,
            reason: format!("non-finite gradient at parameter {i}"),
        });
    }

    state.t += 1;
    let (b1, b2) = (hp.adam_beta1, hp.adam_beta2);
    let t = state.t as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = hp.learning_rate;
    let eps = hp.adam_epsilon;

    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(lr: f64) -> HyperParams {
        HyperParams {
            learning_rate: lr,
            ..HyperParams::default()
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, &hp(0.001)).unwrap();
        // m_hat = 1, v_hat = 1 so the step is lr / (1 + eps)
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn negative_gradient_mirrors() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[-1.0], &mut st, &hp(0.001)).unwrap();
        assert!((p[0] - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = vec![0.3, -1.2, 7.0];
        let mut st = AdamState::new(3);
        for _ in 0..25 {
            adam_step(&mut p, &[0.0; 3], &mut st, &hp(0.01)).unwrap();
        }
        assert_eq!(p, vec![0.3, -1.2, 7.0]);
        assert_eq!(st.t, 25);
    }

    #[test]
    fn uniform_gradient_scaling_barely_changes_first_step() {
        let mut a = vec![0.5, 0.5];
        let mut b = a.clone();
        let (mut sa, mut sb) = (AdamState::new(2), AdamState::new(2));
        adam_step(&mut a, &[0.2, -0.3], &mut sa, &hp(0.001)).unwrap();
        adam_step(&mut b, &[0.4, -0.6], &mut sb, &hp(0.001)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(2);
        let err = adam_step(&mut p, &[0.1, f64::NAN], &mut st, &hp(0.001)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(2);
        assert!(adam_step(&mut p, &[0.1], &mut st, &hp(0.001)).is_err());
    }
}
