use super::loss::weighted_bce;
use super::network::{Mode, Network};
use super::train::{init_network, LabeledSet};
use super::{Activation, MlpSpec};
use crate::error::{Error, Result};

/// Loss summed over heads and its analytic gradient, dropout off.
pub fn loss_and_gradient(net: &Network, batch: &LabeledSet) -> Result<(f64, Vec<f64>)> {
    let trace = net.forward_trace(batch.x.view(), Mode::Eval)?;
    let mut loss = 0.0;
    let mut dlogits = Vec::with_capacity(batch.heads.len());
    for (t, h) in batch.heads.iter().zip(&trace.heads) {
        let (l, g) = weighted_bce(h.prob.view(), t.labels.view(), t.weights.view());
        loss += l;
        dlogits.push(g);
    }
    let grads = net.backward(batch.x.view(), &trace, &dlogits, 1.0);
    Ok((loss, grads))
}

fn loss_only(net: &Network, batch: &LabeledSet) -> Result<f64> {
    let probs = net.predict(batch.x.view())?;
    Ok(probs
        .iter()
        .zip(&batch.heads)
        .map(|(p, t)| weighted_bce(p.view(), t.labels.view(), t.weights.view()).0)
        .sum())
}

/// Largest relative difference between analytic and central-difference gradients of `net`.
pub fn grad_check_network(net: &Network, batch: &LabeledSet, epsilon: f64) -> Result<f64> {
    let spec = net.spec();
    if spec.activation != Activation::Tanh {
        return Err(Error::InvalidInput("gradient check requires tanh activations".into()));
    }
    if spec.dropout_rate != 0.0 {
        return Err(Error::InvalidInput("gradient check requires dropout disabled".into()));
    }
    if spec.heads.iter().any(|h| h.reversal.is_some()) {
        return Err(Error::InvalidInput(
            "gradient check is undefined across a gradient reversal".into(),
        ));
    }
    let (_, analytic) = loss_and_gradient(net, batch)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, &g) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let up = loss_only(&probe, batch)?;
        probe.params_mut()[i] = orig - epsilon;
        let down = loss_only(&probe, batch)?;
        probe.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * epsilon);
        let rel = (g - fd).abs() / (g.abs() + fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Gradient check on a freshly initialised network for `spec`.
pub fn grad_check(spec: &MlpSpec, batch: &LabeledSet, epsilon: f64, seed: u64) -> Result<f64> {
    let net = init_network(spec, seed)?;
    grad_check_network(&net, batch, epsilon)
}
