use ndarray::{Array1, ArrayView1};

pub const PROB_CLAMP: f64 = 1e-7;

/// Weighted binary cross-entropy averaged over rows with non-zero weight.
///
/// Returns the loss and its derivative with respect to the pre-sigmoid logits. Rows with weight
/// zero are unlabeled for this head and contribute nothing.
pub fn weighted_bce(
    probs: ArrayView1<'_, f64>,
    labels: ArrayView1<'_, f64>,
    weights: ArrayView1<'_, f64>,
) -> (f64, Array1<f64>) {
    let count = weights.iter().filter(|&&w| w > 0.0).count();
    let mut dlogits = Array1::zeros(probs.len());
    if count == 0 {
        return (0.0, dlogits);
    }
    let denom = count as f64;
    let mut total = 0.0;
    for i in 0..probs.len() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let p = probs[i].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let y = labels[i];
        total += w * -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        dlogits[i] = w * (probs[i] - y) / denom;
    }
    (total / denom, dlogits)
}
