/// Threshold whose strict exceedance fraction is as close as possible to `target_rate`.
///
/// The threshold is always one of the scores. When two achievable fractions are equally close
/// the one with fewer scores above wins.
pub fn calibrate_threshold(scores: &[f64], target_rate: f64) -> f64 {
    assert!(!scores.is_empty(), "calibrate_threshold needs at least one score");
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let target = target_rate.clamp(0.0, 1.0) * sorted.len() as f64;

    // walking down distinct values, `above` = number of scores strictly greater than the value
    let mut best = sorted[0];
    let mut best_gap = target;
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i];
        let above = i as f64;
        let gap = (above - target).abs();
        if gap < best_gap {
            best_gap = gap;
            best = value;
        }
        while i < sorted.len() && sorted[i] == value {
            i += 1;
        }
    }
    best
}
