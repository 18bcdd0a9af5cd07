//! The benchmark arms behind one fit / predict / evaluate interface.
//!
//! Every method sees the training split's features for all rows but outcomes only where
//! `s = 1`. Features are z-scored with training statistics before any model is fitted.

mod eval;
mod fit;
mod kind;

pub use eval::{evaluate, read_predictions_csv, score_predictions, write_predictions_csv, PredictionRow, SliceMetrics};
pub use fit::{
    fit, fit_ipw_from_propensities, predict, FitConfig, FittedMethod, ImputationMode, Prediction,
    SelectionModel, TuningGrid, DEFAULT_DEFERRAL_THRESHOLD,
};
pub use kind::MethodKind;

/// SplitMix64 finaliser applied to `seed ^ tag`; decorrelates sub-seeds within one fit.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
