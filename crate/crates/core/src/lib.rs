//! Benchmark toolkit for sample selection bias in binary risk prediction.
//!
//! The study population is the set of rows with `s = 1`; their outcomes are known. The target
//! population also contains non-selected rows (`s = 0`) whose outcomes are hidden from every
//! method during fitting. Target population identification methods ([`methods::MethodKind::TNet`]
//! and [`methods::MethodKind::MtNet`]) learn the selection process and defer rows that do not
//! look like the study population; the remaining methods score everyone.

pub mod bench;
pub mod datagen;
pub mod error;
pub mod methods;
pub mod metrics;
pub mod reweight;
pub mod nn;

pub use error::{Error, Result};

/// RNG used for every seeded stream in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;
