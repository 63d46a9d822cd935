//! Quantitative-signal laboratory: OHLCV ingestion, technical indicators,
//! trend labeling, an LSTM forecaster trained from scratch, tree/SVM/boosted
//! classifiers, statistical evaluation, and a regime-switching BN-S price
//! simulator, wired together by a deterministic pipeline.

// `!(x > 0.0)` parameter guards intentionally treat NaN as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the subscripts in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod bns;
pub mod classifier;
pub mod container;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod frame;
pub mod indicators;
pub mod labeling;
pub mod marketdata;
pub mod mat;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
