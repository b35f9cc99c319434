//! Local Hurst exponents, the Bullish Index regime indicator and
//! equity-premium predictability evaluation.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocate;
pub mod evaluate;
pub mod garch;
pub mod hurst;
pub mod marketdata;
pub mod pipeline;
pub mod predictors;
pub mod regime;
pub mod regress;
pub mod stats;
