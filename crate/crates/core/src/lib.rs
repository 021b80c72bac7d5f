//! Ordinal pattern dependence between two time series.
//!
//! The crate estimates how often two series move with the same ordinal
//! pattern, compares that with what independent series would show, and tests
//! whether the level of this dependence changes over time (CUSUM statistics
//! studentized by kernel long-run variance estimates, with Kolmogorov critical
//! values). The same machinery extends to weighted dependence, where nearby
//! but unequal patterns also count, under any pseudo-metric on patterns.

pub mod breaktest;
pub mod dataio;
pub mod error;
pub mod estimators;
pub mod longrun;
pub mod metrics;
pub mod patterns;
pub mod simulate;

pub use error::{Error, Result};
pub use estimators::PairedSeries;
pub use patterns::{Order, Pattern, PatternIndex, PatternSequence};
