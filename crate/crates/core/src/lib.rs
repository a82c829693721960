//! Doubly robust estimation of a finite-population mean from a probability
//! sample (covariates and design weights) combined with a non-probability
//! sample (covariates and outcomes).
//!
//! The pipeline has two steps. Step 1 selects covariates for the sampling
//! score and the outcome model by solving SCAD-penalized estimating
//! equations ([`pee`]), with tuning by paired K-fold cross-validation
//! ([`tuning`]). Step 2 re-estimates both models on the union of the
//! selected covariates through bias-minimizing joint estimating equations
//! and forms the doubly robust estimate with its variance ([`drest`]).
//! [`simulate`] holds the Monte Carlo harness.

pub mod drest;
pub mod error;
pub mod model;
pub mod numerics;
pub mod penalty;
pub mod pee;
pub mod pipeline;
pub mod simulate;
pub mod tuning;

#[cfg(test)]
mod fixtures;

pub use error::{Error, Result};
