//! Sparse autoregressive distributed-lag models for panels of time series,
//! with real-time residual anomaly detection.
//!
//! The pipeline is:
//!
//! 1. [`panel`]: load or synthesize an `n × h` panel of series.
//! 2. [`lagreg`]: fit one L1-regularized lag regression per series and keep
//!    only the non-zero coefficients together with a residual scale.
//! 3. [`detector`]: stream new points, predict each series from its sparse
//!    lag support, and raise an alert when the residual t-test p-value drops
//!    below a threshold.
//! 4. [`bayes`]: turn residuals into a calibrated anomaly probability.
//!
//! [`diagnostics`] estimates pairwise mutual information to check that the
//! series actually depend on each other, [`baselines`] holds the comparison
//! detectors and [`eval`] ties everything together into scored experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bayes;
pub mod detector;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod lagreg;
pub mod panel;

pub use error::{Error, Result};
pub use panel::{GeneratorSpec, Panel, PanelFormat};
