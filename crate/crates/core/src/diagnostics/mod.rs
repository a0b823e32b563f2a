//! Density and dependence diagnostics for a panel.
//!
//! Kernel density estimates of single series and of pairs are combined into
//! a mutual-information estimate (in nats) by tensor-grid quadrature. This
//! is a diagnostic for checking that series depend on each other at all; it
//! scales quadratically in the number of series and is capped accordingly.

mod kde;
mod mi;

pub use kde::{
    cv_log_likelihood, default_bandwidth_grid, fit_kde, KdeModel, CV_FOLDS, CV_MAX_SAMPLES,
    MIN_SAMPLES,
};
pub use mi::{
    mi_grid, mutual_information, mutual_information_estimate, MiEstimate, MiGrid,
    DEFAULT_RESOLUTION, MAX_GRID_SERIES,
};
