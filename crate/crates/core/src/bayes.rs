//! Anomaly likelihood from regression residuals.
//!
//! Three steps per series:
//!
//! 1. squash residuals into `(0, 1)` with `(ε − min + 1) / (max − min + 2)`
//!    using the training extremes;
//! 2. regress the log-odds of the squashed residual on the active lag
//!    variables of the fitted model by least squares, so that
//!    `ε̂ ≈ sigmoid(Γc)`;
//! 3. call a point anomalous when `min(1, α·ε̂) > 0.5`, with `α` picked from
//!    a grid by cross-validated F1.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ConfusionCounts;
use crate::lagreg::{build_design, residuals, LagDesign, LagModel};
use crate::panel::Panel;

pub const DEFAULT_FOLDS: usize = 5;

/// 41 points, `0.1, 0.2, …, 4.1`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..41).map(|i| 0.1 + 0.1 * i as f64).collect()
}

pub fn normalize_residual(eps: f64, min_eps: f64, max_eps: f64) -> Result<f64> {
    if !(max_eps > min_eps) {
        return Err(Error::DegenerateRange {
            min: min_eps,
            max: max_eps,
        });
    }
    Ok((eps - min_eps + 1.0) / (max_eps - min_eps + 2.0))
}

/// [`normalize_residual`] after clamping `eps` to the training range.
pub fn normalize_clamped(eps: f64, min_eps: f64, max_eps: f64) -> Result<f64> {
    normalize_residual(eps.clamp(min_eps, max_eps.max(min_eps)), min_eps, max_eps)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub c: Vec<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Least-squares `c` for `logit(eps_norm) ≈ Γc`; the minimum-norm solution
/// when `Γ` is rank deficient.
pub fn fit_logit_linear(gamma: &DMatrix<f64>, eps_norm: &[f64]) -> Result<LogitFit> {
    if gamma.nrows() != eps_norm.len() {
        return Err(Error::Shape {
            expected: gamma.nrows(),
            found: eps_norm.len(),
        });
    }
    if let Some(bad) = eps_norm.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "normalized residuals must lie strictly inside (0, 1), found {bad}"
        )));
    }
    let p = gamma.ncols();
    if p == 0 {
        return Ok(LogitFit {
            c: Vec::new(),
            rank: 0,
            rank_deficient: false,
        });
    }
    let target = DVector::from_iterator(eps_norm.len(), eps_norm.iter().map(|e| logit(*e)));
    let svd = gamma.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * f64::EPSILON * gamma.nrows().max(p) as f64;
    let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
    let c = if smax == 0.0 {
        DVector::zeros(p)
    } else {
        svd.solve(&target, cutoff)
            .map_err(|e| Error::Singular(e.to_string()))?
    };
    Ok(LogitFit {
        c: c.as_slice().to_vec(),
        rank,
        rank_deficient: rank < p,
    })
}

fn check_domain(eps_norm: f64, alpha: f64) -> Result<()> {
    if !(eps_norm > 0.0 && eps_norm < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "normalized residual must lie in (0, 1), got {eps_norm}"
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

/// `P(A = 1 | ε̂) = min(1, α·ε̂)`.
pub fn anomaly_probability(eps_norm: f64, alpha: f64) -> Result<f64> {
    check_domain(eps_norm, alpha)?;
    Ok((alpha * eps_norm).min(1.0))
}

/// Anomalous iff the probability is strictly above one half.
pub fn classify(eps_norm: f64, alpha: f64) -> Result<bool> {
    Ok(anomaly_probability(eps_norm, alpha)? > 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    pub cv_f1: f64,
}

/// Contiguous blocks `[start, end)` splitting `len` items into `folds`.
pub fn contiguous_folds(len: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds)
        .map(|f| (f * len / folds, (f + 1) * len / folds))
        .filter(|(a, b)| b > a)
        .collect()
}

/// Pick `α` from `alpha_grid` maximizing the mean F1 of [`classify`] over
/// contiguous folds. Folds without any positive label or prediction have no
/// defined F1 and are left out of the mean. Ties go to the smaller `α`.
pub fn calibrate_alpha(
    scores: &[f64],
    labels: &[bool],
    alpha_grid: &[f64],
    folds: usize,
) -> Result<AlphaFit> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    if folds == 0 || folds > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} points into {folds} folds",
            scores.len()
        )));
    }
    if !labels.iter().any(|l| *l) {
        return Err(Error::UndefinedF1(
            "no positive labels in any fold; use a labeled range or stratified folds".into(),
        ));
    }
    for &a in alpha_grid {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {a}")));
        }
    }
    for &s in scores {
        check_domain(s, 1.0)?;
    }
    let blocks = contiguous_folds(scores.len(), folds);
    let mut grid = alpha_grid.to_vec();
    grid.sort_by(f64::total_cmp);

    let per_alpha: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&alpha| {
            let mut sum = 0.0;
            let mut used = 0usize;
            for &(a, b) in &blocks {
                let mut counts = ConfusionCounts::default();
                for t in a..b {
                    let pred = alpha * scores[t] > 0.5;
                    counts.record(pred, labels[t]);
                }
                if let Ok(f1) = counts.f1() {
                    sum += f1;
                    used += 1;
                }
            }
            (used > 0).then(|| sum / used as f64)
        })
        .collect();

    let mut best: Option<AlphaFit> = None;
    for (alpha, score) in grid.iter().zip(per_alpha) {
        if let Some(f1) = score {
            if best.as_ref().is_none_or(|b| f1 > b.cv_f1) {
                best = Some(AlphaFit { alpha: *alpha, cv_f1: f1 });
            }
        }
    }
    best.ok_or_else(|| Error::UndefinedF1("no fold has a defined F1 for any alpha".into()))
}

/// Coefficient `c_{j,k}` on the active lag variable `s_{t-k}^{(j)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveCoeff {
    pub j: usize,
    pub k: usize,
    pub c: f64,
}

/// Whether scores predict the next step from lag variables only (`1`) or
/// use the observed residual at the same step (`0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Detect,
    #[default]
    Predict,
}

impl Horizon {
    pub fn from_steps(steps: u8) -> Result<Self> {
        match steps {
            0 => Ok(Horizon::Detect),
            1 => Ok(Horizon::Predict),
            other => Err(Error::InvalidArgument(format!("horizon must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesCalibration {
    pub series_id: usize,
    pub w: usize,
    pub horizon: Horizon,
    pub min_eps: f64,
    pub max_eps: f64,
    /// One coefficient per active lag variable, in the model's `(j, k)` order.
    pub c: Vec<ActiveCoeff>,
    /// Standardization of each active lag variable on the training rows.
    pub gamma_means: Vec<f64>,
    pub gamma_scales: Vec<f64>,
    pub rank_deficient: bool,
    pub alpha: f64,
    pub cv_f1: f64,
}

/// Standardized active lag variables of `model` for every design row.
fn active_matrix(model: &LagModel, design: &LagDesign, means: &[f64], scales: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(design.rows(), model.coeffs.len(), |r, a| {
        let c = &model.coeffs[a];
        (design.lagged(r, c.j, c.k) - means[a]) / scales[a]
    })
}

fn column_moments(model: &LagModel, design: &LagDesign) -> (Vec<f64>, Vec<f64>) {
    let rows = design.rows() as f64;
    model
        .coeffs
        .iter()
        .map(|c| {
            let vals: Vec<f64> = (0..design.rows()).map(|r| design.lagged(r, c.j, c.k)).collect();
            let mean = vals.iter().sum::<f64>() / rows;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows).sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .unzip()
}

impl BayesCalibration {
    /// Per-row scores in `(0, 1)` for the design rows of `panel` (target
    /// times `w..h`).
    pub fn scores(&self, model: &LagModel, panel: &Panel) -> Result<Vec<f64>> {
        if model.series_id != self.series_id || model.coeffs.len() != self.c.len() {
            return Err(Error::Incompatible(format!(
                "calibration for series {} does not match model for series {}",
                self.series_id, model.series_id
            )));
        }
        let design = build_design(panel, model.w)?;
        match self.horizon {
            Horizon::Detect => residuals(model, &design)?
                .into_iter()
                .map(|e| normalize_clamped(e, self.min_eps, self.max_eps))
                .collect(),
            Horizon::Predict => {
                let gamma = active_matrix(model, &design, &self.gamma_means, &self.gamma_scales);
                let c = DVector::from_iterator(self.c.len(), self.c.iter().map(|a| a.c));
                let fitted = if self.c.is_empty() {
                    DVector::zeros(design.rows())
                } else {
                    gamma * c
                };
                // Keep scores inside the open interval the rule expects.
                Ok(fitted
                    .iter()
                    .map(|x| sigmoid(*x).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
                    .collect())
            }
        }
    }

    pub fn classify_all(&self, scores: &[f64]) -> Result<Vec<bool>> {
        scores.iter().map(|s| classify(*s, self.alpha)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Run the full calibration for `model` on a labeled training panel.
pub fn fit_calibration(
    panel: &Panel,
    model: &LagModel,
    horizon: Horizon,
    alpha_grid: &[f64],
    folds: usize,
) -> Result<BayesCalibration> {
    let labels = panel.labels().ok_or(Error::MissingLabels)?;
    let design = build_design(panel, model.w)?;
    let eps = residuals(model, &design)?;
    let min_eps = eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eps = eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let eps_norm = eps
        .iter()
        .map(|e| normalize_residual(*e, min_eps, max_eps))
        .collect::<Result<Vec<_>>>()?;

    let (gamma_means, gamma_scales) = column_moments(model, &design);
    let gamma = active_matrix(model, &design, &gamma_means, &gamma_scales);
    let fit = fit_logit_linear(&gamma, &eps_norm)?;

    let mut calib = BayesCalibration {
        series_id: model.series_id,
        w: model.w,
        horizon,
        min_eps,
        max_eps,
        c: model
            .coeffs
            .iter()
            .zip(&fit.c)
            .map(|(m, c)| ActiveCoeff { j: m.j, k: m.k, c: *c })
            .collect(),
        gamma_means,
        gamma_scales,
        rank_deficient: fit.rank_deficient,
        alpha: 1.0,
        cv_f1: 0.0,
    };
    let scores = calib.scores(model, panel)?;
    let row_labels = &labels[model.series_id][model.w..];
    let alpha = calibrate_alpha(&scores, row_labels, alpha_grid, folds)?;
    calib.alpha = alpha.alpha;
    calib.cv_f1 = alpha.cv_f1;
    Ok(calib)
}
