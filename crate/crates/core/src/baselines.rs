//! Comparators for the regression detector: a multivariate Gaussian
//! density threshold, and the train-on-test oracle.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{held_out_counts, ConfusionCounts, PipelineConfig};
use crate::panel::Panel;

/// Joint Gaussian over the `n` series values at one timestep.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub mean: DVector<f64>,
    /// Sample covariance plus `δI`.
    pub covariance: DMatrix<f64>,
    pub ridge: f64,
    /// Alert when the log-density falls below this.
    pub log_density_threshold: Option<f64>,
    /// Fewer timesteps than series; the ridge dominates the fit.
    pub underdetermined: bool,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    scales: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianVerdict {
    pub t: usize,
    pub log_density: f64,
    pub mahalanobis_sq: f64,
    pub is_anomaly: bool,
    /// Series with the largest standardized deviation; alerts are charged to it.
    pub series_id: usize,
}

/// Sample mean and covariance across timesteps, regularized by
/// `δ = 1e-6 · trace / n` (at least `1e-12`).
pub fn fit_gaussian(panel: &Panel) -> Result<GaussianModel> {
    let (n, h) = (panel.n(), panel.h());
    if n == 0 || h == 0 {
        return Err(Error::Empty("gaussian baseline needs a non-empty panel".into()));
    }
    let mean = DVector::from_iterator(n, (0..n).map(|i| panel.series(i).iter().sum::<f64>() / h as f64));
    let denom = if h > 1 { (h - 1) as f64 } else { 1.0 };
    let mut cov = DMatrix::zeros(n, n);
    for a in 0..n {
        let sa = panel.series(a);
        for b in a..n {
            let sb = panel.series(b);
            let s: f64 = sa
                .iter()
                .zip(sb)
                .map(|(x, y)| (x - mean[a]) * (y - mean[b]))
                .sum();
            cov[(a, b)] = s / denom;
            cov[(b, a)] = s / denom;
        }
    }
    let ridge = (1e-6 * cov.trace() / n as f64).max(1e-12);
    for i in 0..n {
        cov[(i, i)] += ridge;
    }
    GaussianModel::new(mean, cov, ridge, h <= n)
}

impl GaussianModel {
    fn new(mean: DVector<f64>, covariance: DMatrix<f64>, ridge: f64, underdetermined: bool) -> Result<Self> {
        let chol = Cholesky::new(covariance.clone())
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let scales = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
        Ok(GaussianModel {
            mean,
            covariance,
            ridge,
            log_density_threshold: None,
            underdetermined,
            chol,
            log_det,
            scales,
        })
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn mahalanobis_sq(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.n() {
            return Err(Error::Shape {
                expected: self.n(),
                found: point.len(),
            });
        }
        let diff = DVector::from_column_slice(point) - &self.mean;
        let z = self.chol.l().solve_lower_triangular(&diff).ok_or_else(|| Error::Singular("cholesky factor".into()))?;
        Ok(z.norm_squared())
    }

    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        let m = self.mahalanobis_sq(point)?;
        Ok(self.log_density_from_radius(m))
    }

    fn log_density_from_radius(&self, mahalanobis_sq: f64) -> f64 {
        -0.5 * (self.n() as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_det + mahalanobis_sq)
    }

    /// Squared Mahalanobis radius at which the log-density equals `threshold`.
    pub fn radius_sq_for_threshold(&self, threshold: f64) -> f64 {
        -2.0 * threshold - self.n() as f64 * (2.0 * std::f64::consts::PI).ln() - self.log_det
    }

    pub fn threshold_for_radius_sq(&self, radius_sq: f64) -> f64 {
        self.log_density_from_radius(radius_sq)
    }

    fn attribute(&self, point: &[f64]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (x, s)) in point.iter().zip(&self.scales).enumerate() {
            let z = ((x - self.mean[i]) / s).abs();
            if z > best.1 {
                best = (i, z);
            }
        }
        best.0
    }
}

pub fn gaussian_detect(model: &GaussianModel, point: &[f64], threshold: f64) -> Result<GaussianVerdict> {
    let m = model.mahalanobis_sq(point)?;
    let ld = model.log_density_from_radius(m);
    Ok(GaussianVerdict {
        t: 0,
        log_density: ld,
        mahalanobis_sq: m,
        is_anomaly: ld < threshold,
        series_id: model.attribute(point),
    })
}

/// Verdicts for timesteps `range` of `panel`.
pub fn gaussian_verdicts(
    model: &GaussianModel,
    panel: &Panel,
    range: std::ops::Range<usize>,
    threshold: f64,
) -> Result<Vec<GaussianVerdict>> {
    range
        .map(|t| {
            let mut v = gaussian_detect(model, &panel.row(t), threshold)?;
            v.t = t;
            Ok(v)
        })
        .collect()
}

/// Per-cell counts: an alert marks only its attributed series.
pub fn score_gaussian(verdicts: &[GaussianVerdict], panel: &Panel) -> Result<ConfusionCounts> {
    let labels = panel.labels().ok_or(Error::MissingLabels)?;
    let mut counts = ConfusionCounts::default();
    for v in verdicts {
        for (i, series) in labels.iter().enumerate() {
            counts.record(v.is_anomaly && v.series_id == i, series[v.t]);
        }
    }
    Ok(counts)
}

/// Log-density threshold maximizing per-cell F1 on `range` of a labeled
/// panel. Ties go to the lower threshold (fewer alerts).
pub fn select_threshold(model: &GaussianModel, panel: &Panel, range: std::ops::Range<usize>) -> Result<f64> {
    let labels = panel.labels().ok_or(Error::MissingLabels)?;
    let mut verdicts = gaussian_verdicts(model, panel, range.clone(), f64::NEG_INFINITY)?;
    let positives: u64 = range
        .clone()
        .map(|t| labels.iter().filter(|s| s[t]).count() as u64)
        .sum();
    if positives == 0 {
        return Err(Error::UndefinedF1("no labeled anomalies in the validation range".into()));
    }
    verdicts.sort_by(|a, b| a.log_density.total_cmp(&b.log_density));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best = (0.0, 0usize);
    for (k, v) in verdicts.iter().enumerate() {
        if labels[v.series_id][v.t] {
            tp += 1;
        } else {
            fp += 1;
        }
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + (positives - tp)) as f64;
        if f1 > best.0 {
            best = (f1, k + 1);
        }
    }
    let k = best.1;
    Ok(if k == 0 {
        verdicts[0].log_density - 1.0
    } else if k == verdicts.len() {
        verdicts[k - 1].log_density + 1.0
    } else {
        0.5 * (verdicts[k - 1].log_density + verdicts[k].log_density)
    })
}

/// Train the regression detector on `panel` and score it on the same panel.
/// An upper reference, not a generalization estimate.
pub fn oracle_counts(panel: &Panel, cfg: &PipelineConfig) -> Result<ConfusionCounts> {
    if !panel.has_labels() {
        return Err(Error::MissingLabels);
    }
    held_out_counts(panel, panel, cfg)
}

pub fn oracle_f1(panel: &Panel, cfg: &PipelineConfig) -> Result<f64> {
    oracle_counts(panel, cfg)?.f1()
}
