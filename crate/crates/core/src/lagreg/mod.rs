//! Sparse distributed-lag regression, one model per series.
//!
//! Every series `i` is regressed on the previous `w` values of all `n`
//! series with an L1 penalty:
//!
//! ```text
//!   J(β) = ‖p⁽ⁱ⁾ − Xβ‖² + λ‖β‖₁
//! ```
//!
//! Columns are standardized before fitting and an unpenalized intercept is
//! included; the stored coefficients are in the original units. Only the
//! non-zero coefficients are kept, which is what makes streaming prediction
//! cheap.

pub mod cd;
mod design;
mod ridge;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{GeneratorSpec, Panel};

pub use cd::{CdOptions, CdSolution};
pub use design::{build_design, LagDesign, Standardized, MAX_DENSE_CELLS};
pub use ridge::{fit_iterated_ridge, fit_iterated_ridge_capped, DENSE_SOLVE_CAP};

/// Coefficients at or below this magnitude are treated as zero.
pub const PRUNE_THRESHOLD: f64 = 1e-10;

/// Weight on `s_{t-k}^{(j)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCoeff {
    pub j: usize,
    pub k: usize,
    pub beta: f64,
}

/// A fitted sparse model for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagModel {
    pub series_id: usize,
    pub w: usize,
    pub lambda: f64,
    pub intercept: f64,
    pub sigma: f64,
    pub m: usize,
    /// Non-zero coefficients sorted by `(j, k)`.
    pub coeffs: Vec<LagCoeff>,
}

impl LagModel {
    /// Assemble a model from `(j, k, β)` triples, dropping zeros and sorting.
    pub fn new(
        series_id: usize,
        w: usize,
        lambda: f64,
        intercept: f64,
        sigma: f64,
        coeffs: impl IntoIterator<Item = LagCoeff>,
    ) -> Self {
        let mut coeffs: Vec<LagCoeff> = coeffs
            .into_iter()
            .filter(|c| c.beta.abs() > PRUNE_THRESHOLD)
            .collect();
        coeffs.sort_by_key(|c| (c.j, c.k));
        LagModel {
            series_id,
            w,
            lambda,
            intercept,
            sigma,
            m: coeffs.len(),
            coeffs,
        }
    }

    /// The generator's true model for `target`, with a known noise scale.
    pub fn from_support(spec: &GeneratorSpec, target: usize, w: usize, sigma: f64) -> Self {
        let coeffs = spec
            .support
            .iter()
            .filter(|p| p.target == target)
            .map(|p| LagCoeff {
                j: p.source,
                k: p.lag,
                beta: p.weight,
            });
        LagModel::new(target, w, 0.0, 0.0, sigma, coeffs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m != self.coeffs.len() {
            return Err(Error::Format(format!(
                "model {}: m = {} but {} coefficients stored",
                self.series_id,
                self.m,
                self.coeffs.len()
            )));
        }
        for c in &self.coeffs {
            if c.k == 0 || c.k > self.w {
                return Err(Error::Format(format!(
                    "model {}: lag {} outside 1..={}",
                    self.series_id, c.k, self.w
                )));
            }
            if c.beta == 0.0 || !c.beta.is_finite() {
                return Err(Error::Format(format!(
                    "model {}: invalid stored weight {}",
                    self.series_id, c.beta
                )));
            }
        }
        if self.coeffs.windows(2).any(|p| (p[0].j, p[0].k) >= (p[1].j, p[1].k)) {
            return Err(Error::Format(format!(
                "model {}: coefficients not sorted by (j, k)",
                self.series_id
            )));
        }
        Ok(())
    }

    /// Dense coefficient vector in design column order.
    pub fn dense_coefficients(&self, design: &LagDesign) -> Vec<f64> {
        let mut beta = vec![0.0; design.cols()];
        for c in &self.coeffs {
            beta[design.column_index(c.j, c.k)] = c.beta;
        }
        beta
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: LagModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        LagModel::from_json(&fs::read_to_string(path)?)
    }
}

/// Write `models` as `<dir>/<series_id>.json`.
pub fn save_models(models: &[LagModel], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for m in models {
        m.save(dir.join(format!("{}.json", m.series_id)))?;
    }
    Ok(())
}

/// Read every `<series_id>.json` in `dir`, sorted by series id.
pub fn load_models(dir: impl AsRef<Path>) -> Result<Vec<LagModel>> {
    let mut models = Vec::new();
    for entry in fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        let is_model = path.extension().is_some_and(|e| e == "json")
            && path
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.parse::<usize>().is_ok());
        if is_model {
            models.push(LagModel::load(&path)?);
        }
    }
    models.sort_by_key(|m| m.series_id);
    Ok(models)
}

/// `sqrt(Σ ε̂² / (h − m))`.
pub fn estimate_sigma(residuals: &[f64], h: usize, m: usize) -> Result<f64> {
    if h <= m {
        return Err(Error::DegenerateDof { h, m });
    }
    let ss: f64 = residuals.iter().map(|e| e * e).sum();
    Ok((ss / (h - m) as f64).sqrt())
}

fn check_compatible(model: &LagModel, design: &LagDesign) -> Result<()> {
    if model.w != design.w() {
        return Err(Error::Incompatible(format!(
            "model window {} vs design window {}",
            model.w,
            design.w()
        )));
    }
    if let Some(c) = model.coeffs.iter().find(|c| c.j >= design.n() || c.k == 0 || c.k > design.w()) {
        return Err(Error::Incompatible(format!(
            "coefficient (j={}, k={}) has no column in a {}-series design",
            c.j,
            c.k,
            design.n()
        )));
    }
    if model.series_id >= design.n() {
        return Err(Error::Incompatible(format!(
            "series {} outside a {}-series design",
            model.series_id,
            design.n()
        )));
    }
    Ok(())
}

/// Fitted value for row `r`: intercept plus the sparse dot product, in
/// coefficient order. The streaming detector uses the same summation order.
#[inline]
pub fn fitted_value(model: &LagModel, design: &LagDesign, r: usize) -> f64 {
    let mut acc = model.intercept;
    for c in &model.coeffs {
        acc += c.beta * design.lagged(r, c.j, c.k);
    }
    acc
}

/// `ε̂ = p⁽ⁱ⁾ − Xβ̂ − intercept`, one entry per design row.
pub fn residuals(model: &LagModel, design: &LagDesign) -> Result<Vec<f64>> {
    check_compatible(model, design)?;
    let target = design.target(model.series_id);
    Ok((0..design.rows())
        .map(|r| target[r] - fitted_value(model, design, r))
        .collect())
}

/// Smallest λ for which the fit of `series` is all-zero.
pub fn lambda_max(design: &LagDesign, series: usize) -> Result<f64> {
    let std = design.standardized()?;
    let (yc, _) = centered_target(design, series);
    let c = std.z.tr_mul(&nalgebra::DVector::from_column_slice(&yc));
    Ok(2.0 * c.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

fn centered_target(design: &LagDesign, series: usize) -> (Vec<f64>, f64) {
    let y = design.target(series);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - mean).collect(), mean)
}

/// Undo standardization, prune and attach intercept and σ.
pub(crate) fn finish_model(
    design: &LagDesign,
    std: &Standardized,
    series: usize,
    lambda: f64,
    gamma: &[f64],
    target_mean: f64,
) -> Result<LagModel> {
    let mut intercept = target_mean;
    let mut coeffs = Vec::new();
    for (col, &g) in gamma.iter().enumerate() {
        if g == 0.0 || std.scales[col] == 0.0 {
            continue;
        }
        let beta = g / std.scales[col];
        if beta.abs() > PRUNE_THRESHOLD {
            intercept -= beta * std.means[col];
            let (j, k) = design.column_of(col);
            coeffs.push(LagCoeff { j, k, beta });
        }
    }
    let mut model = LagModel::new(series, design.w(), lambda, intercept, 0.0, coeffs);
    let res = residuals(&model, design)?;
    model.sigma = estimate_sigma(&res, design.h(), model.m)?;
    Ok(model)
}

/// Fit the lasso for `series` by coordinate descent.
pub fn fit_lasso(
    design: &LagDesign,
    series: usize,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LagModel> {
    let opts = CdOptions {
        tol,
        max_iter,
        trace: false,
    };
    fit_lasso_with(design, series, lambda, &opts).map(|(m, _)| m)
}

/// As [`fit_lasso`], also returning the solver's view of the standardized
/// problem.
pub fn fit_lasso_with(
    design: &LagDesign,
    series: usize,
    lambda: f64,
    opts: &CdOptions,
) -> Result<(LagModel, CdSolution)> {
    if series >= design.n() {
        return Err(Error::InvalidArgument(format!(
            "series {series} outside 0..{}",
            design.n()
        )));
    }
    let std = design.standardized()?;
    let (yc, mean) = centered_target(design, series);
    let yv = nalgebra::DVector::from_column_slice(&yc);
    let xty = std.z.tr_mul(&yv);
    let sol = cd::solve_gram(&std.gram, xty.as_slice(), yv.norm_squared(), lambda, opts, None)?;
    let model = finish_model(design, &std, series, lambda, &sol.beta, mean)?;
    Ok((model, sol))
}

/// Largest optimality-condition violation of `model` on the standardized
/// problem it was fit on.
pub fn standardized_kkt(model: &LagModel, design: &LagDesign) -> Result<f64> {
    let std = design.standardized()?;
    let res = residuals(model, design)?;
    let g = std.z.tr_mul(&nalgebra::DVector::from_column_slice(&res));
    let mut gamma = vec![0.0; design.cols()];
    for c in &model.coeffs {
        let col = design.column_index(c.j, c.k);
        gamma[col] = c.beta * std.scales[col];
    }
    Ok(cd::kkt_violation(g.as_slice(), &gamma, model.lambda))
}

/// One model per series, fit in parallel.
pub fn train_all(
    panel: &Panel,
    w: usize,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<LagModel>> {
    let design = build_design(panel, w)?;
    train_design(&design, lambda, tol, max_iter, true)
}

/// Fit every series of `design`; `parallel` selects the rayon path.
pub fn train_design(
    design: &LagDesign,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    parallel: bool,
) -> Result<Vec<LagModel>> {
    design.standardized()?;
    let fit = |i: usize| fit_lasso(design, i, lambda, tol, max_iter).map_err(|e| e.for_series(i));
    if parallel {
        (0..design.n()).into_par_iter().map(fit).collect()
    } else {
        (0..design.n()).map(fit).collect()
    }
}
