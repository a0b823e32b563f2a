//! Iterated-ridge route to the same lasso solution.
//!
//! Replacing `|β_j|` by `β_j² / |β̃_j|` around the current iterate `β̃` turns
//! the penalty into a ridge term, giving the update
//!
//! ```text
//!   β ← (XᵀX + (λ/2)·diag(|β̃|)⁻¹)⁻¹ Xᵀp
//! ```
//!
//! The `λ/2` keeps the fixed point on the optimality conditions of
//! `‖p − Xβ‖² + λ‖β‖₁`, so this solver can be checked against coordinate
//! descent. It needs a dense solve per step and is meant for verification
//! on small designs.

use nalgebra::{DMatrix, DVector};

use super::{centered_target, finish_model, LagDesign, LagModel};
use crate::error::{Error, Result};

/// Default column cap for the dense solve.
pub const DENSE_SOLVE_CAP: usize = 5_000;

/// Run `steps` iterated-ridge updates from `beta0` (original units, one
/// entry per design column, none exactly zero).
pub fn fit_iterated_ridge(
    design: &LagDesign,
    series: usize,
    lambda: f64,
    beta0: &[f64],
    steps: usize,
) -> Result<LagModel> {
    fit_iterated_ridge_capped(design, series, lambda, beta0, steps, DENSE_SOLVE_CAP)
}

pub fn fit_iterated_ridge_capped(
    design: &LagDesign,
    series: usize,
    lambda: f64,
    beta0: &[f64],
    steps: usize,
    max_columns: usize,
) -> Result<LagModel> {
    let p = design.cols();
    if p > max_columns {
        return Err(Error::InvalidArgument(format!(
            "iterated ridge is capped at {max_columns} columns, design has {p}"
        )));
    }
    if beta0.len() != p {
        return Err(Error::Shape {
            expected: p,
            found: beta0.len(),
        });
    }
    if series >= design.n() {
        return Err(Error::InvalidArgument(format!("series {series} outside 0..{}", design.n())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let std = design.standardized()?;
    let (yc, mean) = centered_target(design, series);
    let xty = std.z.tr_mul(&DVector::from_column_slice(&yc));

    // Iterate on the standardized scale, where the lasso is posed.
    let mut gamma: Vec<f64> = beta0.iter().zip(&std.scales).map(|(b, s)| b * s).collect();
    let half = lambda / 2.0;
    for _ in 0..steps {
        let mut system: DMatrix<f64> = std.gram.clone();
        if half > 0.0 {
            for (col, g) in gamma.iter().enumerate() {
                if *g == 0.0 {
                    return Err(Error::DegenerateWeight { column: col });
                }
                system[(col, col)] += half / g.abs();
            }
        }
        let next = match system.clone().cholesky() {
            Some(chol) => chol.solve(&xty),
            None => system
                .lu()
                .solve(&xty)
                .ok_or_else(|| Error::Singular("iterated ridge system".into()))?,
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("iterated ridge produced non-finite weights".into()));
        }
        gamma = next.as_slice().to_vec();
    }

    if steps == 0 {
        // Hand back beta0 itself rather than a rescaled copy.
        let coeffs = beta0.iter().enumerate().map(|(col, &beta)| {
            let (j, k) = design.column_of(col);
            super::LagCoeff { j, k, beta }
        });
        let mut model = LagModel::new(series, design.w(), lambda, 0.0, 0.0, coeffs);
        model.intercept = mean
            - model
                .coeffs
                .iter()
                .map(|c| c.beta * std.means[design.column_index(c.j, c.k)])
                .sum::<f64>();
        let res = super::residuals(&model, design)?;
        model.sigma = super::estimate_sigma(&res, design.h(), model.m)?;
        return Ok(model);
    }
    finish_model(design, &std, series, lambda, &gamma, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagreg::{build_design, fit_lasso};
    use crate::panel::{generate_panel, GeneratorSpec, Panel};

    fn panel() -> Panel {
        generate_panel(&GeneratorSpec {
            n: 2,
            h: 300,
            w_true: 5,
            support: vec![],
            noise_sigma: 1.0,
            anomaly_rate: 0.0,
            anomaly_magnitude: 0.0,
            seed: 21,
        })
        .unwrap()
    }

    #[test]
    fn zero_steps_is_identity() {
        let d = build_design(&panel(), 2).unwrap();
        let beta0 = vec![0.5, -0.25, 0.125, 2.0];
        let model = fit_iterated_ridge(&d, 0, 3.0, &beta0, 0).unwrap();
        assert_eq!(model.dense_coefficients(&d), beta0);
    }

    #[test]
    fn no_penalty_is_least_squares() {
        let d = build_design(&panel(), 2).unwrap();
        let ols = fit_lasso(&d, 1, 0.0, 1e-12, 100_000).unwrap();
        for beta0 in [vec![1.0; 4], vec![-3.0, 0.1, 7.0, 1e-3]] {
            let model = fit_iterated_ridge(&d, 1, 0.0, &beta0, 1).unwrap();
            for (a, b) in model.dense_coefficients(&d).iter().zip(ols.dense_coefficients(&d)) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_weight_rejected() {
        let d = build_design(&panel(), 2).unwrap();
        let err = fit_iterated_ridge(&d, 0, 1.0, &[1.0, 0.0, 1.0, 1.0], 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeight { column: 1 }));
    }

    #[test]
    fn column_cap_enforced() {
        let d = build_design(&panel(), 5).unwrap();
        let err = fit_iterated_ridge_capped(&d, 0, 1.0, &[1.0; 10], 1, 8).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn singular_system_reported() {
        // A constant series produces all-zero standardized columns.
        let p = Panel::new(vec![vec![1.0; 50]], None).unwrap();
        let d = build_design(&p, 2).unwrap();
        let err = fit_iterated_ridge(&d, 0, 0.0, &[1.0, 1.0], 1).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }
}
