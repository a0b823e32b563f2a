use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    OneSidedUpper,
    OneSidedLower,
}

/// `(observed − predicted) / σ`.
pub fn t_statistic(observed: f64, predicted: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidScale(sigma));
    }
    Ok((observed - predicted) / sigma)
}

/// `(mean(samples) − predicted) / (σ / √d)`.
pub fn smoothed_t_statistic(samples: &[f64], predicted: f64, sigma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("smoothed test needs at least one sample".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidScale(sigma));
    }
    let d = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / d;
    Ok((mean - predicted) / (sigma / d.sqrt()))
}

/// Normal-approximation p-value of `t`.
pub fn p_value(t: f64, sidedness: Sidedness) -> f64 {
    let p = match sidedness {
        Sidedness::TwoSided => erfc(t.abs() / std::f64::consts::SQRT_2),
        Sidedness::OneSidedUpper => 0.5 * erfc(t / std::f64::consts::SQRT_2),
        Sidedness::OneSidedLower => 0.5 * erfc(-t / std::f64::consts::SQRT_2),
    };
    if p.is_nan() {
        // Only reachable for NaN input.
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}
