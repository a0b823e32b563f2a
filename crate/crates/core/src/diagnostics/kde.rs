//! Gaussian kernel density estimates in one or two dimensions, with the
//! bandwidth chosen by k-fold held-out log-likelihood.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Folds used for bandwidth selection.
pub const CV_FOLDS: usize = 5;
/// Cross-validation runs on an evenly strided subsample of at most this many
/// points; the final model keeps every sample.
pub const CV_MAX_SAMPLES: usize = 2_000;
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone)]
pub struct KdeModel {
    dimension: usize,
    bandwidth: f64,
    /// Row-major points, `dimension` coordinates each.
    points: Vec<f64>,
}

#[inline]
fn std_normal(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

impl KdeModel {
    pub fn new(points: Vec<f64>, dimension: usize, bandwidth: f64) -> Result<Self> {
        if !(dimension == 1 || dimension == 2) {
            return Err(Error::InvalidArgument(format!("unsupported dimension {dimension}")));
        }
        if points.is_empty() || !points.len().is_multiple_of(dimension) {
            return Err(Error::InvalidArgument(
                "points must be a non-empty multiple of the dimension".into(),
            ));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(KdeModel {
            dimension,
            bandwidth,
            points,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dimension);
        density_over(&self.points, self.dimension, self.bandwidth, x, |_| true)
    }
}

fn density_over(
    points: &[f64],
    dim: usize,
    h: f64,
    x: &[f64],
    keep: impl Fn(usize) -> bool,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (idx, p) in points.chunks_exact(dim).enumerate() {
        if !keep(idx) {
            continue;
        }
        count += 1;
        let mut k = 1.0;
        for (a, b) in p.iter().zip(x) {
            k *= std_normal((b - a) / h);
        }
        sum += k;
    }
    if count == 0 {
        0.0
    } else {
        sum / (count as f64 * h.powi(dim as i32))
    }
}

fn column_std(points: &[f64], dim: usize, col: usize) -> f64 {
    let n = (points.len() / dim) as f64;
    let mean = points.iter().skip(col).step_by(dim).sum::<f64>() / n;
    let var = points
        .iter()
        .skip(col)
        .step_by(dim)
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// Rule-of-thumb bandwidth scaled over `0.1×..2×` on a log grid.
pub fn default_bandwidth_grid(points: &[f64], dimension: usize) -> Vec<f64> {
    let n = (points.len() / dimension).max(1) as f64;
    let sd = (0..dimension)
        .map(|c| column_std(points, dimension, c))
        .sum::<f64>()
        / dimension as f64;
    let base = 1.06 * sd * n.powf(-1.0 / (dimension as f64 + 4.0));
    let steps = 12;
    (0..steps)
        .map(|i| {
            let f = (0.1f64).ln() + (20.0f64).ln() * i as f64 / (steps - 1) as f64;
            base * f.exp()
        })
        .collect()
}

/// Mean held-out log-likelihood of bandwidth `h` over `CV_FOLDS` interleaved
/// folds of `points`.
pub fn cv_log_likelihood(points: &[f64], dim: usize, h: f64) -> f64 {
    let n = points.len() / dim;
    let mut total = 0.0;
    for fold in 0..CV_FOLDS {
        for (idx, x) in points.chunks_exact(dim).enumerate() {
            if idx % CV_FOLDS != fold {
                continue;
            }
            let d = density_over(points, dim, h, x, |j| j % CV_FOLDS != fold);
            total += d.max(1e-300).ln();
        }
    }
    total / n as f64
}

/// Fit a KDE, choosing the bandwidth from `bandwidth_grid` by held-out
/// log-likelihood. Ties go to the earlier grid entry.
pub fn fit_kde(points: &[f64], dimension: usize, bandwidth_grid: &[f64]) -> Result<KdeModel> {
    if !(dimension == 1 || dimension == 2) {
        return Err(Error::InvalidArgument(format!("unsupported dimension {dimension}")));
    }
    if !points.len().is_multiple_of(dimension) {
        return Err(Error::InvalidArgument("ragged point list".into()));
    }
    let n = points.len() / dimension;
    if n < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "kde needs at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    if bandwidth_grid.is_empty() || bandwidth_grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument(
            "bandwidth grid must be non-empty and positive".into(),
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    for c in 0..dimension {
        if column_std(points, dimension, c) == 0.0 {
            return Err(Error::Degenerate(format!("coordinate {c} has zero variance")));
        }
    }

    let cv_points: Vec<f64> = if n > CV_MAX_SAMPLES {
        (0..CV_MAX_SAMPLES)
            .flat_map(|i| {
                let idx = i * n / CV_MAX_SAMPLES;
                points[idx * dimension..(idx + 1) * dimension].to_vec()
            })
            .collect()
    } else {
        points.to_vec()
    };
    let mut best = (f64::NEG_INFINITY, bandwidth_grid[0]);
    for &h in bandwidth_grid {
        let ll = cv_log_likelihood(&cv_points, dimension, h);
        if ll > best.0 {
            best = (ll, h);
        }
    }
    KdeModel::new(points.to_vec(), dimension, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_samples(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let xs = normal_samples(10_000, 1);
        let kde = fit_kde(&xs, 1, &default_bandwidth_grid(&xs, 1)).unwrap();
        let expected = 1.0 / (2.0 * PI).sqrt();
        let got = kde.density(&[0.0]);
        assert!((got - expected).abs() / expected < 0.05, "{got} vs {expected}");
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let xs = vec![2.5; 50];
        assert!(matches!(fit_kde(&xs, 1, &[0.1, 0.2]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bad_inputs() {
        let xs = normal_samples(20, 2);
        assert!(fit_kde(&xs[..5], 1, &[0.1]).is_err());
        assert!(fit_kde(&xs, 1, &[]).is_err());
        assert!(fit_kde(&xs, 1, &[0.1, -1.0]).is_err());
        assert!(fit_kde(&xs, 3, &[0.1]).is_err());
    }

    #[test]
    fn density_integrates_to_one_and_is_non_negative() {
        let xs = normal_samples(3_000, 3);
        let kde = fit_kde(&xs, 1, &default_bandwidth_grid(&xs, 1)).unwrap();
        let h = kde.bandwidth();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * h;
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
        let res = 512;
        let dx = (hi - lo) / res as f64;
        let mut mass = 0.0;
        for i in 0..res {
            let d = kde.density(&[lo + (i as f64 + 0.5) * dx]);
            assert!(d >= 0.0);
            mass += d * dx;
        }
        assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
    }

    #[test]
    fn bivariate_density_integrates_to_one() {
        let xs = normal_samples(1_000, 4);
        let ys = normal_samples(1_000, 5);
        let pts: Vec<f64> = xs.iter().zip(&ys).flat_map(|(x, y)| [*x, *y]).collect();
        let kde = fit_kde(&pts, 2, &default_bandwidth_grid(&pts, 2)).unwrap();
        let (lo, hi, res) = (-6.0, 6.0, 96);
        let dx = (hi - lo) / res as f64;
        let mut mass = 0.0;
        for a in 0..res {
            for b in 0..res {
                let p = [lo + (a as f64 + 0.5) * dx, lo + (b as f64 + 0.5) * dx];
                mass += kde.density(&p) * dx * dx;
            }
        }
        assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
    }

    #[test]
    fn cv_prefers_reasonable_bandwidth() {
        let xs = normal_samples(1_000, 6);
        let ll_small = cv_log_likelihood(&xs, 1, 0.005);
        let ll_mid = cv_log_likelihood(&xs, 1, 0.3);
        let ll_large = cv_log_likelihood(&xs, 1, 5.0);
        assert!(ll_mid > ll_small && ll_mid > ll_large);
    }
}
