use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::kde::{default_bandwidth_grid, fit_kde};
use crate::error::{Error, Result};
use crate::panel::Panel;

pub const DEFAULT_RESOLUTION: usize = 128;
pub const MIN_RESOLUTION: usize = 32;
pub const MIN_PAIR_SAMPLES: usize = 100;
pub const MAX_GRID_SERIES: usize = 50;
/// Box padding around the data, in bandwidths.
const PADDING: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiEstimate {
    /// Clamped at zero.
    pub value: f64,
    /// Quadrature result before clamping.
    pub raw: f64,
    pub bandwidth: f64,
}

fn zscore(xs: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    Ok(xs.iter().map(|v| (v - mean) / sd).collect())
}

/// Midpoints of `resolution` cells covering `[lo, hi]`, and the cell width.
fn axis(values: &[f64], pad: f64, resolution: usize) -> (Vec<f64>, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - pad;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad;
    let step = (hi - lo) / resolution as f64;
    ((0..resolution).map(|i| lo + (i as f64 + 0.5) * step).collect(), step)
}

/// Kernel weights `φ((g_a − x_i)/h)/h` as a `resolution × N` matrix.
fn kernel_matrix(grid: &[f64], xs: &[f64], h: f64) -> DMatrix<f64> {
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    DMatrix::from_fn(grid.len(), xs.len(), |a, i| {
        let z = (grid[a] - xs[i]) / h;
        norm * (-0.5 * z * z).exp()
    })
}

/// Mutual information of two equally long samples, in nats.
///
/// Both inputs are z-scored, a bivariate Gaussian KDE with a shared
/// bandwidth is fit to the pairs, and `∬ p log(p / (p_x p_y))` is evaluated
/// with the midpoint rule on a `resolution²` grid over the data box padded
/// by three bandwidths. The marginals are those of the fitted joint
/// density, i.e. one-dimensional KDEs with the same bandwidth.
pub fn mutual_information_estimate(xs: &[f64], ys: &[f64], resolution: usize) -> Result<MiEstimate> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < MIN_PAIR_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "mutual information needs at least {MIN_PAIR_SAMPLES} pairs, got {}",
            xs.len()
        )));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    let xs = zscore(xs)?;
    let ys = zscore(ys)?;
    let pairs: Vec<f64> = xs.iter().zip(&ys).flat_map(|(x, y)| [*x, *y]).collect();
    let joint = fit_kde(&pairs, 2, &default_bandwidth_grid(&pairs, 2))?;
    let h = joint.bandwidth();

    let (gx, dx) = axis(&xs, PADDING * h, resolution);
    let (gy, dy) = axis(&ys, PADDING * h, resolution);
    let kx = kernel_matrix(&gx, &xs, h);
    let ky = kernel_matrix(&gy, &ys, h);
    let n = xs.len() as f64;
    let density = (&kx * ky.transpose()) / n;
    let px: Vec<f64> = kx.row_iter().map(|r| r.sum() / n).collect();
    let py: Vec<f64> = ky.row_iter().map(|r| r.sum() / n).collect();

    let cell = dx * dy;
    let mut total = 0.0;
    for a in 0..resolution {
        for b in 0..resolution {
            let p = density[(a, b)];
            let q = px[a] * py[b];
            if p > 0.0 && q > 0.0 {
                total += p * (p / q).ln() * cell;
            }
        }
    }
    Ok(MiEstimate {
        value: total.max(0.0),
        raw: total,
        bandwidth: h,
    })
}

pub fn mutual_information(xs: &[f64], ys: &[f64], resolution: usize) -> Result<f64> {
    mutual_information_estimate(xs, ys, resolution).map(|e| e.value)
}

/// Pairwise mutual information between selected series.
#[derive(Debug, Clone, Serialize)]
pub struct MiGrid {
    pub series_ids: Vec<usize>,
    /// `values[a][b]` for `series_ids[a]`, `series_ids[b]`; `None` where the
    /// estimate failed.
    pub values: Vec<Vec<Option<f64>>>,
    /// Pre-clamp estimates.
    pub raw: Vec<Vec<Option<f64>>>,
    pub failures: Vec<(usize, usize, String)>,
    pub resolution: usize,
}

impl MiGrid {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = self.series_ids.iter().map(|i| format!("series_{i}")).collect();
        writeln!(out, "series,{}", header.join(","))?;
        for (a, row) in self.values.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .map(|v| v.map_or_else(String::new, |x| format!("{x:?}")))
                .collect();
            writeln!(out, "{},{}", self.series_ids[a], cells.join(","))?;
        }
        Ok(())
    }
}

/// Fill the symmetric grid of pairwise estimates; each cell is computed once
/// and mirrored.
pub fn mi_grid(panel: &Panel, series_ids: &[usize], resolution: usize) -> Result<MiGrid> {
    let k = series_ids.len();
    if k < 2 {
        return Err(Error::InvalidArgument("need at least two series".into()));
    }
    if k > MAX_GRID_SERIES {
        return Err(Error::InvalidArgument(format!(
            "mutual-information grid is capped at {MAX_GRID_SERIES} series, got {k}"
        )));
    }
    if let Some(bad) = series_ids.iter().find(|&&i| i >= panel.n()) {
        return Err(Error::InvalidArgument(format!("series {bad} outside 0..{}", panel.n())));
    }
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(a, b)| {
            let xs = panel.series(series_ids[a]);
            let ys = panel.series(series_ids[b]);
            ((a, b), mutual_information_estimate(xs, ys, resolution))
        })
        .collect();

    let mut values = vec![vec![None; k]; k];
    let mut raw = vec![vec![None; k]; k];
    let mut failures = Vec::new();
    for ((a, b), res) in results {
        match res {
            Ok(est) => {
                values[a][b] = Some(est.value);
                values[b][a] = Some(est.value);
                raw[a][b] = Some(est.raw);
                raw[b][a] = Some(est.raw);
            }
            Err(e) => failures.push((series_ids[a], series_ids[b], e.to_string())),
        }
    }
    Ok(MiGrid {
        series_ids: series_ids.to_vec(),
        values,
        raw,
        failures,
        resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn correlated(n: usize, rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            xs.push(a);
            ys.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        (xs, ys)
    }

    #[test]
    fn argument_checks() {
        let (xs, ys) = correlated(200, 0.5, 1);
        assert!(mutual_information(&xs[..50], &ys[..50], 64).is_err());
        assert!(mutual_information(&xs, &ys[..150], 64).is_err());
        assert!(mutual_information(&xs, &ys, 16).is_err());
        assert!(matches!(mutual_information(&xs, &vec![1.0; 200], 64), Err(Error::Degenerate(_))));
    }

    #[test]
    fn symmetric_in_arguments() {
        let (xs, ys) = correlated(800, 0.6, 2);
        let a = mutual_information_estimate(&xs, &ys, 64).unwrap();
        let b = mutual_information_estimate(&ys, &xs, 64).unwrap();
        assert!((a.raw - b.raw).abs() < 1e-6);
    }

    #[test]
    fn affine_maps_barely_move_the_estimate() {
        let (xs, ys) = correlated(800, 0.7, 3);
        let base = mutual_information(&xs, &ys, 64).unwrap();
        let xs2: Vec<f64> = xs.iter().map(|v| 40.0 + 7.5 * v).collect();
        let ys2: Vec<f64> = ys.iter().map(|v| -3.0 + 0.01 * v).collect();
        let moved = mutual_information(&xs2, &ys2, 64).unwrap();
        assert!((base - moved).abs() < 0.02);
    }

    #[test]
    fn lagged_copy_dominates_the_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 600;
        let s0: Vec<f64> = (0..h).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut s1 = vec![0.0];
        s1.extend(s0[..h - 1].iter().map(|v| v + 0.1 * rng.random::<f64>()));
        let s2: Vec<f64> = (0..h).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Compare the lag-aligned pair against independent pairs.
        let p = Panel::new(vec![s0[..h - 1].to_vec(), s1[1..].to_vec(), s2[1..].to_vec()], None).unwrap();
        let grid = mi_grid(&p, &[0, 1, 2], 48).unwrap();
        let v = |a: usize, b: usize| grid.values[a][b].unwrap();
        assert!(v(0, 1) > v(0, 2) && v(0, 1) > v(1, 2));
        assert!(v(0, 2) < 0.05 && v(1, 2) < 0.05);
        for a in 0..3 {
            for b in 0..3 {
                assert!((v(a, b) - v(b, a)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn grid_limits() {
        let p = Panel::new(vec![vec![0.0; 200]; 3], None).unwrap();
        assert!(mi_grid(&p, &[0], 32).is_err());
        assert!(mi_grid(&p, &[0, 7], 32).is_err());
        let too_many: Vec<usize> = (0..51).collect();
        assert!(mi_grid(&p, &too_many, 32).is_err());
        // Constant series: every cell fails but the grid is still returned.
        let g = mi_grid(&p, &[0, 1], 32).unwrap();
        assert_eq!(g.failures.len(), 3);
        assert!(g.values.iter().flatten().all(Option::is_none));
    }
}
