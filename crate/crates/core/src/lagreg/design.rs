use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::Panel;

/// Largest design (rows × columns) that will be materialized in memory.
pub const MAX_DENSE_CELLS: usize = 100_000_000;

/// Lagged regressors for every series of a panel.
///
/// Row `r` corresponds to target time `t = w + r`; column `column_index(j, k)`
/// holds `s_{t-k}^{(j)}` for lags `k` in `1..=w`. The matrix is never stored
/// densely unless a solver asks for it, so large shapes can be
/// described without allocating them.
#[derive(Debug, Clone)]
pub struct LagDesign {
    w: usize,
    series: Arc<Vec<Vec<f64>>>,
    standardized: OnceLock<Arc<Standardized>>,
}

/// Column-standardized copy of a design together with its Gram matrix.
#[derive(Debug)]
pub struct Standardized {
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a constant column.
    pub scales: Vec<f64>,
    pub z: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

impl LagDesign {
    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn h(&self) -> usize {
        self.series[0].len()
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn rows(&self) -> usize {
        self.h() - self.w
    }

    pub fn cols(&self) -> usize {
        self.w * self.n()
    }

    pub fn column_index(&self, source: usize, lag: usize) -> usize {
        debug_assert!(source < self.n() && (1..=self.w).contains(&lag));
        source * self.w + (lag - 1)
    }

    /// Inverse of [`column_index`](Self::column_index): `(source, lag)`.
    pub fn column_of(&self, col: usize) -> (usize, usize) {
        (col / self.w, col % self.w + 1)
    }

    /// `s_{t-lag}^{(source)}` for the target time of row `r`.
    #[inline]
    pub fn lagged(&self, r: usize, source: usize, lag: usize) -> f64 {
        self.series[source][self.w + r - lag]
    }

    pub fn value(&self, r: usize, col: usize) -> f64 {
        let (j, k) = self.column_of(col);
        self.lagged(r, j, k)
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.cols()).map(|c| self.value(r, c)).collect()
    }

    /// Targets `p^{(i)}`: series `i` from time `w` onwards.
    pub fn target(&self, series: usize) -> &[f64] {
        &self.series[series][self.w..]
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        Ok(DMatrix::from_fn(self.rows(), self.cols(), |r, c| self.value(r, c)))
    }

    fn check_dense(&self) -> Result<()> {
        let (rows, cols) = (self.rows(), self.cols());
        if rows.saturating_mul(cols) > MAX_DENSE_CELLS {
            return Err(Error::DesignTooLarge {
                rows,
                cols,
                cap: MAX_DENSE_CELLS,
            });
        }
        Ok(())
    }

    /// Standardized design and Gram matrix, computed once and shared by every
    /// fit on this design.
    pub fn standardized(&self) -> Result<Arc<Standardized>> {
        if let Some(s) = self.standardized.get() {
            return Ok(Arc::clone(s));
        }
        self.check_dense()?;
        let s = Arc::new(standardize(self));
        Ok(Arc::clone(self.standardized.get_or_init(|| s)))
    }
}

fn standardize(design: &LagDesign) -> Standardized {
    let (rows, cols) = (design.rows(), design.cols());
    let mut z = DMatrix::zeros(rows, cols);
    let mut means = vec![0.0; cols];
    let mut scales = vec![0.0; cols];
    for c in 0..cols {
        let (j, k) = design.column_of(c);
        let column = &design.series[j][design.w - k..design.w - k + rows];
        let mean = column.iter().sum::<f64>() / rows as f64;
        let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
        let sd = var.sqrt();
        means[c] = mean;
        // Columns with no spread relative to their magnitude stay at zero.
        if sd > 1e-12 * mean.abs().max(1.0) {
            scales[c] = sd;
            for (dst, v) in z.column_mut(c).iter_mut().zip(column) {
                *dst = (v - mean) / sd;
            }
        }
    }
    let gram = z.tr_mul(&z);
    Standardized {
        means,
        scales,
        z,
        gram,
    }
}

/// Build the lag design of `panel` for window `w`.
pub fn build_design(panel: &Panel, w: usize) -> Result<LagDesign> {
    let h = panel.h();
    if w == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    if w >= h {
        return Err(Error::InsufficientHistory {
            needed: w + 1,
            available: h,
        });
    }
    let series = (0..panel.n()).map(|i| panel.series(i).to_vec()).collect();
    Ok(LagDesign {
        w,
        series: Arc::new(series),
        standardized: OnceLock::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(values: Vec<Vec<f64>>) -> Panel {
        Panel::new(values, None).unwrap()
    }

    #[test]
    fn minimal_design() {
        let d = build_design(&panel(vec![vec![10.0, 20.0, 30.0]]), 1).unwrap();
        assert_eq!((d.rows(), d.cols()), (2, 1));
        assert_eq!(d.row(0), vec![10.0]);
        assert_eq!(d.row(1), vec![20.0]);
        assert_eq!(d.target(0), &[20.0, 30.0]);
    }

    #[test]
    fn two_series_dimensions() {
        let d = build_design(&panel(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]), 1).unwrap();
        assert_eq!((d.rows(), d.cols()), (2, 2));
        assert_eq!(d.to_matrix().unwrap().row(1).iter().copied().collect::<Vec<_>>(), vec![2.0, 5.0]);
    }

    #[test]
    fn rows_hold_lagged_values() {
        let a: Vec<f64> = (0..12).map(f64::from).collect();
        let b: Vec<f64> = (0..12).map(|v| 100.0 + f64::from(v)).collect();
        let d = build_design(&panel(vec![a.clone(), b.clone()]), 3).unwrap();
        for r in 0..d.rows() {
            let t = 3 + r;
            for (j, s) in [&a, &b].into_iter().enumerate() {
                for k in 1..=3 {
                    assert_eq!(d.value(r, d.column_index(j, k)), s[t - k]);
                }
            }
        }
    }

    #[test]
    fn column_index_is_a_bijection() {
        let d = build_design(&panel(vec![vec![0.0; 20]; 3]), 4).unwrap();
        let mut seen = vec![false; d.cols()];
        for j in 0..3 {
            for k in 1..=4 {
                let c = d.column_index(j, k);
                assert!(!seen[c]);
                seen[c] = true;
                assert_eq!(d.column_of(c), (j, k));
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn window_must_leave_history() {
        let p = panel(vec![vec![1.0, 2.0, 3.0]]);
        assert!(matches!(build_design(&p, 3), Err(Error::InsufficientHistory { .. })));
        assert!(build_design(&p, 0).is_err());
    }

    #[test]
    fn month_of_minutes_shape_without_materializing() {
        let p = panel(vec![vec![0.0; 43_200]; 4]);
        let d = build_design(&p, 7_200).unwrap();
        assert_eq!((d.rows(), d.cols()), (36_000, 28_800));
        assert!(matches!(d.standardized(), Err(Error::DesignTooLarge { .. })));
    }

    #[test]
    fn standardized_columns() {
        let a: Vec<f64> = (0..50).map(|v| (f64::from(v) * 0.7).sin() * 3.0 + 5.0).collect();
        let d = build_design(&panel(vec![a, vec![2.0; 50]]), 2).unwrap();
        let s = d.standardized().unwrap();
        for c in 0..2 {
            let col = s.z.column(c);
            assert!(col.mean().abs() < 1e-12);
            assert!((col.norm_squared() / d.rows() as f64 - 1.0).abs() < 1e-12);
        }
        // Constant source: zero scale, zero column.
        assert_eq!(s.scales[2], 0.0);
        assert_eq!(s.z.column(3).norm(), 0.0);
    }
}
