//! Streaming residual t-test detector.
//!
//! For every incoming point the detector predicts each series from its
//! buffered lag history (values strictly before now), compares the mean of
//! the last `d` observations against that prediction in units of
//! `σ / √d`, and raises an alert when the p-value falls below the configured
//! threshold. The arithmetic per step is `Σᵢ mᵢ + n·d` multiply-adds.

mod ring;
mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagreg::LagModel;
use crate::panel::Panel;

pub use ring::RingBuffer;
pub use stats::{p_value, smoothed_t_statistic, t_statistic, Sidedness};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub p_value_threshold: f64,
    /// Number of most recent observations averaged by the test.
    pub d: usize,
    #[serde(default)]
    pub sidedness: Sidedness,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            p_value_threshold: 1e-5,
            d: 1,
            sidedness: Sidedness::TwoSided,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_value_threshold > 0.0 && self.p_value_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p-value threshold must lie in (0, 1), got {}",
                self.p_value_threshold
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("smoothing width d must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVerdict {
    pub series_id: usize,
    pub t: usize,
    pub prediction: f64,
    /// The new observation, or the mean of the last `d` when smoothing.
    pub observed: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub is_anomaly: bool,
}

/// Lag history for every series plus the index of the next timestep.
#[derive(Debug, Clone)]
pub struct StreamState {
    buffers: Vec<RingBuffer>,
    cursor: usize,
}

impl StreamState {
    pub fn new(n: usize, capacity: usize) -> Self {
        StreamState {
            buffers: (0..n).map(|_| RingBuffer::new(capacity.max(1))).collect(),
            cursor: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.buffers.len()
    }

    /// Time index the next pushed point will receive.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Number of buffered points per series.
    pub fn history(&self) -> usize {
        self.buffers.first().map_or(0, RingBuffer::len)
    }

    pub fn buffer(&self, series: usize) -> &RingBuffer {
        &self.buffers[series]
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.buffers.len() {
            return Err(Error::Shape {
                expected: self.buffers.len(),
                found: point.len(),
            });
        }
        for (b, v) in self.buffers.iter_mut().zip(point) {
            b.push(*v);
        }
        self.cursor += 1;
        Ok(())
    }
}

/// `intercept + Σ β_{j,k} · s_{now−k}^{(j)}` over the model's sparse support.
pub fn predict_next(state: &StreamState, model: &LagModel) -> Result<f64> {
    let available = state.history();
    if available < model.w {
        return Err(Error::InsufficientHistory {
            needed: model.w,
            available,
        });
    }
    if let Some(c) = model.coeffs.iter().find(|c| c.j >= state.n()) {
        return Err(Error::Incompatible(format!(
            "coefficient references series {} in a {}-series stream",
            c.j,
            state.n()
        )));
    }
    Ok(predict_unchecked(state, model))
}

#[inline]
fn predict_unchecked(state: &StreamState, model: &LagModel) -> f64 {
    let mut acc = model.intercept;
    for c in &model.coeffs {
        acc += c.beta * state.buffers[c.j].lag(c.k);
    }
    acc
}

/// One model per series plus the stream they are applied to.
#[derive(Debug, Clone)]
pub struct Detector {
    models: Vec<LagModel>,
    config: DetectorConfig,
    state: StreamState,
    required: usize,
    last_ops: u64,
}

impl Detector {
    /// `models[i]` must be the model of series `i`.
    pub fn new(models: Vec<LagModel>, config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let n = models.len();
        if n == 0 {
            return Err(Error::Empty("detector needs at least one model".into()));
        }
        for (i, m) in models.iter().enumerate() {
            if m.series_id != i {
                return Err(Error::InvalidArgument(format!(
                    "model at position {i} is for series {}",
                    m.series_id
                )));
            }
            if !(m.sigma > 0.0 && m.sigma.is_finite()) {
                return Err(Error::InvalidScale(m.sigma).for_series(i));
            }
            m.validate().map_err(|e| e.for_series(i))?;
            if let Some(c) = m.coeffs.iter().find(|c| c.j >= n) {
                return Err(Error::Incompatible(format!(
                    "model {i} references series {} of {n}",
                    c.j
                )));
            }
        }
        let w = models.iter().map(|m| m.w).max().unwrap_or(1);
        let required = w.max(config.d - 1);
        Ok(Detector {
            state: StreamState::new(n, required),
            models,
            config,
            required,
            last_ops: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.models.len()
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn models(&self) -> &[LagModel] {
        &self.models
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    /// Points that must be pushed before the first [`step`](Self::step).
    pub fn required_history(&self) -> usize {
        self.required
    }

    pub fn is_warm(&self) -> bool {
        self.state.history() >= self.required
    }

    /// Arithmetic operations performed by the last step.
    pub fn last_step_ops(&self) -> u64 {
        self.last_ops
    }

    /// `Σ mᵢ + n·d`.
    pub fn ops_per_step(&self) -> u64 {
        let m: usize = self.models.iter().map(|m| m.m).sum();
        (m + self.n() * self.config.d) as u64
    }

    /// Feed history without testing it.
    pub fn warm(&mut self, point: &[f64]) -> Result<()> {
        self.state.push(point)
    }

    pub fn step(&mut self, point: &[f64]) -> Result<Vec<AnomalyVerdict>> {
        let mut out = Vec::with_capacity(self.n());
        self.step_into(point, &mut out)?;
        Ok(out)
    }

    /// As [`step`](Self::step), reusing `out` (cleared first).
    pub fn step_into(&mut self, point: &[f64], out: &mut Vec<AnomalyVerdict>) -> Result<()> {
        let n = self.n();
        if point.len() != n {
            return Err(Error::Shape {
                expected: n,
                found: point.len(),
            });
        }
        let available = self.state.history();
        if available < self.required {
            return Err(Error::InsufficientHistory {
                needed: self.required,
                available,
            });
        }
        out.clear();
        let d = self.config.d;
        let scale = (d as f64).sqrt();
        let mut ops = 0u64;
        for (i, model) in self.models.iter().enumerate() {
            let prediction = predict_unchecked(&self.state, model);
            let buf = &self.state.buffers[i];
            let mut sum = point[i];
            for k in 1..d {
                sum += buf.lag(k);
            }
            ops += (model.m + d) as u64;
            let observed = sum / d as f64;
            let t_stat = (observed - prediction) / (model.sigma / scale);
            let p = p_value(t_stat, self.config.sidedness);
            out.push(AnomalyVerdict {
                series_id: i,
                t: self.state.cursor,
                prediction,
                observed,
                t_stat,
                p_value: p,
                is_anomaly: p < self.config.p_value_threshold,
            });
        }
        self.last_ops = ops;
        self.state.push(point)
    }
}

/// Run a detector over `panel`, testing timesteps `start..h` after warming
/// with the `required_history` rows immediately before `start`.
///
/// Returns one verdict row per tested timestep; verdict times are panel
/// indices.
pub fn replay(
    models: &[LagModel],
    config: DetectorConfig,
    panel: &Panel,
    start: usize,
) -> Result<Vec<Vec<AnomalyVerdict>>> {
    if models.len() != panel.n() {
        return Err(Error::Shape {
            expected: panel.n(),
            found: models.len(),
        });
    }
    let mut det = Detector::new(models.to_vec(), config)?;
    let need = det.required_history();
    if start < need {
        return Err(Error::InsufficientHistory {
            needed: need,
            available: start,
        });
    }
    let first = start - need;
    det.state.cursor = first;
    for t in first..start {
        det.warm(&panel.row(t))?;
    }
    let mut rows = Vec::with_capacity(panel.h().saturating_sub(start));
    for t in start..panel.h() {
        rows.push(det.step(&panel.row(t))?);
    }
    Ok(rows)
}

/// A run of consecutive anomalous timesteps on one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub series_id: usize,
    pub start: usize,
    pub end: usize,
    pub min_p_value: f64,
}

/// Collapse consecutive per-series alerts into incidents.
///
/// Verdicts must be ordered by time within each series.
pub fn group_incidents(verdicts: &[AnomalyVerdict]) -> Vec<Incident> {
    let mut open: std::collections::BTreeMap<usize, Incident> = Default::default();
    let mut done = Vec::new();
    for v in verdicts {
        if v.is_anomaly {
            match open.get_mut(&v.series_id) {
                Some(inc) if inc.end + 1 == v.t => {
                    inc.end = v.t;
                    inc.min_p_value = inc.min_p_value.min(v.p_value);
                }
                _ => {
                    if let Some(prev) = open.insert(
                        v.series_id,
                        Incident {
                            series_id: v.series_id,
                            start: v.t,
                            end: v.t,
                            min_p_value: v.p_value,
                        },
                    ) {
                        done.push(prev);
                    }
                }
            }
        } else if let Some(prev) = open.remove(&v.series_id) {
            done.push(prev);
        }
    }
    done.extend(open.into_values());
    done.sort_by_key(|i| (i.start, i.series_id));
    done
}

/// Write verdicts as JSON lines.
pub fn write_verdicts<'a, W: Write>(
    mut out: W,
    verdicts: impl IntoIterator<Item = &'a AnomalyVerdict>,
) -> Result<()> {
    for v in verdicts {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagreg::{build_design, fit_lasso, residuals, LagCoeff};
    use crate::panel::{generate_panel, random_cross_support, GeneratorSpec};

    fn empty_model(i: usize, w: usize) -> LagModel {
        LagModel::new(i, w, 0.0, 0.0, 1.0, [])
    }

    #[test]
    fn zero_model_predicts_zero() {
        let mut state = StreamState::new(2, 3);
        for p in [[1.0, 2.0], [3.0, -4.0], [5.0, 6.0]] {
            state.push(&p).unwrap();
        }
        assert_eq!(predict_next(&state, &empty_model(0, 3)).unwrap(), 0.0);
    }

    #[test]
    fn single_coefficient_prediction() {
        let mut state = StreamState::new(1, 1);
        state.push(&[3.0]).unwrap();
        let model = LagModel::new(0, 1, 0.0, 0.0, 1.0, [LagCoeff { j: 0, k: 1, beta: 2.0 }]);
        assert_eq!(predict_next(&state, &model).unwrap(), 6.0);
    }

    #[test]
    fn prediction_needs_history() {
        let mut state = StreamState::new(1, 4);
        state.push(&[1.0]).unwrap();
        let err = predict_next(&state, &empty_model(0, 4)).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory { needed: 4, available: 1 }));

        let mut det = Detector::new(vec![empty_model(0, 4)], DetectorConfig::default()).unwrap();
        det.warm(&[1.0]).unwrap();
        assert!(matches!(det.step(&[1.0]), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn wrong_arity_is_a_shape_error() {
        let mut det = Detector::new(vec![empty_model(0, 1), empty_model(1, 1)], DetectorConfig::default()).unwrap();
        det.warm(&[0.0, 0.0]).unwrap();
        assert!(matches!(det.step(&[1.0]), Err(Error::Shape { expected: 2, found: 1 })));
    }

    #[test]
    fn zero_sigma_rejected_at_construction() {
        let mut m = empty_model(0, 1);
        m.sigma = 0.0;
        assert!(Detector::new(vec![m], DetectorConfig::default()).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        for cfg in [
            DetectorConfig { p_value_threshold: 0.0, ..Default::default() },
            DetectorConfig { p_value_threshold: 1.0, ..Default::default() },
            DetectorConfig { d: 0, ..Default::default() },
        ] {
            assert!(Detector::new(vec![empty_model(0, 1)], cfg).is_err());
        }
    }

    #[test]
    fn planted_spike_is_flagged() {
        let mut det = Detector::new(vec![empty_model(0, 2)], DetectorConfig::default()).unwrap();
        det.warm(&[0.1]).unwrap();
        det.warm(&[-0.2]).unwrap();
        let v = det.step(&[0.3]).unwrap();
        assert!(!v[0].is_anomaly);
        let v = det.step(&[10.0]).unwrap();
        assert!(v[0].is_anomaly);
        assert_eq!(v[0].t, 3);
        assert!((v[0].t_stat - 10.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_divides_spike_statistic_by_sqrt_d() {
        let spike = 8.0;
        let mut stats = Vec::new();
        for d in [1usize, 2, 4, 8] {
            let cfg = DetectorConfig { d, ..Default::default() };
            let mut det = Detector::new(vec![empty_model(0, 1)], cfg).unwrap();
            for _ in 0..det.required_history() {
                det.warm(&[0.0]).unwrap();
            }
            let v = det.step(&[spike]).unwrap()[0];
            assert!((v.t_stat - spike / (d as f64).sqrt()).abs() < 1e-12);
            stats.push(v.is_anomaly);
        }
        // Alerts are weakly fewer as d grows.
        for pair in stats.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
        assert_eq!(stats, vec![true, true, false, false]);
    }

    #[test]
    fn step_counts_operations() {
        let models = vec![
            LagModel::new(0, 3, 0.0, 0.0, 1.0, [LagCoeff { j: 1, k: 2, beta: 0.5 }, LagCoeff { j: 0, k: 3, beta: 0.1 }]),
            LagModel::new(1, 3, 0.0, 0.0, 1.0, [LagCoeff { j: 0, k: 1, beta: 0.2 }]),
        ];
        let cfg = DetectorConfig { d: 4, ..Default::default() };
        let mut det = Detector::new(models, cfg).unwrap();
        for _ in 0..det.required_history() {
            det.warm(&[0.0, 0.0]).unwrap();
        }
        det.step(&[1.0, 1.0]).unwrap();
        assert_eq!(det.last_step_ops(), 3 + 2 * 4);
        assert_eq!(det.ops_per_step(), det.last_step_ops());
    }

    #[test]
    fn replay_reproduces_training_residuals() {
        let spec = GeneratorSpec {
            n: 3,
            h: 700,
            w_true: 4,
            support: random_cross_support(3, 4, 2, 0.6, 2).unwrap(),
            noise_sigma: 0.5,
            anomaly_rate: 0.01,
            anomaly_magnitude: 6.0,
            seed: 12,
        };
        let panel = generate_panel(&spec).unwrap();
        let w = 5;
        let design = build_design(&panel, w).unwrap();
        let models: Vec<_> = (0..3).map(|i| fit_lasso(&design, i, 2.0, 1e-9, 10_000).unwrap()).collect();
        let rows = replay(&models, DetectorConfig::default(), &panel, w).unwrap();
        for (i, m) in models.iter().enumerate() {
            let res = residuals(m, &design).unwrap();
            for (r, row) in rows.iter().enumerate() {
                let v = row[i];
                assert_eq!(v.t, w + r);
                assert_eq!(v.observed - v.prediction, res[r]);
            }
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let spec = GeneratorSpec {
            n: 2,
            h: 300,
            w_true: 2,
            support: random_cross_support(2, 2, 1, 0.5, 3).unwrap(),
            noise_sigma: 1.0,
            anomaly_rate: 0.02,
            anomaly_magnitude: 8.0,
            seed: 4,
        };
        let panel = generate_panel(&spec).unwrap();
        let models = vec![LagModel::from_support(&spec, 0, 2, 1.0), LagModel::from_support(&spec, 1, 2, 1.0)];
        let cfg = DetectorConfig { d: 3, ..Default::default() };
        let a = replay(&models, cfg, &panel, 2).unwrap();
        let b = replay(&models, cfg, &panel, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn incidents_collapse_runs() {
        let v = |series_id, t, is_anomaly| AnomalyVerdict {
            series_id,
            t,
            prediction: 0.0,
            observed: 0.0,
            t_stat: 0.0,
            p_value: if is_anomaly { 1e-7 } else { 0.5 },
            is_anomaly,
        };
        let stream = [v(0, 1, true), v(1, 1, false), v(0, 2, true), v(1, 2, true), v(0, 3, false), v(1, 3, true), v(0, 4, true)];
        let inc = group_incidents(&stream);
        let spans: Vec<_> = inc.iter().map(|i| (i.series_id, i.start, i.end)).collect();
        assert_eq!(spans, vec![(0, 1, 2), (1, 2, 3), (0, 4, 4)]);
    }
}
