//! Panels of equally long, gap-free time series.
//!
//! A [`Panel`] stores `n` series of `h` samples each, optionally with a
//! per-cell anomaly label grid. Timestamps are the implicit indices
//! `0..h`; the sampling period is carried along as metadata only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generated values beyond this magnitude abort generation.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelFormat {
    Csv,
    Jsonl,
}

impl PanelFormat {
    /// Guess the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("jsonl") => PanelFormat::Jsonl,
            _ => PanelFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Series-major samples: `values[i][t]`.
    values: Vec<Vec<f64>>,
    labels: Option<Vec<Vec<bool>>>,
    /// Sampling period in minutes. Informational.
    pub sample_period: f64,
}

impl Panel {
    pub fn new(values: Vec<Vec<f64>>, labels: Option<Vec<Vec<bool>>>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Empty("panel has no series".into()));
        }
        let h = values[0].len();
        if h == 0 {
            return Err(Error::Empty("panel has no timesteps".into()));
        }
        for (i, s) in values.iter().enumerate() {
            if s.len() != h {
                return Err(Error::InvalidArgument(format!(
                    "series {i} has length {}, expected {h}",
                    s.len()
                )));
            }
            if let Some(t) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::Gap { row: t, column: i });
            }
        }
        if let Some(l) = &labels {
            if l.len() != n || l.iter().any(|row| row.len() != h) {
                return Err(Error::InvalidArgument(
                    "label grid does not match the value grid".into(),
                ));
            }
        }
        Ok(Panel {
            values,
            labels,
            sample_period: 1.0,
        })
    }

    /// Build a panel from time-major rows (`rows[t][i]`).
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<&[Vec<bool>]>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut values = vec![Vec::with_capacity(rows.len()); n];
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Ragged {
                    row: t,
                    expected: n,
                    found: row.len(),
                });
            }
            for (i, v) in row.iter().enumerate() {
                values[i].push(*v);
            }
        }
        let labels = labels.map(|rows| {
            let mut grid = vec![Vec::with_capacity(rows.len()); n];
            for row in rows {
                for (i, l) in row.iter().enumerate().take(n) {
                    grid[i].push(*l);
                }
            }
            grid
        });
        Panel::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn h(&self) -> usize {
        self.values[0].len()
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn value(&self, i: usize, t: usize) -> f64 {
        self.values[i][t]
    }

    /// All series values at timestep `t`.
    pub fn row(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|s| s[t]).collect()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn labels(&self) -> Option<&[Vec<bool>]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize, t: usize) -> Option<bool> {
        self.labels.as_ref().map(|l| l[i][t])
    }

    /// Labels at timestep `t`, if the panel is labeled.
    pub fn label_row(&self, t: usize) -> Option<Vec<bool>> {
        self.labels
            .as_ref()
            .map(|l| l.iter().map(|s| s[t]).collect())
    }

    /// The contiguous time slice `range` as a new panel.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Panel> {
        if range.start >= range.end || range.end > self.h() {
            return Err(Error::InvalidArgument(format!(
                "time range {range:?} outside 0..{}",
                self.h()
            )));
        }
        let values = self.values.iter().map(|s| s[range.clone()].to_vec()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| l.iter().map(|s| s[range.clone()].to_vec()).collect());
        let mut p = Panel::new(values, labels)?;
        p.sample_period = self.sample_period;
        Ok(p)
    }

    /// The panel restricted to the given series, in the given order.
    pub fn select(&self, series: &[usize]) -> Result<Panel> {
        if let Some(&bad) = series.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidArgument(format!(
                "series {bad} out of range (n = {})",
                self.n()
            )));
        }
        let values = series.iter().map(|&i| self.values[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| series.iter().map(|&i| l[i].clone()).collect());
        let mut p = Panel::new(values, labels)?;
        p.sample_period = self.sample_period;
        Ok(p)
    }
}

pub fn load_panel(path: impl AsRef<Path>, format: PanelFormat) -> Result<Panel> {
    let file = File::open(path.as_ref())?;
    read_panel(BufReader::new(file), format)
}

pub fn read_panel<R: Read>(reader: R, format: PanelFormat) -> Result<Panel> {
    match format {
        PanelFormat::Csv => read_csv(reader),
        PanelFormat::Jsonl => read_jsonl(BufReader::new(reader)),
    }
}

pub fn store_panel(panel: &Panel, path: impl AsRef<Path>, format: PanelFormat) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    write_panel(panel, &mut out, format)?;
    out.flush()?;
    Ok(())
}

pub fn write_panel<W: Write>(panel: &Panel, out: W, format: PanelFormat) -> Result<()> {
    match format {
        PanelFormat::Csv => write_csv(panel, out),
        PanelFormat::Jsonl => write_jsonl(panel, out),
    }
}

fn parse_cell(text: &str, row: usize, column: usize) -> Result<f64> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("nan") || trimmed.eq_ignore_ascii_case("na")
    {
        return Err(Error::Gap { row, column });
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_nan() => Err(Error::Gap { row, column }),
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column,
            text: trimmed.to_string(),
        }),
    }
}

fn parse_label(text: &str, row: usize, column: usize) -> Result<bool> {
    match text.trim() {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        "" => Err(Error::Gap { row, column }),
        other => Err(Error::Parse {
            row,
            column,
            text: other.to_string(),
        }),
    }
}

// Row numbers in CSV errors are 1-based file lines; the header is line 1.
fn read_csv<R: Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Format(e.to_string()))?,
        None => return Err(Error::Empty("csv file is empty".into())),
    };
    let width = header.len();
    let n_labels = header
        .iter()
        .filter(|c| c.trim().starts_with("label_"))
        .count();
    let n = width - n_labels;
    if n == 0 {
        return Err(Error::Format("header declares no series columns".into()));
    }
    if n_labels != 0 && n_labels != n {
        return Err(Error::Format(format!(
            "header declares {n} series but {n_labels} label columns"
        )));
    }
    if header.iter().take(n).any(|c| c.trim().starts_with("label_")) {
        return Err(Error::Format(
            "label columns must follow all series columns".into(),
        ));
    }

    let mut values = vec![Vec::new(); n];
    let mut labels = if n_labels > 0 {
        Some(vec![Vec::new(); n])
    } else {
        None
    };
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != width {
            return Err(Error::Ragged {
                row: line,
                expected: width,
                found: rec.len(),
            });
        }
        for (i, series) in values.iter_mut().enumerate() {
            series.push(parse_cell(&rec[i], line, i)?);
        }
        if let Some(grid) = labels.as_mut() {
            for (i, l) in grid.iter_mut().enumerate() {
                l.push(parse_label(&rec[n + i], line, n + i)?);
            }
        }
    }
    if values[0].is_empty() {
        return Err(Error::Empty("csv file has no data rows".into()));
    }
    Panel::new(values, labels)
}

fn write_csv<W: Write>(panel: &Panel, mut out: W) -> Result<()> {
    let n = panel.n();
    let mut header: Vec<String> = (0..n).map(|i| format!("series_{i}")).collect();
    if panel.has_labels() {
        header.extend((0..n).map(|i| format!("label_{i}")));
    }
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for t in 0..panel.h() {
        line.clear();
        for i in 0..n {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:?}", panel.value(i, t)));
        }
        if let Some(l) = panel.labels() {
            for s in l {
                line.push_str(if s[t] { ",1" } else { ",0" });
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    t: usize,
    values: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<bool>>,
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<Panel> {
    let mut rows = Vec::new();
    let mut label_rows: Vec<Vec<bool>> = Vec::new();
    let mut labeled: Option<bool> = None;
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row_no = idx + 1;
        let row: JsonRow = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {row_no}: {e}")))?;
        if row.t != rows.len() {
            return Err(Error::Format(format!(
                "line {row_no}: expected t = {}, found {}",
                rows.len(),
                row.t
            )));
        }
        let expected = *width.get_or_insert(row.values.len());
        if row.values.len() != expected {
            return Err(Error::Ragged {
                row: row_no,
                expected,
                found: row.values.len(),
            });
        }
        let vals = row
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Some(x) if x.is_finite() => Ok(*x),
                _ => Err(Error::Gap {
                    row: row_no,
                    column: i,
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
        let has = row.labels.is_some();
        if *labeled.get_or_insert(has) != has {
            return Err(Error::Format(format!(
                "line {row_no}: labels must be present on every row or none"
            )));
        }
        if let Some(l) = row.labels {
            if l.len() != expected {
                return Err(Error::Ragged {
                    row: row_no,
                    expected,
                    found: l.len(),
                });
            }
            label_rows.push(l);
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty("jsonl file has no rows".into()));
    }
    let labels = labeled.unwrap_or(false).then_some(label_rows.as_slice());
    Panel::from_rows(&rows, labels)
}

fn write_jsonl<W: Write>(panel: &Panel, mut out: W) -> Result<()> {
    for t in 0..panel.h() {
        let row = JsonRow {
            t,
            values: panel.row(t).into_iter().map(Some).collect(),
            labels: panel.label_row(t),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One planted coefficient: `target` depends on `source` at `lag` steps back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedLag {
    pub target: usize,
    pub source: usize,
    pub lag: usize,
    pub weight: f64,
}

/// Parameters for [`generate_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub h: usize,
    /// Longest planted lag; the first `w_true` steps are pure noise.
    pub w_true: usize,
    #[serde(default)]
    pub support: Vec<PlantedLag>,
    pub noise_sigma: f64,
    #[serde(default)]
    pub anomaly_rate: f64,
    /// Spike size in units of `noise_sigma`.
    #[serde(default)]
    pub anomaly_magnitude: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.h == 0 {
            return Err(Error::InvalidArgument("n and h must be positive".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.anomaly_rate) {
            return Err(Error::InvalidArgument(format!(
                "anomaly_rate must lie in [0, 1), got {}",
                self.anomaly_rate
            )));
        }
        if !self.anomaly_magnitude.is_finite() {
            return Err(Error::InvalidArgument("anomaly_magnitude must be finite".into()));
        }
        for p in &self.support {
            if p.target >= self.n || p.source >= self.n {
                return Err(Error::InvalidArgument(format!(
                    "support entry {p:?} references a series outside 0..{}",
                    self.n
                )));
            }
            if p.lag == 0 || p.lag > self.w_true {
                return Err(Error::InvalidArgument(format!(
                    "support lag {} outside 1..={}",
                    p.lag, self.w_true
                )));
            }
            if !p.weight.is_finite() {
                return Err(Error::InvalidArgument("support weight must be finite".into()));
            }
        }
        Ok(())
    }

    /// Support entries grouped by target series.
    pub fn support_by_target(&self) -> Vec<Vec<PlantedLag>> {
        let mut grouped = vec![Vec::new(); self.n];
        for p in &self.support {
            grouped[p.target].push(*p);
        }
        grouped
    }
}

/// Draw `per_target` distinct cross-series `(source, lag)` pairs for every
/// target, each with weight `gain / per_target`.
///
/// Sources never equal the target, so recovered self-lags are always false
/// positives. Needs `n >= 2` and `per_target <= (n - 1) * w_true`.
pub fn random_cross_support(
    n: usize,
    w_true: usize,
    per_target: usize,
    gain: f64,
    seed: u64,
) -> Result<Vec<PlantedLag>> {
    let pool = n.saturating_sub(1) * w_true;
    if per_target > pool {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {per_target} distinct cross-series lags from {pool} candidates"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = if per_target == 0 { 0.0 } else { gain / per_target as f64 };
    let mut support = Vec::with_capacity(n * per_target);
    for target in 0..n {
        let mut picks = sample(&mut rng, pool, per_target).into_vec();
        picks.sort_unstable();
        for idx in picks {
            let mut source = idx / w_true;
            if source >= target {
                source += 1;
            }
            support.push(PlantedLag {
                target,
                source,
                lag: idx % w_true + 1,
                weight,
            });
        }
    }
    Ok(support)
}

/// Simulate a panel from `spec`.
///
/// Each series follows `s_t = Σ β s_{t-k}^{(j)} + N(0, σ²)` once `t >= w_true`,
/// and is pure noise before that. Anomalies are additive spikes of
/// `±anomaly_magnitude · σ` planted after the warm-up; they stay in the data
/// and therefore feed later lag terms. The label grid marks exactly the
/// planted cells.
pub fn generate_panel(spec: &GeneratorSpec) -> Result<Panel> {
    spec.validate()?;
    let (n, h) = (spec.n, spec.h);
    let by_target = spec.support_by_target();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let spike = spec.anomaly_magnitude * spec.noise_sigma;

    let mut values = vec![vec![0.0; h]; n];
    let mut labels = vec![vec![false; h]; n];
    for t in 0..h {
        for i in 0..n {
            let mut v = noise.sample(&mut rng);
            if t >= spec.w_true {
                for p in &by_target[i] {
                    v += p.weight * values[p.source][t - p.lag];
                }
                if spec.anomaly_rate > 0.0 && rng.random::<f64>() < spec.anomaly_rate {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    v += sign * spike;
                    labels[i][t] = true;
                }
            }
            if !(v.abs() <= OVERFLOW_GUARD) {
                return Err(Error::Unstable {
                    series: i,
                    t,
                    guard: OVERFLOW_GUARD,
                });
            }
            values[i][t] = v;
        }
    }
    Panel::new(values, Some(labels))
}
