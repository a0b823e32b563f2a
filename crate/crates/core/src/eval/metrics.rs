use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::detector::AnomalyVerdict;
use crate::error::{Error, Result};
use crate::panel::Panel;

/// Per-cell confusion counts over (series, timestep) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    #[inline]
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn recall(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let pred = self.tp + self.fp;
        (pred > 0).then(|| self.tp as f64 / pred as f64)
    }

    pub fn f1(&self) -> Result<f64> {
        f1_score(self)
    }
}

/// `2tp / (2tp + fp + fn)`.
pub fn f1_score(counts: &ConfusionCounts) -> Result<f64> {
    let denom = 2 * counts.tp + counts.fp + counts.fn_;
    if denom == 0 {
        return Err(Error::UndefinedF1("no positives predicted or labeled".into()));
    }
    Ok(2.0 * counts.tp as f64 / denom as f64)
}

/// Score detector output against the panel's labels at each verdict's time.
pub fn score_verdicts<'a>(
    verdicts: impl IntoIterator<Item = &'a AnomalyVerdict>,
    panel: &Panel,
) -> Result<ConfusionCounts> {
    let labels = panel.labels().ok_or(Error::MissingLabels)?;
    let mut counts = ConfusionCounts::default();
    for v in verdicts {
        let actual = labels
            .get(v.series_id)
            .and_then(|s| s.get(v.t))
            .ok_or_else(|| Error::InvalidArgument(format!("verdict ({}, {}) outside panel", v.series_id, v.t)))?;
        counts.record(v.is_anomaly, *actual);
    }
    Ok(counts)
}

/// F1 between a recovered and a planted set of `(target, source, lag)`.
pub fn support_f1(recovered: &BTreeSet<(usize, usize, usize)>, planted: &BTreeSet<(usize, usize, usize)>) -> f64 {
    let tp = recovered.intersection(planted).count() as u64;
    let counts = ConfusionCounts {
        tp,
        fp: recovered.len() as u64 - tp,
        fn_: planted.len() as u64 - tp,
        tn: 0,
    };
    counts.f1().unwrap_or(1.0)
}
