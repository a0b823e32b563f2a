//! Scoring, latency measurement and end-to-end experiments.

mod bench;
mod experiment;
mod metrics;

use serde::{Deserialize, Serialize};

use crate::detector::{replay, Detector, DetectorConfig};
use crate::error::Result;
use crate::lagreg::{train_all, LagModel};
use crate::panel::Panel;

pub use bench::{bench_detection, LatencyReport};
pub use experiment::{
    run_experiment, run_experiment_config, ExperimentConfig, ExperimentReport, MethodScore,
    PanelSource, Split,
};
pub use metrics::{f1_score, score_verdicts, support_f1, ConfusionCounts};

/// Training and detection settings for the regression detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: usize,
    pub lambda: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub detector: DetectorConfig,
}

pub(crate) fn default_tol() -> f64 {
    1e-6
}

pub(crate) fn default_max_iter() -> usize {
    10_000
}

/// Detect on `eval` with already fitted `models`, testing every timestep
/// after the detector's warm-up, and count against the labels.
pub fn score_models(models: &[LagModel], eval: &Panel, detector: DetectorConfig) -> Result<ConfusionCounts> {
    let start = Detector::new(models.to_vec(), detector)?.required_history();
    let rows = replay(models, detector, eval, start)?;
    score_verdicts(rows.iter().flatten(), eval)
}

/// Train on `train`, score on `eval`.
pub fn held_out_counts(train: &Panel, eval: &Panel, cfg: &PipelineConfig) -> Result<ConfusionCounts> {
    let models = train_all(train, cfg.window, cfg.lambda, cfg.tol, cfg.max_iter)?;
    score_models(&models, eval, cfg.detector)
}

pub fn held_out_f1(train: &Panel, eval: &Panel, cfg: &PipelineConfig) -> Result<f64> {
    held_out_counts(train, eval, cfg)?.f1()
}
