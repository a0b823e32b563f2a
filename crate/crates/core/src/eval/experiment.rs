use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{bench_detection, score_models, ConfusionCounts, LatencyReport, PipelineConfig};
use crate::baselines::{fit_gaussian, gaussian_verdicts, oracle_counts, score_gaussian, select_threshold};
use crate::bayes::{default_alpha_grid, fit_calibration, Horizon, DEFAULT_FOLDS};
use crate::detector::{DetectorConfig, Sidedness};
use crate::error::{Error, Result};
use crate::lagreg::train_all;
use crate::panel::{generate_panel, load_panel, GeneratorSpec, Panel, PanelFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PanelSource {
    File {
        path: PathBuf,
        #[serde(default)]
        format: Option<PanelFormat>,
    },
    Generate { generate: GeneratorSpec },
}

/// Train/test split over timesteps. Both ranges are half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Split {
    Ranges { train: [usize; 2], test: [usize; 2] },
    Fraction { train_fraction: f64 },
}

impl Default for Split {
    fn default() -> Self {
        Split::Fraction { train_fraction: 0.7 }
    }
}

impl Split {
    pub fn resolve(&self, h: usize) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let (train, test) = match self {
            Split::Fraction { train_fraction } => {
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "train_fraction must lie in (0, 1), got {train_fraction}"
                    )));
                }
                let cut = (h as f64 * train_fraction).round() as usize;
                (0..cut, cut..h)
            }
            Split::Ranges { train, test } => (train[0]..train[1], test[0]..test[1]),
        };
        if train.is_empty() || test.is_empty() || train.end > h || test.end > h {
            return Err(Error::InvalidArgument(format!(
                "split {train:?} / {test:?} invalid for {h} timesteps"
            )));
        }
        if train.start < test.end && test.start < train.end {
            return Err(Error::InvalidArgument(format!(
                "train range {train:?} overlaps test range {test:?}"
            )));
        }
        Ok((train, test))
    }
}

fn default_bench_repetitions() -> usize {
    3
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub panel: PanelSource,
    pub window: usize,
    pub lambda: f64,
    pub threshold: f64,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default)]
    pub sidedness: Sidedness,
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub split: Split,
    /// Overrides the generator seed when the panel is synthesized.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "super::default_tol")]
    pub tol: f64,
    #[serde(default = "super::default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_bench_repetitions")]
    pub bench_repetitions: usize,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            window: self.window,
            lambda: self.lambda,
            tol: self.tol,
            max_iter: self.max_iter,
            detector: DetectorConfig {
                p_value_threshold: self.threshold,
                d: self.d,
                sidedness: self.sidedness,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub f1: Option<f64>,
    pub counts: ConfusionCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl MethodScore {
    fn from_counts(counts: ConfusionCounts) -> Self {
        MethodScore {
            f1: counts.f1().ok(),
            counts,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub n: usize,
    pub h: usize,
    pub train: [usize; 2],
    pub test: [usize; 2],
    pub positive_cells: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub series_id: usize,
    pub m: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesSeries {
    pub series_id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesScore {
    #[serde(flatten)]
    pub score: MethodScore,
    pub per_series: Vec<BayesSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Methods {
    pub lagreg: MethodScore,
    pub oracle: MethodScore,
    pub gaussian: MethodScore,
    pub bayes: BayesScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub panel: PanelSummary,
    pub models: Vec<ModelSummary>,
    pub total_m: usize,
    pub methods: Methods,
    /// Wall-clock fields vary between runs; everything else is deterministic.
    pub latency: LatencyReport,
}

fn acquire_panel(config: &ExperimentConfig, base: Option<&Path>) -> Result<Panel> {
    match &config.panel {
        PanelSource::File { path, format } => {
            let path = match base {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            let format = format.unwrap_or_else(|| PanelFormat::from_path(&path));
            load_panel(&path, format)
        }
        PanelSource::Generate { generate } => {
            let mut spec = generate.clone();
            if let Some(seed) = config.seed {
                spec.seed = seed;
            }
            generate_panel(&spec)
        }
    }
}

/// Load a JSON config and run it; relative panel paths resolve against the
/// config file's directory.
pub fn run_experiment(config_path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = config_path.as_ref();
    let config: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
    run_with_base(&config, path.parent())
}

pub fn run_experiment_config(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_with_base(config, None)
}

fn run_with_base(config: &ExperimentConfig, base: Option<&Path>) -> Result<ExperimentReport> {
    let panel = acquire_panel(config, base).map_err(|e| e.in_stage("generate"))?;
    if !panel.has_labels() {
        return Err(Error::MissingLabels.in_stage("generate"));
    }
    let (train_range, test_range) = config.split.resolve(panel.h()).map_err(|e| e.in_stage("split"))?;
    let train = panel.slice(train_range.clone()).map_err(|e| e.in_stage("split"))?;
    let test = panel.slice(test_range.clone()).map_err(|e| e.in_stage("split"))?;
    let cfg = config.pipeline();
    cfg.detector.validate().map_err(|e| e.in_stage("split"))?;

    let models = train_all(&train, cfg.window, cfg.lambda, cfg.tol, cfg.max_iter)
        .map_err(|e| e.in_stage("train"))?;

    let lagreg = score_models(&models, &test, cfg.detector).map_err(|e| e.in_stage("detect"))?;
    let oracle = oracle_counts(&test, &cfg).map_err(|e| e.in_stage("oracle"))?;

    let gaussian = {
        let gm = fit_gaussian(&train).map_err(|e| e.in_stage("baseline"))?;
        let cut = (train.h() as f64 * 0.7).round() as usize;
        let thr = select_threshold(&gm, &train, cut..train.h()).map_err(|e| e.in_stage("baseline"))?;
        // Same cells as the detector: skip its warm-up rows.
        let start = cfg.window.max(cfg.detector.d - 1).min(test.h());
        let verdicts = gaussian_verdicts(&gm, &test, start..test.h(), thr).map_err(|e| e.in_stage("baseline"))?;
        let mut score = MethodScore::from_counts(score_gaussian(&verdicts, &test).map_err(|e| e.in_stage("baseline"))?);
        score.threshold = Some(thr);
        score
    };

    let alpha_grid = config.alpha_grid.clone().unwrap_or_else(default_alpha_grid);
    let mut bayes_counts = ConfusionCounts::default();
    let mut per_series = Vec::new();
    let test_labels = test.labels().ok_or(Error::MissingLabels)?;
    for model in &models {
        let entry = fit_calibration(&train, model, config.horizon, &alpha_grid, config.folds)
            .and_then(|calib| {
                let scores = calib.scores(model, &test)?;
                let preds = calib.classify_all(&scores)?;
                for (r, pred) in preds.iter().enumerate() {
                    bayes_counts.record(*pred, test_labels[model.series_id][model.w + r]);
                }
                Ok(calib)
            });
        per_series.push(match entry {
            Ok(c) => BayesSeries {
                series_id: model.series_id,
                alpha: Some(c.alpha),
                cv_f1: Some(c.cv_f1),
                error: None,
            },
            Err(e) => BayesSeries {
                series_id: model.series_id,
                alpha: None,
                cv_f1: None,
                error: Some(e.to_string()),
            },
        });
    }

    let latency = bench_detection(&models, &test, cfg.detector, config.bench_repetitions)
        .map_err(|e| e.in_stage("bench"))?;

    let positive_cells = test_labels.iter().flatten().filter(|l| **l).count() as u64;
    Ok(ExperimentReport {
        config: config.clone(),
        panel: PanelSummary {
            n: panel.n(),
            h: panel.h(),
            train: [train_range.start, train_range.end],
            test: [test_range.start, test_range.end],
            positive_cells,
        },
        total_m: models.iter().map(|m| m.m).sum(),
        models: models
            .iter()
            .map(|m| ModelSummary {
                series_id: m.series_id,
                m: m.m,
                sigma: m.sigma,
            })
            .collect(),
        methods: Methods {
            lagreg: MethodScore::from_counts(lagreg),
            oracle: MethodScore::from_counts(oracle),
            gaussian,
            bayes: BayesScore {
                score: MethodScore::from_counts(bayes_counts),
                per_series,
            },
        },
        latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_split() {
        let (tr, te) = Split::default().resolve(100).unwrap();
        assert_eq!((tr, te), (0..70, 70..100));
        assert!(Split::Fraction { train_fraction: 1.0 }.resolve(100).is_err());
    }

    #[test]
    fn overlapping_ranges_rejected() {
        let s = Split::Ranges { train: [0, 60], test: [50, 100] };
        assert!(matches!(s.resolve(100), Err(Error::InvalidArgument(_))));
        let s = Split::Ranges { train: [40, 100], test: [0, 40] };
        assert!(s.resolve(100).is_ok());
        let s = Split::Ranges { train: [0, 40], test: [40, 140] };
        assert!(s.resolve(100).is_err());
    }

    #[test]
    fn config_parses_both_panel_sources() {
        let text = r#"{"panel": {"path": "p.csv"}, "window": 5, "lambda": 1.0, "threshold": 1e-5}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(matches!(c.panel, PanelSource::File { .. }));
        assert_eq!(c.d, 1);
        assert_eq!(c.split, Split::default());

        let text = r#"{"panel": {"generate": {"n": 2, "h": 100, "w_true": 2, "noise_sigma": 1.0}},
                       "window": 5, "lambda": 1.0, "threshold": 1e-5, "d": 3,
                       "split": {"train": [0, 60], "test": [60, 100]}, "seed": 4}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(matches!(c.panel, PanelSource::Generate { .. }));
        assert_eq!(c.seed, Some(4));
    }
}
