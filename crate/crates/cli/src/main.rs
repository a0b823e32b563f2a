use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use laganom::baselines::{fit_gaussian, gaussian_verdicts, select_threshold};
use laganom::bayes::{default_alpha_grid, fit_calibration, Horizon, DEFAULT_FOLDS};
use laganom::detector::{group_incidents, replay, write_verdicts, Detector, DetectorConfig, Sidedness};
use laganom::diagnostics::{mi_grid, DEFAULT_RESOLUTION};
use laganom::eval::{bench_detection, run_experiment};
use laganom::lagreg::{load_models, save_models, train_all, LagModel};
use laganom::panel::{generate_panel, load_panel, store_panel};
use laganom::{GeneratorSpec, Panel, PanelFormat};

#[derive(Parser)]
#[command(name = "laganom", version, about = "Sparse lag regression and residual anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled panel from a generator spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit one lasso lag model per series.
    Train {
        #[command(flatten)]
        panel: PanelArg,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        /// Output directory, one `<series>.json` per model.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a panel through the detector and write verdicts as JSONL.
    Detect {
        #[command(flatten)]
        panel: PanelArg,
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        /// First tested timestep; defaults to the detector's warm-up length.
        #[arg(long)]
        start: Option<usize>,
        /// Emit collapsed incidents instead of per-step verdicts.
        #[arg(long)]
        incidents: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read JSONL points on stdin and write verdicts on stdout.
    Stream {
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
    },
    /// Pairwise mutual information between selected series, as CSV.
    Mi {
        #[command(flatten)]
        panel: PanelArg,
        /// Series ids: an inclusive range `0..18` or a list `0,3,5`.
        #[arg(long)]
        series: String,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate the anomaly-likelihood score for one model.
    BayesFit {
        #[command(flatten)]
        panel: PanelArg,
        #[arg(long)]
        model: PathBuf,
        /// 1 scores the next step from the lag variables, 0 scores the observed residual.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
        horizon: u8,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multivariate Gaussian baseline verdicts as JSONL.
    BaselineGaussian {
        #[command(flatten)]
        panel: PanelArg,
        /// Fraction of the panel used for fitting; the rest is scored.
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        /// Log-density threshold. Chosen on labeled data when omitted.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step detection latency over a panel.
    Bench {
        #[command(flatten)]
        panel: PanelArg,
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
    },
    /// Run an experiment config end to end and print the JSON report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PanelArg {
    #[arg(long = "panel")]
    path: PathBuf,
    /// Panel format; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<FormatArg>,
}

impl PanelArg {
    fn load(&self) -> Result<Panel> {
        let format = self.format.map(Into::into).unwrap_or_else(|| PanelFormat::from_path(&self.path));
        load_panel(&self.path, format).with_context(|| format!("loading panel {}", self.path.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for PanelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => PanelFormat::Csv,
            FormatArg::Jsonl => PanelFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    TwoSided,
    Upper,
    Lower,
}

#[derive(Args)]
struct DetectorArgs {
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, value_enum, default_value_t = SideArg::TwoSided)]
    sidedness: SideArg,
}

impl DetectorArgs {
    fn config(&self) -> DetectorConfig {
        DetectorConfig {
            p_value_threshold: self.threshold,
            d: self.d,
            sidedness: match self.sidedness {
                SideArg::TwoSided => Sidedness::TwoSided,
                SideArg::Upper => Sidedness::OneSidedUpper,
                SideArg::Lower => Sidedness::OneSidedLower,
            },
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_series(text: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (a.trim().parse::<usize>()?, b.trim());
        let b = b.strip_prefix('=').unwrap_or(b).parse::<usize>()?;
        let ids: Vec<usize> = (a..=b).collect();
        if ids.is_empty() {
            bail!("empty series range {text}");
        }
        return Ok(ids);
    }
    text.split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad series id {s:?}")))
        .collect()
}

/// One streamed point: a bare array or an object with a `values` field.
fn parse_point(line: &str) -> Result<Vec<f64>> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    let arr = match &value {
        serde_json::Value::Array(_) => &value,
        serde_json::Value::Object(map) => map.get("values").context("point object lacks `values`")?,
        _ => bail!("point must be an array or an object"),
    };
    serde_json::from_value(arr.clone()).context("point values must be numbers")
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { spec, out, seed } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut spec: GeneratorSpec = serde_json::from_str(&text)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let panel = generate_panel(&spec)?;
            store_panel(&panel, &out, PanelFormat::from_path(&out))?;
        }
        Command::Train {
            panel,
            window,
            lambda,
            tol,
            max_iter,
            out,
        } => {
            let panel = panel.load()?;
            let models = train_all(&panel, window, lambda, tol, max_iter)?;
            fs::create_dir_all(&out)?;
            save_models(&models, &out)?;
            let total: usize = models.iter().map(|m| m.m).sum();
            eprintln!("trained {} models, {} active coefficients", models.len(), total);
        }
        Command::Detect {
            panel,
            models,
            detector,
            start,
            incidents,
            out,
        } => {
            let panel = panel.load()?;
            let models = load_models(&models)?;
            let config = detector.config();
            let need = Detector::new(models.clone(), config)?.required_history();
            let rows = replay(&models, config, &panel, start.unwrap_or(need))?;
            let mut out = output(out.as_deref())?;
            if incidents {
                let flat: Vec<_> = rows.into_iter().flatten().collect();
                for inc in group_incidents(&flat) {
                    serde_json::to_writer(&mut out, &inc)?;
                    out.write_all(b"\n")?;
                }
            } else {
                write_verdicts(&mut out, rows.iter().flatten())?;
            }
            out.flush()?;
        }
        Command::Stream { models, detector } => {
            let models = load_models(&models)?;
            let mut det = Detector::new(models, detector.config())?;
            let mut out = BufWriter::new(io::stdout().lock());
            let mut verdicts = Vec::new();
            for (lineno, line) in io::stdin().lock().lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let point = parse_point(&line).with_context(|| format!("stdin line {}", lineno + 1))?;
                if det.is_warm() {
                    det.step_into(&point, &mut verdicts)?;
                    write_verdicts(&mut out, &verdicts)?;
                    out.flush()?;
                } else {
                    det.warm(&point)?;
                }
            }
        }
        Command::Mi {
            panel,
            series,
            resolution,
            out,
        } => {
            let panel = panel.load()?;
            let grid = mi_grid(&panel, &parse_series(&series)?, resolution)?;
            for (a, b, err) in &grid.failures {
                eprintln!("mi({a}, {b}) failed: {err}");
            }
            let mut out = output(out.as_deref())?;
            grid.write_csv(&mut out)?;
            out.flush()?;
        }
        Command::BayesFit {
            panel,
            model,
            horizon,
            folds,
            out,
        } => {
            let panel = panel.load()?;
            let model = LagModel::load(&model).with_context(|| format!("loading model {}", model.display()))?;
            let calib = fit_calibration(
                &panel,
                &model,
                Horizon::from_steps(horizon)?,
                &default_alpha_grid(),
                folds,
            )?;
            calib.save(&out)?;
            eprintln!("alpha = {}, cv F1 = {:.4}", calib.alpha, calib.cv_f1);
        }
        Command::BaselineGaussian {
            panel,
            train_fraction,
            threshold,
            out,
        } => {
            let panel = panel.load()?;
            if !(train_fraction > 0.0 && train_fraction < 1.0) {
                bail!("train fraction must lie in (0, 1)");
            }
            let cut = (panel.h() as f64 * train_fraction).round() as usize;
            let train = panel.slice(0..cut)?;
            let model = fit_gaussian(&train)?;
            let threshold = match threshold {
                Some(t) => t,
                None => {
                    let val = (train.h() as f64 * 0.7).round() as usize;
                    select_threshold(&model, &train, val..train.h())
                        .context("choosing a threshold needs labels; pass --threshold")?
                }
            };
            let verdicts = gaussian_verdicts(&model, &panel, cut..panel.h(), threshold)?;
            let mut out = output(out.as_deref())?;
            for v in &verdicts {
                serde_json::to_writer(&mut out, v)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            eprintln!("log-density threshold {threshold}");
        }
        Command::Bench {
            panel,
            models,
            detector,
            repetitions,
        } => {
            let panel = panel.load()?;
            let models = load_models(&models)?;
            let report = bench_detection(&models, &panel, detector.config(), repetitions)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run { config, out } => {
            let report = run_experiment(&config)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(p) => fs::write(&p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
