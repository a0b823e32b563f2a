use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detector::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::lagreg::LagModel;
use crate::panel::Panel;

/// Per-step detection latency. Warm-up steps are not timed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub p50_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
    pub steps: usize,
    pub warmup_steps: usize,
    /// Arithmetic operations per step, `Σ mᵢ + n·d`.
    pub op_count: u64,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Time `Detector::step_into` over every post-warm-up row of `stream`,
/// `repetitions` times, on the calling thread.
pub fn bench_detection(
    models: &[LagModel],
    stream: &Panel,
    config: DetectorConfig,
    repetitions: usize,
) -> Result<LatencyReport> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be positive".into()));
    }
    let template = Detector::new(models.to_vec(), config)?;
    let warmup = template.required_history();
    if stream.h() <= warmup {
        return Err(Error::InsufficientHistory {
            needed: warmup + 1,
            available: stream.h(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..stream.h()).map(|t| stream.row(t)).collect();
    let mut timings = Vec::with_capacity(repetitions * (rows.len() - warmup));
    let mut out = Vec::with_capacity(template.n());
    let mut op_count = 0;
    for _ in 0..repetitions {
        let mut det = template.clone();
        for row in &rows[..warmup] {
            det.warm(row)?;
        }
        for row in &rows[warmup..] {
            let start = Instant::now();
            det.step_into(black_box(row), &mut out)?;
            let elapsed = start.elapsed();
            black_box(&out);
            timings.push(elapsed.as_secs_f64() * 1e6);
        }
        op_count = det.last_step_ops();
    }
    timings.sort_by(f64::total_cmp);
    Ok(LatencyReport {
        p50_us: quantile(&timings, 0.5),
        p99_us: quantile(&timings, 0.99),
        max_us: *timings.last().unwrap_or(&0.0),
        steps: timings.len(),
        warmup_steps: warmup,
        op_count,
    })
}
