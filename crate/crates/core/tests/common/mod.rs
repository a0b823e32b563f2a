#![allow(dead_code)]

use laganom::panel::{generate_panel, GeneratorSpec, PlantedLag};
use laganom::Panel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weighing matrix W(8, 5) with zero diagonal: entries in {0, ±1},
/// `W Wᵀ = 5 I`.
pub const W85: [[i8; 8]; 8] = [
    [0, 1, 1, 1, 1, 1, 0, 0],
    [1, 0, 1, 1, -1, -1, 0, 0],
    [1, 1, 0, -1, 0, 0, 1, 1],
    [1, 1, -1, 0, 0, 0, -1, -1],
    [1, -1, 0, 0, 0, 1, 1, -1],
    [1, -1, 0, 0, 1, 0, -1, 1],
    [0, 0, 1, -1, 1, -1, 0, -1],
    [0, 0, 1, -1, -1, 1, -1, 0],
];

/// Five cross-series lags per target on eight series.
///
/// Source `j` always enters at lag `k_j`, so the lag polynomial is
/// `A(z) = gain · (W/√5) · diag(z^{k_j})`, whose norm on the closed unit disc
/// is `gain`. Any `gain < 1` is stable and the signal-to-noise ratio is
/// close to `gain² / (1 − gain²)`.
pub fn w85_support(w_true: usize, gain: f64, seed: u64) -> Vec<PlantedLag> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lags: Vec<usize> = rand::seq::index::sample(&mut rng, w_true, 8)
        .into_iter()
        .map(|l| l + 1)
        .collect();
    let scale = gain / 5f64.sqrt();
    let mut support = Vec::new();
    for (target, row) in W85.iter().enumerate() {
        for (source, &sign) in row.iter().enumerate() {
            if sign != 0 {
                support.push(PlantedLag {
                    target,
                    source,
                    lag: lags[source],
                    weight: sign as f64 * scale,
                });
            }
        }
    }
    support
}

pub fn w85_spec(h: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        n: 8,
        h,
        w_true: 30,
        support: w85_support(30, 0.92, seed),
        noise_sigma: 1.0,
        anomaly_rate: 0.002,
        anomaly_magnitude: 8.0,
        seed,
    }
}

/// `var(Σ β s_lag) / σ²` per target, measured on the panel.
pub fn empirical_snr(spec: &GeneratorSpec, panel: &Panel) -> Vec<f64> {
    (0..spec.n)
        .map(|i| {
            let signal: Vec<f64> = (spec.w_true..spec.h)
                .map(|t| {
                    spec.support
                        .iter()
                        .filter(|p| p.target == i)
                        .map(|p| p.weight * panel.value(p.source, t - p.lag))
                        .sum()
                })
                .collect();
            let mean = signal.iter().sum::<f64>() / signal.len() as f64;
            let var = signal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / signal.len() as f64;
            var / spec.noise_sigma.powi(2)
        })
        .collect()
}

pub fn white_noise(n: usize, h: usize, sigma: f64, seed: u64) -> Panel {
    generate_panel(&GeneratorSpec {
        n,
        h,
        w_true: 1,
        support: vec![],
        noise_sigma: sigma,
        anomaly_rate: 0.0,
        anomaly_magnitude: 0.0,
        seed,
    })
    .unwrap()
}
