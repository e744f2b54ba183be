//! Test-only oracles and fixtures, kept apart from the code they check.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::rppg::RgbTrace;

/// Frequency of the largest DFT magnitude on a 0.005 Hz grid in
/// `[lo_hz, hi_hz]`, by direct summation.
pub fn dft_peak_hz(x: &[f64], fs: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let steps = ((hi_hz - lo_hz) / 0.005).round() as usize;
    let mut best = (lo_hz, -1.0);
    for s in 0..=steps {
        let f = lo_hz + s as f64 * 0.005;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * n as f64 / fs;
            re += (v - m) * ph.cos();
            im -= (v - m) * ph.sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (f, p);
        }
    }
    best.0
}

pub struct SkinTrace {
    pub hr_bpm: f64,
    pub fs: f64,
    pub duration_s: f64,
    pub baseline: [f64; 3],
    pub gains: [f64; 3],
    pub depth: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for SkinTrace {
    fn default() -> Self {
        Self {
            hr_bpm: 72.0,
            fs: 30.0,
            duration_s: 20.0,
            baseline: [0.7, 0.5, 0.4],
            gains: [0.33, 0.77, 0.53],
            depth: 0.01,
            snr_db: None,
            seed: 0,
        }
    }
}

pub struct SkinFixture {
    pub trace: RgbTrace,
    pub pulse: Vec<f64>,
}

/// `baseline * (1 + depth * gain * pulse)` plus white noise at the given
/// per-channel SNR.
pub fn skin_trace(cfg: &SkinTrace) -> SkinFixture {
    let n = (cfg.duration_s * cfg.fs).round() as usize;
    let f0 = cfg.hr_bpm / 60.0;
    let pulse: Vec<f64> = (0..n)
        .map(|k| {
            let ph = 2.0 * PI * f0 * k as f64 / cfg.fs;
            ph.sin() + 0.3 * (2.0 * ph).sin()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut channels: Vec<Vec<f64>> = Vec::new();
    for c in 0..3 {
        let amp = cfg.baseline[c] * cfg.depth * cfg.gains[c];
        let clean: Vec<f64> = pulse.iter().map(|p| cfg.baseline[c] + amp * p).collect();
        let row = match cfg.snr_db {
            Some(snr) => {
                let sig_rms = amp * (pulse.iter().map(|p| p * p).sum::<f64>() / n as f64).sqrt();
                let sd = sig_rms / 10f64.powf(snr / 20.0);
                let noise = Normal::new(0.0, sd).unwrap();
                clean.iter().map(|v| (v + noise.sample(&mut rng)).max(0.0)).collect()
            }
            None => clean,
        };
        channels.push(row);
    }
    let b = channels.pop().unwrap();
    let g = channels.pop().unwrap();
    let r = channels.pop().unwrap();
    SkinFixture {
        trace: RgbTrace::new(r, g, b, cfg.fs).unwrap(),
        pulse,
    }
}
