//! Sequential forward-pass timing on random traces.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Checkpoint, FpnModel, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    pub segment_s: f64,
    pub fps: f64,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            segment_s: 20.0,
            fps: 30.0,
            repetitions: 200,
            warmup: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn bench_inference(model: &FpnModel, opts: &BenchOptions) -> Result<BenchReport> {
    if opts.repetitions == 0 {
        return Err(Error::InvalidRepetitions(0));
    }
    if !(opts.segment_s > 0.0 && opts.fps > 0.0) {
        return Err(Error::InvalidConfig(format!("segment {} s at {} fps", opts.segment_s, opts.fps)));
    }
    let frames = (opts.segment_s * opts.fps).round() as usize;
    let channels = model.config().in_channels;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let inputs: Vec<Tensor> = (0..opts.repetitions.min(8))
        .map(|_| Tensor {
            channels,
            len: frames,
            data: (0..channels * frames).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        })
        .collect();
    for i in 0..opts.warmup {
        std::hint::black_box(model.forward(&inputs[i % inputs.len()])?);
    }
    let mut ms = Vec::with_capacity(opts.repetitions);
    for i in 0..opts.repetitions {
        let x = &inputs[i % inputs.len()];
        let t = Instant::now();
        std::hint::black_box(model.forward(std::hint::black_box(x))?);
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = ms.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        frames,
        repetitions: opts.repetitions,
        warmup: opts.warmup,
        mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        p50_ms: percentile(&sorted, 50.0),
        p95_ms: percentile(&sorted, 95.0),
        min_ms: sorted[0],
        max_ms: sorted[sorted.len() - 1],
    })
}

pub fn bench_checkpoint(path: &Path, opts: &BenchOptions) -> Result<BenchReport> {
    bench_inference(&Checkpoint::load(path)?.model, opts)
}
