//! Inputs shared by the benchmarks.

use rppg_core::synth::{generate_synthetic_recording, SynthConfig, SyntheticRecording};

/// A 20 s, 30 fps recording at 10 dB SNR.
pub fn recording(seed: u64) -> SyntheticRecording {
    generate_synthetic_recording(&SynthConfig {
        noise_snr_db: Some(10.0),
        seed,
        ..SynthConfig::default()
    })
    .expect("default synthetic config is valid")
}
