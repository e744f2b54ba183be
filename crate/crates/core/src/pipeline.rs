//! Glue between the stages: time bases, band-passing and per-recording
//! synchronization.
//!
//! Video-derived signals live on the camera clock, sampled at frame
//! timestamps. The reference PPG lives on the wall clock. A recording's
//! [`RecordingSync`] maps one onto the other.

use serde::{Deserialize, Serialize};

use crate::biomarker::BiomarkerValues;
use crate::error::Result;
use crate::filter::{design_cheby2_bandpass, filtfilt};
use crate::model::{predict_recording, training_windows, FpnModel, Prediction, StandardScaler, TrainSample};
use crate::rppg::{RgbTrace, RppgMethod};
use crate::signal::{interpolate_irregular, PpgSignal, RoiTraceSet};
use crate::sync::{align_ppg, cleanse_labels, record_time_shift, ClockLabelStream, DEFAULT_MAX_SHIFT_S};

pub const FILTER_ORDER: usize = 4;
pub const STOPBAND_DB: f64 = 30.0;
/// Stopband edges of the pulse band-pass.
pub const PULSE_BAND_HZ: (f64, f64) = (0.4, 8.0);

/// Chebyshev II band-pass at the signal's own rate, applied forward and
/// backward.
pub fn bandpass(signal: &PpgSignal, band_hz: (f64, f64)) -> Result<PpgSignal> {
    let f = design_cheby2_bandpass(FILTER_ORDER, band_hz.0, band_hz.1, STOPBAND_DB, signal.sample_rate_hz())?;
    filtfilt(&f, signal)
}

/// Unsupervised pulse from all regions pooled.
pub fn unsupervised_ppg(traces: &RoiTraceSet, method: RppgMethod) -> Result<PpgSignal> {
    method.apply(&RgbTrace::pooled(traces)?)
}

/// Timing of one recording relative to its reference PPG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordingSync {
    /// Wall clock minus camera clock.
    pub video_shift_s: f64,
    /// Residual lag of the video pulse behind the reference, in reference
    /// samples, after the clock shift is applied.
    pub ppg_shift_samples: i64,
    pub correlation: f64,
}

impl RecordingSync {
    pub fn identity() -> Self {
        Self {
            video_shift_s: 0.0,
            ppg_shift_samples: 0,
            correlation: f64::NAN,
        }
    }
}

/// Values sampled at camera `frame_times_s`, interpolated onto the
/// reference's sample grid. The result covers the reference exactly, so
/// metrics can compare it sample for sample.
pub fn onto_reference_grid(
    values: &[f64],
    frame_times_s: &[f64],
    sync: &RecordingSync,
    reference: &PpgSignal,
) -> Result<PpgSignal> {
    let rate = reference.sample_rate_hz();
    let lag = sync.ppg_shift_samples as f64 / rate;
    let wall: Vec<f64> = frame_times_s.iter().map(|t| t + sync.video_shift_s - lag).collect();
    let grid: Vec<f64> = (0..reference.len()).map(|n| reference.t0_s() + n as f64 / rate).collect();
    reference.with_samples(interpolate_irregular(&wall, values, &grid))
}

/// The reference pulse at each camera frame.
pub fn reference_at_frames(reference: &PpgSignal, frame_times_s: &[f64], sync: &RecordingSync) -> Vec<f64> {
    let rate = reference.sample_rate_hz();
    let t0 = reference.t0_s();
    let lag = sync.ppg_shift_samples as f64 / rate;
    let grid: Vec<f64> = (0..reference.len()).map(|n| t0 + n as f64 / rate).collect();
    let query: Vec<f64> = frame_times_s.iter().map(|t| t + sync.video_shift_s - lag).collect();
    interpolate_irregular(&grid, reference.samples(), &query)
}

/// Coarse shift from the visible clock, when there is one, then a fine
/// lag from correlating the POS pulse with the reference.
pub fn synchronize(
    traces: &RoiTraceSet,
    reference: &PpgSignal,
    clock: Option<&ClockLabelStream>,
) -> Result<RecordingSync> {
    let video_shift_s = match clock {
        Some(c) => record_time_shift(&cleanse_labels(c))?.shift_s,
        None => 0.0,
    };
    let coarse = RecordingSync {
        video_shift_s,
        ppg_shift_samples: 0,
        correlation: f64::NAN,
    };
    let pulse = unsupervised_ppg(traces, RppgMethod::Pos)?;
    fine_align(pulse.samples(), traces.frame_timestamps_s(), coarse, reference)
}

/// Lag search around a known clock shift.
pub fn fine_align(
    pulse_at_frames: &[f64],
    frame_times_s: &[f64],
    coarse: RecordingSync,
    reference: &PpgSignal,
) -> Result<RecordingSync> {
    let coarse = RecordingSync {
        ppg_shift_samples: 0,
        ..coarse
    };
    let video = onto_reference_grid(pulse_at_frames, frame_times_s, &coarse, reference)?;
    let rate = reference.sample_rate_hz();
    // The clock estimate can be off by up to half a frame; widen the search
    // so the full lag range stays reachable.
    let frame_margin = match frame_times_s {
        [a, .., b] if b > a => (rate * (b - a) / (2.0 * (frame_times_s.len() - 1) as f64)).ceil() as usize,
        _ => 0,
    };
    let max_shift = (DEFAULT_MAX_SHIFT_S * rate).round() as usize + frame_margin;
    let a = align_ppg(&bandpass(reference, PULSE_BAND_HZ)?, &bandpass(&video, PULSE_BAND_HZ)?, max_shift)?;
    Ok(RecordingSync {
        ppg_shift_samples: a.shift,
        correlation: a.correlation,
        ..coarse
    })
}

/// Training windows of one synchronized recording, biomarkers scaled.
pub fn training_samples(
    traces: &RoiTraceSet,
    reference: &PpgSignal,
    sync: &RecordingSync,
    biomarkers: &BiomarkerValues,
    scaler: &StandardScaler,
    window_frames: usize,
) -> Result<Vec<TrainSample>> {
    let target = reference_at_frames(reference, traces.frame_timestamps_s(), sync);
    training_windows(traces, &target, &scaler.transform(biomarkers), window_frames)
}

/// Model prediction with the pulse moved onto the reference grid.
pub fn predict_on_reference(
    model: &FpnModel,
    scaler: &StandardScaler,
    traces: &RoiTraceSet,
    sync: &RecordingSync,
    reference: &PpgSignal,
) -> Result<Prediction> {
    let p = predict_recording(model, scaler, traces)?;
    Ok(Prediction {
        ppg: onto_reference_grid(p.ppg.samples(), traces.frame_timestamps_s(), sync, reference)?,
        biomarkers: p.biomarkers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_recording, SynthConfig};

    #[test]
    fn synchronize_recovers_generator_timing() {
        for (seed, shift, k) in [(1, -2.7, 17), (2, 1.4, -33), (3, 0.0, 0)] {
            let rec = generate_synthetic_recording(&SynthConfig {
                injected_video_shift_s: shift,
                injected_ppg_shift_samples: k,
                noise_snr_db: Some(10.0),
                frame_jitter_s: 0.002,
                seed,
                ..SynthConfig::default()
            })
            .unwrap();
            let s = synchronize(&rec.traces, &rec.reference_ppg, Some(&rec.clock_labels)).unwrap();
            assert!((s.video_shift_s - shift).abs() <= 0.5 / 30.0);
            // The clock error is absorbed by the fine lag.
            let total_s = s.video_shift_s - s.ppg_shift_samples as f64 / 100.0;
            let want_s = shift - k as f64 / 100.0;
            assert!((total_s - want_s).abs() <= 0.015, "{s:?}");

            let on_frames = reference_at_frames(&rec.reference_ppg, rec.traces.frame_timestamps_s(), &s);
            let truth = &rec.ground_truth.frame_pulse;
            let r = crate::signal::pearson_correlation(&on_frames[30..570], &truth[30..570]).unwrap();
            assert!(r > 0.97, "{r}");
        }
    }

    #[test]
    fn grid_mapping_round_trips_a_smooth_signal() {
        let rec = generate_synthetic_recording(&SynthConfig {
            injected_video_shift_s: 0.5,
            injected_ppg_shift_samples: 8,
            ..SynthConfig::default()
        })
        .unwrap();
        let sync = RecordingSync {
            video_shift_s: 0.5,
            ppg_shift_samples: 8,
            correlation: 1.0,
        };
        let mapped = onto_reference_grid(
            &rec.ground_truth.frame_pulse,
            rec.traces.frame_timestamps_s(),
            &sync,
            &rec.reference_ppg,
        )
        .unwrap();
        assert_eq!(mapped.len(), rec.reference_ppg.len());
        let (a, b) = (&mapped.samples()[50..1900], &rec.reference_ppg.samples()[50..1900]);
        let worst = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
    }
}
