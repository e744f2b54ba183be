//! Multitask 1-D feature-pyramid network: ROI traces in, pulse waveform and
//! biomarker estimates out.

mod checkpoint;
mod layers;
mod network;
mod scaler;
mod train;

pub use checkpoint::Checkpoint;
pub use layers::Tensor;
pub use network::{loss, FpnConfig, FpnModel, ModelOutput};
pub use scaler::{fit_scaler, fittable_targets, StandardScaler};
pub use train::{backward_step, batch_gradient, mean_loss, train, Adam, EpochRecord, TrainConfig, TrainSample};

use crate::biomarker::BiomarkerValues;
use crate::error::{Error, Result};
use crate::signal::{mean, std_dev, PpgSignal, RoiTraceSet, CONSTANT_EPS};

/// Per-channel standardization of trace rows; flat channels become zeros.
pub fn standardize_rows(rows: &[Vec<f64>]) -> Tensor {
    let std_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let (m, s) = (mean(r), std_dev(r));
            if s < CONSTANT_EPS {
                vec![0.0; r.len()]
            } else {
                r.iter().map(|v| (v - m) / s).collect()
            }
        })
        .collect();
    Tensor::from_rows(&std_rows)
}

pub fn prepare_input(traces: &RoiTraceSet) -> Tensor {
    standardize_rows(traces.traces())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub ppg: PpgSignal,
    pub biomarkers: BiomarkerValues,
}

/// Forward pass over a whole recording with biomarkers mapped back to
/// physical units.
pub fn predict_recording(model: &FpnModel, scaler: &StandardScaler, traces: &RoiTraceSet) -> Result<Prediction> {
    if scaler.targets != model.config().targets {
        return Err(Error::ShapeMismatch("scaler targets differ from model heads".into()));
    }
    let rate = traces
        .frame_rate_hz()
        .ok_or_else(|| Error::InvalidSignal("need at least 2 frames".into()))?;
    let out = model.forward(&prepare_input(traces))?;
    Ok(Prediction {
        ppg: PpgSignal::new(out.ppg, rate, traces.frame_timestamps_s()[0])?,
        biomarkers: scaler.inverse(&out.biomarkers),
    })
}

/// Non-overlapping training windows of `window_frames` frames. `ppg` is the
/// reference waveform already sampled at the frame times.
pub fn training_windows(
    traces: &RoiTraceSet,
    ppg: &[f64],
    biomarkers: &[Option<f64>],
    window_frames: usize,
) -> Result<Vec<TrainSample>> {
    if ppg.len() != traces.num_frames() {
        return Err(Error::LengthMismatch(ppg.len(), traces.num_frames()));
    }
    if window_frames < 2 {
        return Err(Error::InvalidConfig(format!("window of {window_frames} frames")));
    }
    let count = traces.num_frames() / window_frames;
    (0..count)
        .map(|i| {
            let s = i * window_frames;
            let rows: Vec<Vec<f64>> = traces.traces().iter().map(|r| r[s..s + window_frames].to_vec()).collect();
            let target = &ppg[s..s + window_frames];
            let (m, sd) = (mean(target), std_dev(target));
            if sd < CONSTANT_EPS {
                return Err(Error::ConstantSignal);
            }
            Ok(TrainSample {
                input: standardize_rows(&rows),
                ppg: target.iter().map(|v| (v - m) / sd).collect(),
                biomarkers: biomarkers.to_vec(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomarker::Biomarker;

    fn traces(frames: usize) -> RoiTraceSet {
        let ts: Vec<f64> = (0..frames).map(|i| i as f64 / 30.0).collect();
        let rows: Vec<Vec<f64>> = (0..21)
            .map(|c| (0..frames).map(|i| 0.5 + 0.01 * ((i * (c + 1)) as f64 * 0.1).sin()).collect())
            .collect();
        let names = (0..7).map(|i| format!("roi{i}")).collect();
        RoiTraceSet::new(rows, ts, names).unwrap()
    }

    #[test]
    fn zero_network_predicts_scaler_means() {
        let m = FpnModel::zeroed(FpnConfig::default()).unwrap();
        let mut s = StandardScaler::identity(&Biomarker::MODEL_DEFAULT);
        for (i, v) in s.mean.iter_mut().enumerate() {
            *v = 10.0 + i as f64;
        }
        let p = predict_recording(&m, &s, &traces(240)).unwrap();
        assert_eq!(p.ppg.len(), 240);
        assert!((p.ppg.sample_rate_hz() - 30.0).abs() < 1e-9);
        for (i, t) in Biomarker::MODEL_DEFAULT.iter().enumerate() {
            assert_eq!(p.biomarkers[t], 10.0 + i as f64);
        }
    }

    #[test]
    fn rescaling_prediction_recovers_raw_heads() {
        let m = FpnModel::new(FpnConfig::default(), 1).unwrap();
        let mut s = StandardScaler::identity(&Biomarker::MODEL_DEFAULT);
        s.mean[0] = 120.0;
        s.std[0] = 17.0;
        let tr = traces(300);
        let p = predict_recording(&m, &s, &tr).unwrap();
        let raw = m.forward(&prepare_input(&tr)).unwrap().biomarkers;
        let back = s.transform(&p.biomarkers);
        for (a, b) in back.iter().zip(&raw) {
            assert!((a.unwrap() - b).abs() < 1e-9);
        }
    }

    #[test]
    fn windows_split_and_standardize() {
        let tr = traces(650);
        let ppg: Vec<f64> = (0..650).map(|i| (i as f64 * 0.2).sin()).collect();
        let w = training_windows(&tr, &ppg, &[Some(1.0)], 300).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].input.channels, 21);
        assert!(mean(&w[1].ppg).abs() < 1e-12);
        assert!((std_dev(&w[1].ppg) - 1.0).abs() < 1e-12);
    }
}
