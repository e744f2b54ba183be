//! Seeded synthetic recordings with known pulse, shifts and biomarkers.
//!
//! Three clocks are involved. Wall time is what the visible clock displays.
//! The camera stamps frames with its own clock, which reads
//! `wall - video_shift_s`. The contact sensor's sample `n` is stamped
//! `t0 + n / rate` on the wall clock but measures the pulse
//! `ppg_shift_samples` samples later, so a video-derived pulse lags the
//! reference by that many samples.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::biomarker::{Biomarker, BiomarkerValues};
use crate::error::{Error, Result};
use crate::io::{self, BiomarkerEntry, RecordingManifest, SessionState};
use crate::rppg::PBV_SIGNATURE;
use crate::signal::{PpgSignal, RoiTraceSet};
use crate::sync::{ClockEntry, ClockLabelStream};

pub const SECOND_HARMONIC: f64 = 0.3;
pub const DEFAULT_ROIS: [&str; 7] = [
    "forehead",
    "left_cheek",
    "right_cheek",
    "nose",
    "chin",
    "left_temple",
    "right_temple",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub fps: f64,
    pub ppg_rate_hz: f64,
    pub hr_bpm: f64,
    pub hr_drift_bpm_per_min: f64,
    /// Peak respiratory modulation of the instantaneous rate, as a fraction
    /// of `hr_bpm`.
    pub hrv_fraction: f64,
    pub respiration_hz: f64,
    pub pulse_gain_rgb: [f64; 3],
    /// Relative amplitude of the skin-color pulse.
    pub pulse_depth: f64,
    pub baseline_rgb: [f64; 3],
    /// Per-region relative spread of baselines and pulse gains.
    pub roi_spread: f64,
    pub roi_names: Vec<String>,
    /// `None` for a noiseless trace.
    pub noise_snr_db: Option<f64>,
    pub injected_video_shift_s: f64,
    pub injected_ppg_shift_samples: i64,
    /// Camera clock reading at the first frame, seconds of day.
    pub clock_start_s: f64,
    /// Uniform frame timestamp jitter half-width.
    pub frame_jitter_s: f64,
    /// Probability that a frame's clock label is unreadable.
    pub label_dropout: f64,
    /// Probability that a frame's clock label is misread as a random time.
    pub label_garble: f64,
    pub subject_id: String,
    pub camera_id: String,
    pub state: SessionState,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 20.0,
            fps: 30.0,
            ppg_rate_hz: 100.0,
            hr_bpm: 72.0,
            hr_drift_bpm_per_min: 0.0,
            hrv_fraction: 0.05,
            respiration_hz: 0.3,
            pulse_gain_rgb: PBV_SIGNATURE,
            pulse_depth: 0.01,
            baseline_rgb: [0.7, 0.5, 0.4],
            roi_spread: 0.1,
            roi_names: DEFAULT_ROIS.iter().map(|s| s.to_string()).collect(),
            noise_snr_db: None,
            injected_video_shift_s: 0.0,
            injected_ppg_shift_samples: 0,
            clock_start_s: 43_200.0,
            frame_jitter_s: 0.0,
            label_dropout: 0.0,
            label_garble: 0.0,
            subject_id: "synthetic".into(),
            camera_id: "cam0".into(),
            state: SessionState::Rest,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_frames(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn num_ppg_samples(&self) -> usize {
        (self.duration_s * self.ppg_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(30.0..=180.0).contains(&self.hr_bpm) {
            return bad(format!("hr_bpm {} outside [30, 180]", self.hr_bpm));
        }
        if !(self.fps >= 8.0 && self.fps.is_finite()) {
            return bad(format!("fps {}", self.fps));
        }
        if !(self.ppg_rate_hz >= 8.0 && self.ppg_rate_hz.is_finite()) {
            return bad(format!("ppg_rate_hz {}", self.ppg_rate_hz));
        }
        if !(self.duration_s > 0.0) || self.num_frames() < 2 {
            return bad(format!("duration_s {}", self.duration_s));
        }
        if self.injected_ppg_shift_samples.unsigned_abs() as usize >= self.num_ppg_samples() {
            return bad(format!("ppg shift {} exceeds the signal", self.injected_ppg_shift_samples));
        }
        if !self.injected_video_shift_s.is_finite() || !self.clock_start_s.is_finite() {
            return bad("non-finite clock setting".into());
        }
        let end_hr = self.hr_bpm + self.hr_drift_bpm_per_min * self.duration_s / 60.0;
        let swing = self.hrv_fraction * self.hr_bpm;
        if end_hr - swing <= 0.0 || self.hr_bpm - swing <= 0.0 {
            return bad("heart rate drops to zero".into());
        }
        if !(0.0..0.5).contains(&self.hrv_fraction) || !(self.respiration_hz > 0.0) {
            return bad("hrv_fraction must be in [0, 0.5) with positive respiration_hz".into());
        }
        if self.baseline_rgb.iter().any(|b| !(*b > 0.0)) {
            return bad("baseline_rgb must be positive".into());
        }
        if !(0.0..1.0).contains(&self.pulse_depth) || !(0.0..0.5).contains(&self.roi_spread) {
            return bad("pulse_depth must be in [0, 1) and roi_spread in [0, 0.5)".into());
        }
        if self.roi_names.is_empty() {
            return bad("no regions".into());
        }
        if !(0.0..=1.0).contains(&self.label_dropout) || !(0.0..=1.0).contains(&self.label_garble) {
            return bad("label probabilities must be in [0, 1]".into());
        }
        if !(0.0..0.5).contains(&(self.frame_jitter_s * self.fps)) {
            return bad(format!("frame_jitter_s {}", self.frame_jitter_s));
        }
        if self.noise_snr_db.is_some_and(|s| !s.is_finite()) {
            return bad("noise_snr_db must be finite".into());
        }
        Ok(())
    }

    /// Pulse phase in radians at `u` seconds after the first frame.
    fn phase(&self, u: f64) -> f64 {
        let f0 = self.hr_bpm / 60.0;
        let w = 2.0 * PI * self.respiration_hz;
        let a = self.hrv_fraction * f0;
        2.0 * PI * (f0 * u + self.hr_drift_bpm_per_min * u * u / 7200.0 + a * (1.0 - (w * u).cos()) / w)
    }

    /// Unit fundamental plus the second harmonic.
    pub fn pulse(&self, u: f64) -> f64 {
        let ph = self.phase(u);
        ph.sin() + SECOND_HARMONIC * (2.0 * ph).sin()
    }

    /// Instantaneous heart rate in bpm.
    pub fn hr_at(&self, u: f64) -> f64 {
        self.hr_bpm
            + self.hr_drift_bpm_per_min * u / 60.0
            + self.hrv_fraction * self.hr_bpm * (2.0 * PI * self.respiration_hz * u).sin()
    }
}

/// Everything injected into a synthetic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub mean_hr_bpm: f64,
    pub video_shift_s: f64,
    pub ppg_shift_samples: i64,
    /// Wall-clock time of the first frame.
    pub wall_start_s: f64,
    /// Noiseless pulse at each frame.
    pub frame_pulse: Vec<f64>,
    pub roi_baselines: Vec<[f64; 3]>,
    pub roi_gains: Vec<f64>,
    pub noise_std: Option<Vec<[f64; 3]>>,
    pub biomarkers: BiomarkerValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub traces: RoiTraceSet,
    pub reference_ppg: PpgSignal,
    pub clock_labels: ClockLabelStream,
    pub manifest: RecordingManifest,
    pub ground_truth: GroundTruth,
}

pub const TRACE_FILE: &str = "traces.csv";
pub const PPG_FILE: &str = "reference_ppg.csv";
pub const CLOCK_FILE: &str = "clock_labels.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "ground_truth.json";

impl SyntheticRecording {
    /// Writes the recording files, its manifest and the ground truth into
    /// `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_trace_file(&dir.join(TRACE_FILE), &self.traces)?;
        io::write_signal_file(&dir.join(PPG_FILE), &self.reference_ppg)?;
        io::write_clock_label_file(&dir.join(CLOCK_FILE), &self.clock_labels)?;
        self.manifest.save(&dir.join(MANIFEST_FILE))?;
        let mut truth = serde_json::to_string_pretty(&self.ground_truth)?;
        truth.push('\n');
        io::write_atomic(&dir.join(TRUTH_FILE), truth.as_bytes())
    }
}

fn clock_text(second_of_day: i64) -> String {
    let s = second_of_day.rem_euclid(86_400);
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Table 2 draw, clipped to the cohort range.
fn cohort_draw(b: Biomarker, rng: &mut ChaCha8Rng) -> f64 {
    let s = b.stats();
    if b.is_categorical() {
        return if rng.random::<bool>() { 1.0 } else { 0.0 };
    }
    let v = Normal::new(s.mean, s.std).expect("positive std").sample(rng);
    v.clamp(s.min, s.max)
}

/// Blood pressure depends on heart rate and, weakly, on skin brightness
/// relative to the configured baseline. The rest are cohort draws, except
/// heart and respiratory rate which come from the generator settings.
fn synth_biomarkers(cfg: &SynthConfig, mean_hr: f64, brightness: f64, rng: &mut ChaCha8Rng) -> BiomarkerValues {
    let clip = |b: Biomarker, v: f64| {
        let s = b.stats();
        v.clamp(s.min, s.max)
    };
    Biomarker::ALL
        .iter()
        .map(|&b| {
            let drawn = cohort_draw(b, rng);
            let v = match b {
                Biomarker::Systolic => clip(b, 80.0 + 0.45 * mean_hr + 50.0 * (brightness - 1.0)),
                Biomarker::Diastolic => clip(b, 45.0 + 0.3 * mean_hr + 30.0 * (brightness - 1.0)),
                Biomarker::HeartRate => mean_hr,
                Biomarker::RespiratoryRate => clip(b, 60.0 * cfg.respiration_hz),
                _ => drawn,
            };
            (b, v)
        })
        .collect()
}

pub fn generate_synthetic_recording(cfg: &SynthConfig) -> Result<SyntheticRecording> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_frames = cfg.num_frames();
    let n_roi = cfg.roi_names.len();

    let mut cam_ts = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let jitter = cfg.frame_jitter_s * (2.0 * rng.random::<f64>() - 1.0);
        cam_ts.push(cfg.clock_start_s + i as f64 / cfg.fps + jitter);
    }
    let wall_start = cfg.clock_start_s + cfg.injected_video_shift_s;
    // Seconds since the first frame, on the wall clock.
    let u: Vec<f64> = cam_ts.iter().map(|t| t - cfg.clock_start_s).collect();
    let frame_pulse: Vec<f64> = u.iter().map(|&t| cfg.pulse(t)).collect();

    let mut roi_baselines = Vec::with_capacity(n_roi);
    let mut roi_gains = Vec::with_capacity(n_roi);
    for _ in 0..n_roi {
        let mut b = cfg.baseline_rgb;
        for v in &mut b {
            *v *= 1.0 + cfg.roi_spread * (2.0 * rng.random::<f64>() - 1.0);
        }
        roi_baselines.push(b);
        roi_gains.push(1.0 + 3.0 * cfg.roi_spread * (2.0 * rng.random::<f64>() - 1.0));
    }

    let pulse_rms = (frame_pulse.iter().map(|p| p * p).sum::<f64>() / n_frames as f64).sqrt();
    let mut traces = Vec::with_capacity(3 * n_roi);
    let mut noise_std = Vec::with_capacity(n_roi);
    for (b, g) in roi_baselines.iter().zip(&roi_gains) {
        let mut sd = [0.0; 3];
        for c in 0..3 {
            let amp = b[c] * cfg.pulse_depth * g * cfg.pulse_gain_rgb[c];
            let noise = cfg.noise_snr_db.map(|snr| {
                sd[c] = amp.abs() * pulse_rms / 10f64.powf(snr / 20.0);
                Normal::new(0.0, sd[c]).expect("finite std")
            });
            let row = frame_pulse
                .iter()
                .map(|p| {
                    let e = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                    (b[c] * (1.0 + cfg.pulse_depth * g * cfg.pulse_gain_rgb[c] * p) + e).max(0.0)
                })
                .collect();
            traces.push(row);
        }
        noise_std.push(sd);
    }
    let traces = RoiTraceSet::new(traces, cam_ts.clone(), cfg.roi_names.clone())?;

    let k = cfg.injected_ppg_shift_samples as f64;
    let ppg: Vec<f64> = (0..cfg.num_ppg_samples())
        .map(|n| cfg.pulse((n as f64 + k) / cfg.ppg_rate_hz))
        .collect();
    let reference_ppg = PpgSignal::new(ppg, cfg.ppg_rate_hz, wall_start)?;

    let entries = cam_ts
        .iter()
        .map(|&t| {
            let label = if rng.random::<f64>() < cfg.label_dropout {
                None
            } else if rng.random::<f64>() < cfg.label_garble {
                Some(clock_text(rng.random_range(0..86_400)))
            } else {
                Some(clock_text((t + cfg.injected_video_shift_s).floor() as i64))
            };
            ClockEntry {
                frame_timestamp_s: t,
                label,
            }
        })
        .collect();
    let clock_labels = ClockLabelStream::new(cfg.camera_id.clone(), entries)?;

    let mean_hr = u.iter().map(|&t| cfg.hr_at(t)).sum::<f64>() / n_frames as f64;
    let nominal = cfg.baseline_rgb.iter().sum::<f64>() / 3.0;
    let brightness = roi_baselines.iter().flatten().sum::<f64>() / (3 * n_roi) as f64 / nominal;
    let biomarkers = synth_biomarkers(cfg, mean_hr, brightness, &mut rng);

    let manifest = RecordingManifest {
        subject_id: cfg.subject_id.clone(),
        state: cfg.state,
        camera_id: cfg.camera_id.clone(),
        trace_path: TRACE_FILE.into(),
        reference_ppg_path: PPG_FILE.into(),
        clock_label_path: Some(CLOCK_FILE.into()),
        biomarkers: biomarkers
            .iter()
            .map(|(b, v)| {
                (
                    *b,
                    BiomarkerEntry {
                        value: *v,
                        unit: b.unit().to_string(),
                    },
                )
            })
            .collect(),
        fps: cfg.fps,
        notes: format!("synthetic, seed {}", cfg.seed),
    };
    manifest.check_fields()?;

    Ok(SyntheticRecording {
        traces,
        reference_ppg,
        clock_labels,
        manifest,
        ground_truth: GroundTruth {
            seed: cfg.seed,
            mean_hr_bpm: mean_hr,
            video_shift_s: cfg.injected_video_shift_s,
            ppg_shift_samples: cfg.injected_ppg_shift_samples,
            wall_start_s: wall_start,
            frame_pulse,
            roi_baselines,
            roi_gains,
            noise_std: cfg.noise_snr_db.map(|_| noise_std),
            biomarkers,
        },
    })
}
