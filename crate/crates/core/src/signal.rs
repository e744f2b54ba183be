//! Uniformly sampled signal types and the numerics shared by the rest of the
//! pipeline.
//!
//! All statistics use the population (1/N) standard deviation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this standard deviation a signal is treated as constant.
pub const CONSTANT_EPS: f64 = 1e-12;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// A uniformly sampled scalar waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgSignal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    t0_s: f64,
}

impl PpgSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::InvalidRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(Error::InvalidSignal("signal has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample at index {i}")));
        }
        if !t0_s.is_finite() {
            return Err(Error::InvalidSignal("non-finite t0".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            t0_s,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration covered by the samples, `len / rate`.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Same timing, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate_hz, self.t0_s)
    }

    /// Keeps `len` samples starting at `start`, adjusting `t0_s`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.samples.len() || len == 0 {
            return Err(Error::LengthMismatch(start + len, self.samples.len()));
        }
        Self::new(
            self.samples[start..start + len].to_vec(),
            self.sample_rate_hz,
            self.t0_s + start as f64 / self.sample_rate_hz,
        )
    }
}

/// Nominal camera timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTimebase {
    pub nominal_fps: f64,
    pub resolution: (u32, u32),
}

impl FrameTimebase {
    pub fn new(nominal_fps: f64, resolution: (u32, u32)) -> Result<Self> {
        if !(nominal_fps > 0.0) {
            return Err(Error::InvalidRate(nominal_fps));
        }
        Ok(Self {
            nominal_fps,
            resolution,
        })
    }
}

impl Default for FrameTimebase {
    fn default() -> Self {
        Self {
            nominal_fps: 30.0,
            resolution: (640, 480),
        }
    }
}

/// Per-frame channel means for a fixed set of face regions.
///
/// Rows are ordered `roi0.r, roi0.g, roi0.b, roi1.r, ...`; every row has one
/// value per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiTraceSet {
    traces: Vec<Vec<f64>>,
    frame_timestamps_s: Vec<f64>,
    roi_names: Vec<String>,
}

impl RoiTraceSet {
    pub fn new(
        traces: Vec<Vec<f64>>,
        frame_timestamps_s: Vec<f64>,
        roi_names: Vec<String>,
    ) -> Result<Self> {
        if roi_names.is_empty() {
            return Err(Error::ShapeMismatch("trace set has no regions".into()));
        }
        if traces.len() != roi_names.len() * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} trace rows for {} regions",
                traces.len(),
                roi_names.len()
            )));
        }
        let t = frame_timestamps_s.len();
        if t == 0 {
            return Err(Error::ShapeMismatch("trace set has no frames".into()));
        }
        if let Some(row) = traces.iter().find(|r| r.len() != t) {
            return Err(Error::LengthMismatch(row.len(), t));
        }
        if let Some(i) = frame_timestamps_s.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneTimestamps { line: i + 1 });
        }
        for row in &traces {
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidSignal(format!(
                    "trace value {v} is negative or non-finite"
                )));
            }
        }
        Ok(Self {
            traces,
            frame_timestamps_s,
            roi_names,
        })
    }

    pub fn traces(&self) -> &[Vec<f64>] {
        &self.traces
    }

    pub fn frame_timestamps_s(&self) -> &[f64] {
        &self.frame_timestamps_s
    }

    pub fn roi_names(&self) -> &[String] {
        &self.roi_names
    }

    pub fn num_roi(&self) -> usize {
        self.roi_names.len()
    }

    pub fn num_channels(&self) -> usize {
        self.traces.len()
    }

    pub fn num_frames(&self) -> usize {
        self.frame_timestamps_s.len()
    }

    /// Mean frame rate implied by the timestamps; falls back to `None` for a
    /// single frame.
    pub fn frame_rate_hz(&self) -> Option<f64> {
        let ts = &self.frame_timestamps_s;
        if ts.len() < 2 {
            return None;
        }
        Some((ts.len() - 1) as f64 / (ts[ts.len() - 1] - ts[0]))
    }

    /// The `(r, g, b)` rows of one region.
    pub fn roi_rows(&self, roi: usize) -> (&[f64], &[f64], &[f64]) {
        (
            &self.traces[3 * roi],
            &self.traces[3 * roi + 1],
            &self.traces[3 * roi + 2],
        )
    }

    /// Channel means averaged over all regions, one `(r, g, b)` row each.
    pub fn pooled_rgb(&self) -> [Vec<f64>; 3] {
        let n = self.num_roi() as f64;
        let t = self.num_frames();
        let mut out = [vec![0.0; t], vec![0.0; t], vec![0.0; t]];
        for roi in 0..self.num_roi() {
            for (c, acc) in out.iter_mut().enumerate() {
                for (a, v) in acc.iter_mut().zip(&self.traces[3 * roi + c]) {
                    *a += v / n;
                }
            }
        }
        out
    }

    /// Frames `start..start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.num_frames() {
            return Err(Error::LengthMismatch(start + len, self.num_frames()));
        }
        Self::new(
            self.traces
                .iter()
                .map(|r| r[start..start + len].to_vec())
                .collect(),
            self.frame_timestamps_s[start..start + len].to_vec(),
            self.roi_names.clone(),
        )
    }
}

/// Zero-mean, unit (population) standard deviation copy of `signal`.
pub fn standardize(signal: &PpgSignal) -> Result<PpgSignal> {
    let x = signal.samples();
    if x.len() < 2 {
        return Err(Error::InvalidSignal(
            "standardize needs at least 2 samples".into(),
        ));
    }
    signal.with_samples(standardize_values(x)?)
}

/// Slice form of [`standardize`].
pub fn standardize_values(x: &[f64]) -> Result<Vec<f64>> {
    let m = mean(x);
    let s = std_dev(x);
    if s < CONSTANT_EPS {
        return Err(Error::ConstantSignal);
    }
    Ok(x.iter().map(|v| (v - m) / s).collect())
}

/// Linear interpolation onto a `target_rate_hz` grid starting at the same
/// `t0_s`. The output has `round(len * target / rate)` samples; positions past
/// the last input sample hold its value.
pub fn resample_linear(signal: &PpgSignal, target_rate_hz: f64) -> Result<PpgSignal> {
    if !(target_rate_hz > 0.0) || !target_rate_hz.is_finite() {
        return Err(Error::InvalidRate(target_rate_hz));
    }
    let x = signal.samples();
    if x.len() < 2 {
        return Err(Error::InvalidSignal(
            "resampling needs at least 2 samples".into(),
        ));
    }
    let ratio = signal.sample_rate_hz() / target_rate_hz;
    let n_out = ((x.len() as f64) / ratio).round().max(1.0) as usize;
    let last = x.len() - 1;
    let out = (0..n_out)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = pos.floor() as usize;
            if i >= last {
                return x[last];
            }
            let frac = pos - i as f64;
            if frac == 0.0 {
                x[i]
            } else {
                x[i] + (x[i + 1] - x[i]) * frac
            }
        })
        .collect();
    PpgSignal::new(out, target_rate_hz, signal.t0_s())
}

/// Linear interpolation of `signal` at absolute times; times outside the
/// signal hold the nearest end sample.
pub fn interpolate_at(signal: &PpgSignal, times_s: &[f64]) -> Vec<f64> {
    let x = signal.samples();
    let last = x.len() - 1;
    times_s
        .iter()
        .map(|t| {
            let pos = (t - signal.t0_s()) * signal.sample_rate_hz();
            if pos <= 0.0 {
                return x[0];
            }
            let i = pos.floor() as usize;
            if i >= last {
                return x[last];
            }
            x[i] + (x[i + 1] - x[i]) * (pos - i as f64)
        })
        .collect()
}

/// Linear interpolation of `values` sampled at increasing `times_s`; queries
/// outside the sampled span hold the nearest end value.
pub fn interpolate_irregular(times_s: &[f64], values: &[f64], query_s: &[f64]) -> Vec<f64> {
    let last = times_s.len() - 1;
    query_s
        .iter()
        .map(|&t| {
            let j = times_s.partition_point(|&s| s <= t);
            if j == 0 {
                values[0]
            } else if j > last {
                values[last]
            } else {
                let (t0, t1) = (times_s[j - 1], times_s[j]);
                values[j - 1] + (values[j] - values[j - 1]) * (t - t0) / (t1 - t0)
            }
        })
        .collect()
}

/// Product-moment correlation of two equal-length sequences.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidSignal(
            "correlation needs at least 2 samples".into(),
        ));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    let n = x.len() as f64;
    if (sxx / n).sqrt() < CONSTANT_EPS || (syy / n).sqrt() < CONSTANT_EPS {
        return Err(Error::ConstantSignal);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Splits `signal` into windows of `round(window_s * rate)` samples every
/// `round(hop_s * rate)` samples. A trailing remainder shorter than a window is
/// dropped.
pub fn sliding_windows(signal: &PpgSignal, window_s: f64, hop_s: f64) -> Result<Vec<PpgSignal>> {
    if !(window_s > 0.0) || !(hop_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "window {window_s} s and hop {hop_s} s must be positive"
        )));
    }
    let rate = signal.sample_rate_hz();
    let window = (window_s * rate).round() as usize;
    let hop = ((hop_s * rate).round() as usize).max(1);
    if window == 0 || window > signal.len() {
        return Err(Error::WindowTooLong {
            window,
            len: signal.len(),
        });
    }
    (0..=signal.len() - window)
        .step_by(hop)
        .map(|start| signal.slice(start, window))
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn interpolate_at_examples() {
        let s = super::PpgSignal::new(vec![0.0, 10.0, 20.0], 10.0, 5.0).unwrap();
        let got = super::interpolate_at(&s, &[4.0, 5.0, 5.05, 5.15, 5.2, 9.0]);
        for (g, e) in got.iter().zip([0.0, 0.0, 5.0, 15.0, 20.0, 20.0]) {
            assert!((g - e).abs() < 1e-9, "{g} {e}");
        }
    }

    #[test]
    fn irregular_interpolation() {
        let t = [0.0, 1.0, 3.0];
        let v = [0.0, 2.0, 6.0];
        let got = super::interpolate_irregular(&t, &v, &[-1.0, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(got, vec![0.0, 0.0, 1.0, 2.0, 4.0, 6.0, 6.0]);
    }

    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sig(x: Vec<f64>, rate: f64) -> PpgSignal {
        PpgSignal::new(x, rate, 0.0).unwrap()
    }

    #[test]
    fn signal_invariants_are_enforced() {
        assert!(matches!(
            PpgSignal::new(vec![1.0], 0.0, 0.0),
            Err(Error::InvalidRate(_))
        ));
        assert!(PpgSignal::new(vec![], 100.0, 0.0).is_err());
        assert!(PpgSignal::new(vec![f64::NAN], 100.0, 0.0).is_err());
    }

    #[test]
    fn standardize_small_example() {
        let out = standardize(&sig(vec![1.0, 2.0, 3.0], 1.0)).unwrap();
        let e = (1.5f64).sqrt();
        assert_abs_diff_eq!(out.samples()[0], -e, epsilon = 1e-12);
        assert_abs_diff_eq!(out.samples()[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.samples()[2], e, epsilon = 1e-12);
        assert_abs_diff_eq!(out.samples()[2], 1.2247, epsilon = 1e-4);
    }

    #[test]
    fn standardize_rejects_constant() {
        assert!(matches!(
            standardize(&sig(vec![5.0; 3], 1.0)),
            Err(Error::ConstantSignal)
        ));
    }

    #[test]
    fn standardized_sine_has_unit_std() {
        let x: Vec<f64> = (0..1000).map(|i| (2.0 * PI * i as f64 / 97.0).sin()).collect();
        let out = standardize(&sig(x, 100.0)).unwrap();
        // independent recomputation
        let n = out.len() as f64;
        let m: f64 = out.samples().iter().sum::<f64>() / n;
        let v: f64 = out.samples().iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
        assert!(m.abs() < 1e-12);
        assert!((v.sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn resample_constant_and_length() {
        let out = resample_linear(&sig(vec![3.5; 1000], 100.0), 30.0).unwrap();
        assert!((out.len() as i64 - 300).abs() <= 1);
        assert!(out.samples().iter().all(|v| *v == 3.5));
        assert_eq!(out.t0_s(), 0.0);
        assert!(matches!(
            resample_linear(&sig(vec![1.0, 2.0], 100.0), 0.0),
            Err(Error::InvalidRate(_))
        ));
    }

    #[test]
    fn resample_preserves_dominant_frequency() {
        let x: Vec<f64> = (0..2000)
            .map(|i| (2.0 * PI * 1.0 * i as f64 / 100.0).sin())
            .collect();
        let out = resample_linear(&sig(x, 100.0), 30.0).unwrap();
        // plain DFT peak search on a 0.01 Hz grid
        let y = out.samples();
        let best = (10..300)
            .map(|k| {
                let f = k as f64 * 0.01;
                let (re, im) = y.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, v)| {
                    let ph = 2.0 * PI * f * n as f64 / 30.0;
                    (re + v * ph.cos(), im - v * ph.sin())
                });
                (f, re * re + im * im)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((best.0 - 1.0).abs() <= 0.05, "peak {}", best.0);
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7) % 13) as f64).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(pearson_correlation(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson_correlation(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect();
        let c: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos()).collect();
        // direct summation oracle: sum(sin*cos) over a full period
        let dot: f64 = s.iter().zip(&c).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9);
        assert!(pearson_correlation(&s, &c).unwrap().abs() < 1e-6);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantSignal)
        ));
        assert!(matches!(
            pearson_correlation(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::LengthMismatch(2, 3))
        ));
    }

    #[test]
    fn window_examples() {
        let s = sig(vec![0.0; 6000], 100.0);
        let w = sliding_windows(&s, 20.0, 20.0).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|w| w.len() == 2000));

        let s = sig(vec![0.0; 1900], 100.0);
        assert!(matches!(
            sliding_windows(&s, 20.0, 20.0),
            Err(Error::WindowTooLong { .. })
        ));

        let s = sig(vec![0.0; 3000], 100.0);
        let w = sliding_windows(&s, 10.0, 5.0).unwrap();
        let t0: Vec<f64> = w.iter().map(|w| w.t0_s()).collect();
        assert_eq!(t0, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
    }

    fn values(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, n)
    }

    proptest! {
        #[test]
        fn standardize_is_idempotent(x in values(2..200)) {
            prop_assume!(std_dev(&x) > 1e-6);
            let once = standardize_values(&x).unwrap();
            let twice = standardize_values(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn pearson_is_affine_invariant(
            pair in (2usize..100).prop_flat_map(|n| (values(n..n + 1), values(n..n + 1))),
            a in 0.01f64..100.0,
            b in -100.0f64..100.0,
        ) {
            let (x, y) = pair;
            prop_assume!(std_dev(&x) > 1e-3 && std_dev(&y) > 1e-3);
            let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r0 = pearson_correlation(&x, &y).unwrap();
            let r1 = pearson_correlation(&ax, &y).unwrap();
            prop_assert!((r0 - r1).abs() < 1e-9);
            prop_assert!((r0 - pearson_correlation(&y, &x).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn resample_at_same_rate_is_identity(x in values(2..300), rate in 1.0f64..200.0) {
            let s = PpgSignal::new(x.clone(), rate, 1.5).unwrap();
            let out = resample_linear(&s, rate).unwrap();
            prop_assert_eq!(out.len(), x.len());
            for (a, b) in out.samples().iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn non_overlapping_windows_rebuild_prefix(x in values(10..400), w in 1usize..10) {
            let s = PpgSignal::new(x.clone(), 10.0, 0.0).unwrap();
            let win_s = w as f64 / 10.0;
            let parts = sliding_windows(&s, win_s, win_s).unwrap();
            let joined: Vec<f64> = parts.iter().flat_map(|p| p.samples().to_vec()).collect();
            prop_assert_eq!(&joined[..], &x[..joined.len()]);
            prop_assert!(x.len() - joined.len() < w);
        }
    }
}
