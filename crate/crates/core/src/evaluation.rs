//! Heart-rate, waveform and biomarker metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::biomarker::{Biomarker, BiomarkerValues};
use crate::error::{Error, Result};
use crate::filter::{design_cheby2_bandpass, filtfilt};
use crate::signal::{resample_linear, standardize_values, std_dev, PpgSignal, CONSTANT_EPS};

pub const HR_BAND_HZ: (f64, f64) = (0.5, 3.0);
pub const HR_MIN_DURATION_S: f64 = 4.0;
pub const HR_SEGMENT_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrEstimate {
    pub bpm: f64,
    /// Power of the peak bin over the total non-DC power. Low values flag a
    /// spectrum whose energy lies mostly outside the search band.
    pub peak_power_fraction: f64,
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos())
        .collect()
}

/// One-sided power spectrum of the zero-mean, Hann-windowed signal padded to
/// the next power of two. Returns the powers and the bin width.
fn periodogram(x: &[f64], fs: f64) -> (Vec<f64>, f64) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let nfft = x.len().next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .zip(hann(x.len()))
        .map(|(v, w)| Complex64::new((v - m) * w, 0.0))
        .collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let power = buf[..nfft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
    (power, fs / nfft as f64)
}

/// Most powerful frequency inside `band_hz`, refined by a parabola through
/// the log powers of the peak bin and its neighbors.
pub fn hr_from_ppg(signal: &PpgSignal, band_hz: (f64, f64)) -> Result<HrEstimate> {
    let fs = signal.sample_rate_hz();
    let (lo, hi) = band_hz;
    if !(lo > 0.0 && lo < hi && hi < fs / 2.0) {
        return Err(Error::InvalidBand {
            low_hz: lo,
            high_hz: hi,
            sample_rate_hz: fs,
        });
    }
    let needed = (HR_MIN_DURATION_S * fs - 1e-9).ceil() as usize;
    if signal.len() < needed {
        return Err(Error::SignalTooShort {
            needed,
            len: signal.len(),
        });
    }
    let x = signal.samples();
    if std_dev(x) < CONSTANT_EPS {
        return Err(Error::ConstantSignal);
    }
    let (p, df) = periodogram(x, fs);
    let k_lo = (lo / df).ceil() as usize;
    let k_hi = ((hi / df).floor() as usize).min(p.len() - 1);
    if k_lo > k_hi {
        return Err(Error::SignalTooShort {
            needed: (fs / (hi - lo)).ceil() as usize,
            len: signal.len(),
        });
    }
    let k = (k_lo..=k_hi).fold(k_lo, |b, k| if p[k] > p[b] { k } else { b });
    let mut offset = 0.0;
    if k > 0 && k + 1 < p.len() && p[k - 1] > 0.0 && p[k] > 0.0 && p[k + 1] > 0.0 {
        let (a, b, c) = (p[k - 1].ln(), p[k].ln(), p[k + 1].ln());
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            offset = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
        }
    }
    let f = ((k as f64 + offset) * df).clamp(lo, hi);
    let total: f64 = p[1..].iter().sum();
    Ok(HrEstimate {
        bpm: 60.0 * f,
        peak_power_fraction: if total > 0.0 { p[k] / total } else { 0.0 },
    })
}

/// Per-segment `(reference_bpm, predicted_bpm)` over non-overlapping segments.
pub fn hr_segments(predicted: &PpgSignal, reference: &PpgSignal, segment_s: f64) -> Result<Vec<(f64, f64)>> {
    let fs = reference.sample_rate_hz();
    if (predicted.sample_rate_hz() - fs).abs() > 1e-9 * fs {
        return Err(Error::RateMismatch(predicted.sample_rate_hz(), fs));
    }
    let seg = (segment_s * fs).round() as usize;
    if seg == 0 {
        return Err(Error::NoSegments);
    }
    let (np, nr) = (predicted.len(), reference.len());
    if np.abs_diff(nr) >= seg {
        return Err(Error::LengthMismatch(np, nr));
    }
    let count = np.min(nr) / seg;
    if count == 0 {
        return Err(Error::NoSegments);
    }
    (0..count)
        .map(|i| {
            let r = hr_from_ppg(&reference.slice(i * seg, seg)?, HR_BAND_HZ)?;
            let p = hr_from_ppg(&predicted.slice(i * seg, seg)?, HR_BAND_HZ)?;
            Ok((r.bpm, p.bpm))
        })
        .collect()
}

/// Mean absolute heart-rate error over non-overlapping segments.
pub fn hr_mae(predicted: &PpgSignal, reference: &PpgSignal, segment_s: f64) -> Result<f64> {
    let segs = hr_segments(predicted, reference, segment_s)?;
    Ok(segs.iter().map(|(r, p)| (r - p).abs()).sum::<f64>() / segs.len() as f64)
}

/// Mean absolute difference of the two standardized waveforms.
pub fn ppg_mae(predicted: &PpgSignal, reference: &PpgSignal) -> Result<f64> {
    ppg_mae_values(predicted.samples(), reference.samples())
}

pub fn ppg_mae_values(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::LengthMismatch(predicted.len(), reference.len()));
    }
    let p = standardize_values(predicted)?;
    let r = standardize_values(reference)?;
    Ok(p.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

/// Resamples the prediction onto the reference rate and crops both to the
/// common length.
pub fn to_reference_grid(predicted: &PpgSignal, reference: &PpgSignal) -> Result<(PpgSignal, PpgSignal)> {
    let p = if (predicted.sample_rate_hz() - reference.sample_rate_hz()).abs() > 1e-9 * reference.sample_rate_hz() {
        resample_linear(predicted, reference.sample_rate_hz())?
    } else {
        predicted.clone()
    };
    let n = p.len().min(reference.len());
    Ok((p.slice(0, n)?, reference.slice(0, n)?))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Best constant predictor per target: the median for regression targets,
/// the majority class for categorical ones (ties go to class 0).
pub fn constant_baseline(train: &[BiomarkerValues], targets: &[Biomarker]) -> Result<BiomarkerValues> {
    targets
        .iter()
        .map(|&t| {
            let mut v: Vec<f64> = train.iter().filter_map(|r| r.get(&t).copied()).collect();
            if v.is_empty() {
                return Err(Error::InsufficientData(format!("no values for {t}")));
            }
            let c = if t.is_categorical() {
                let ones = v.iter().filter(|x| **x >= 0.5).count();
                if 2 * ones > v.len() {
                    1.0
                } else {
                    0.0
                }
            } else {
                median(&mut v)
            };
            Ok((t, c))
        })
        .collect()
}

/// Mean absolute error, or accuracy after thresholding at 0.5 for
/// categorical targets. `None` when no recording has both values.
pub fn biomarker_metric(target: Biomarker, predicted: &[BiomarkerValues], truth: &[BiomarkerValues]) -> Option<(f64, usize)> {
    let pairs: Vec<(f64, f64)> = predicted
        .iter()
        .zip(truth)
        .filter_map(|(p, t)| Some((*p.get(&target)?, *t.get(&target)?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let m = if target.is_categorical() {
        pairs.iter().filter(|(p, t)| (*p >= 0.5) == (*t >= 0.5)).count() as f64 / n
    } else {
        pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / n
    };
    Some((m, pairs.len()))
}

/// One recording's prediction paired with its reference.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub id: String,
    pub predicted_ppg: Option<PpgSignal>,
    pub reference_ppg: Option<PpgSignal>,
    pub predicted_biomarkers: BiomarkerValues,
    pub true_biomarkers: BiomarkerValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub segment_s: f64,
    /// Band-pass applied to the prediction before heart-rate extraction.
    pub prefilter_band_hz: Option<(f64, f64)>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            segment_s: HR_SEGMENT_S,
            prefilter_band_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetric {
    pub metric: String,
    pub value: f64,
    pub unit: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub dataset: String,
    /// Heart-rate MAE pooled over every segment, in bpm.
    pub hr_mae_bpm: Option<f64>,
    /// Waveform MAE averaged over recordings, in standardized units.
    pub ppg_mae: Option<f64>,
    pub biomarkers: BTreeMap<Biomarker, TargetMetric>,
    pub num_recordings: usize,
    pub num_segments: usize,
    pub failures: Vec<(String, String)>,
}

#[derive(Serialize)]
struct ReportRow<'a> {
    model: &'a str,
    dataset: &'a str,
    target: &'a str,
    metric: &'a str,
    value: f64,
    unit: &'a str,
    count: usize,
}

impl MetricReport {
    fn rows(&self) -> Vec<ReportRow<'_>> {
        let mut rows = Vec::new();
        let base = |target, metric, value, unit, count| ReportRow {
            model: &self.model,
            dataset: &self.dataset,
            target,
            metric,
            value,
            unit,
            count,
        };
        if let Some(v) = self.hr_mae_bpm {
            rows.push(base("hr", "mae", v, "bpm", self.num_segments));
        }
        if let Some(v) = self.ppg_mae {
            rows.push(base("ppg", "mae", v, "std", self.num_recordings - self.failures.len()));
        }
        for (t, m) in &self.biomarkers {
            rows.push(base(t.key(), &m.metric, m.value, &m.unit, m.count));
        }
        rows
    }

    /// One JSON record per target.
    pub fn to_jsonl(&self) -> String {
        self.rows()
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain struct") + "\n")
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,dataset,target,metric,value,unit,count\n");
        for r in self.rows() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.model, r.dataset, r.target, r.metric, r.value, r.unit, r.count
            );
        }
        out
    }
}

fn prefiltered(signal: &PpgSignal, band: Option<(f64, f64)>) -> Result<PpgSignal> {
    match band {
        Some((lo, hi)) => {
            let f = design_cheby2_bandpass(4, lo, hi, 30.0, signal.sample_rate_hz())?;
            filtfilt(&f, signal)
        }
        None => Ok(signal.clone()),
    }
}

/// Scores every record. Per-recording failures are collected in the report
/// rather than aborting the run.
pub fn evaluate_suite(
    model: &str,
    dataset: &str,
    records: &[EvalRecord],
    targets: &[Biomarker],
    options: &EvalOptions,
) -> MetricReport {
    let mut segment_errors = Vec::new();
    let mut ppg_maes = Vec::new();
    let mut failures = Vec::new();
    for rec in records {
        let (Some(pred), Some(reference)) = (&rec.predicted_ppg, &rec.reference_ppg) else {
            continue;
        };
        let result = (|| -> Result<(Vec<(f64, f64)>, f64)> {
            let (p, r) = to_reference_grid(pred, reference)?;
            let mae = ppg_mae(&p, &r)?;
            let segs = hr_segments(&prefiltered(&p, options.prefilter_band_hz)?, &r, options.segment_s)?;
            Ok((segs, mae))
        })();
        match result {
            Ok((segs, mae)) => {
                segment_errors.extend(segs.iter().map(|(r, p)| (r - p).abs()));
                ppg_maes.push(mae);
            }
            Err(e) => failures.push((rec.id.clone(), e.to_string())),
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let predicted: Vec<BiomarkerValues> = records.iter().map(|r| r.predicted_biomarkers.clone()).collect();
    let truth: Vec<BiomarkerValues> = records.iter().map(|r| r.true_biomarkers.clone()).collect();
    let biomarkers = targets
        .iter()
        .filter_map(|&t| {
            let (value, count) = biomarker_metric(t, &predicted, &truth)?;
            let (metric, unit) = if t.is_categorical() {
                ("accuracy", "fraction")
            } else {
                ("mae", t.unit())
            };
            Some((
                t,
                TargetMetric {
                    metric: metric.into(),
                    value,
                    unit: unit.into(),
                    count,
                },
            ))
        })
        .collect();
    MetricReport {
        model: model.into(),
        dataset: dataset.into(),
        hr_mae_bpm: mean(&segment_errors),
        ppg_mae: mean(&ppg_maes),
        biomarkers,
        num_recordings: records.len(),
        num_segments: segment_errors.len(),
        failures,
    }
}
