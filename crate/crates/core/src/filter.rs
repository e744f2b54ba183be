//! Chebyshev type II band-pass design and zero-phase application.
//!
//! Design follows the classic analog route: low-pass prototype zeros and
//! poles, low-pass to band-pass transform, bilinear transform with
//! pre-warped edges, then nearest-pair grouping into second-order sections.
//! Sections use transposed direct form II.
//!
//! [`filtfilt`] pads both ends with a mirror image of the signal (no
//! endpoint offset, so a signal ending mid-cycle does not turn into a step).
//! The pad covers the impulse-response decay of the slowest pole, capped by
//! the signal length; the minimum accepted length is three times the filter
//! memory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::PpgSignal;

/// One biquad, `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub const IDENTITY: Biquad = Biquad {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Largest pole magnitude of the section.
    pub fn pole_radius(&self) -> f64 {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            self.a2.abs().sqrt()
        } else {
            let s = disc.sqrt();
            ((-self.a1 + s) / 2.0).abs().max(((-self.a1 - s) / 2.0).abs())
        }
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + z_inv * self.b1 + z2 * self.b2) / (1.0 + z_inv * self.a1 + z2 * self.a2)
    }

    /// Initial state for a unit step that is already at steady state.
    fn step_state(&self) -> [f64; 2] {
        // (I - A^T) zi = b[1:] - a[1:] * b0, A the companion matrix of a
        let (m00, m01, m10, m11) = (1.0 + self.a1, -1.0, self.a2, 1.0);
        let r0 = self.b1 - self.a1 * self.b0;
        let r1 = self.b2 - self.a2 * self.b0;
        let det = m00 * m11 - m01 * m10;
        [(r0 * m11 - m01 * r1) / det, (m00 * r1 - m10 * r0) / det]
    }

    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMeta {
    pub order: usize,
    pub family: String,
    pub low_hz: f64,
    pub high_hz: f64,
    pub stop_atten_db: f64,
    pub sample_rate_hz: f64,
}

/// A cascade of stable second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    meta: Option<DesignMeta>,
}

impl IirFilter {
    /// Builds a cascade from explicit sections; rejects unstable ones.
    pub fn from_sections(sections: Vec<Biquad>, meta: Option<DesignMeta>) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::DesignFailure("filter has no sections".into()));
        }
        for (i, s) in sections.iter().enumerate() {
            let vals = [s.b0, s.b1, s.b2, s.a1, s.a2];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::DesignFailure(format!("section {i} has non-finite coefficients")));
            }
            if s.pole_radius() >= 1.0 {
                return Err(Error::DesignFailure(format!(
                    "section {i} is unstable (pole radius {})",
                    s.pole_radius()
                )));
            }
        }
        Ok(Self { sections, meta })
    }

    pub fn identity() -> Self {
        Self {
            sections: vec![Biquad::IDENTITY],
            meta: None,
        }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn meta(&self) -> Option<&DesignMeta> {
        self.meta.as_ref()
    }

    /// Three times the filter memory; [`filtfilt`] needs a longer input.
    pub fn min_len(&self) -> usize {
        3 * 2 * self.sections.len()
    }

    /// Samples for the slowest pole to decay by 60 dB.
    pub fn decay_len(&self) -> usize {
        let r = self
            .sections
            .iter()
            .map(Biquad::pole_radius)
            .fold(0.0f64, f64::max);
        if r <= 0.0 {
            return 0;
        }
        (1e-3f64.ln() / r.ln()).ceil() as usize
    }

    /// Edge padding [`filtfilt`] applies to an `n`-sample input.
    pub fn pad_len(&self, n: usize) -> usize {
        self.decay_len().max(self.min_len()).min(n.saturating_sub(1))
    }

    /// Single forward pass, optionally starting from per-section states.
    fn run(&self, x: &mut [f64], init: Option<f64>) {
        let zi: Vec<[f64; 2]> = self.steady_state();
        for (s, z0) in self.sections.iter().zip(&zi) {
            let mut z = match init {
                Some(x0) => [z0[0] * x0, z0[1] * x0],
                None => [0.0, 0.0],
            };
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b0 * input + z[0];
                z[0] = s.b1 * input - s.a1 * y + z[1];
                z[1] = s.b2 * input - s.a2 * y;
                *v = y;
            }
        }
    }

    /// Steady-state section states for a unit step through the cascade.
    fn steady_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let zi = s.step_state();
                let out = [zi[0] * scale, zi[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Writes the plain-text coefficient record: `#` metadata lines followed
    /// by one `b0 b1 b2 a1 a2` line per section at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.meta {
            let _ = writeln!(
                out,
                "# family={} order={} low_hz={} high_hz={} stop_atten_db={} sample_rate_hz={}",
                m.family, m.order, m.low_hz, m.high_hz, m.stop_atten_db, m.sample_rate_hz
            );
        }
        for s in &self.sections {
            let _ = writeln!(
                out,
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                s.b0, s.b1, s.b2, s.a1, s.a2
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let path = Path::new("<coefficients>");
        let mut meta = None;
        let mut sections = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                meta = parse_meta(rest).or(meta);
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::schema(path, i + 1, e.to_string()))?;
            if vals.len() != 5 {
                return Err(Error::schema(
                    path,
                    i + 1,
                    format!("expected 5 coefficients, found {}", vals.len()),
                ));
            }
            sections.push(Biquad {
                b0: vals[0],
                b1: vals[1],
                b2: vals[2],
                a1: vals[3],
                a2: vals[4],
            });
        }
        Self::from_sections(sections, meta)
    }
}

fn parse_meta(line: &str) -> Option<DesignMeta> {
    let mut m = DesignMeta {
        order: 0,
        family: String::new(),
        low_hz: 0.0,
        high_hz: 0.0,
        stop_atten_db: 0.0,
        sample_rate_hz: 0.0,
    };
    let mut seen = 0;
    for kv in line.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        seen += 1;
        match k {
            "family" => m.family = v.to_string(),
            "order" => m.order = v.parse().ok()?,
            "low_hz" => m.low_hz = v.parse().ok()?,
            "high_hz" => m.high_hz = v.parse().ok()?,
            "stop_atten_db" => m.stop_atten_db = v.parse().ok()?,
            "sample_rate_hz" => m.sample_rate_hz = v.parse().ok()?,
            _ => seen -= 1,
        }
    }
    (seen == 6).then_some(m)
}

/// Designs a Chebyshev type II band-pass. `order` is the prototype order, so
/// the result has `order` biquads. `low_hz`/`high_hz` are the stopband
/// edges, where the attenuation first reaches `stop_atten_db`.
pub fn design_cheby2_bandpass(
    order: usize,
    low_hz: f64,
    high_hz: f64,
    stop_atten_db: f64,
    sample_rate_hz: f64,
) -> Result<IirFilter> {
    let nyquist = sample_rate_hz / 2.0;
    if !(sample_rate_hz > 0.0) || !(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < nyquist) {
        return Err(Error::InvalidBand {
            low_hz,
            high_hz,
            sample_rate_hz,
        });
    }
    if order < 2 || order % 2 != 0 {
        return Err(Error::DesignFailure(format!(
            "order must be even and at least 2, got {order}"
        )));
    }
    if !(stop_atten_db > 0.0) {
        return Err(Error::DesignFailure(format!(
            "stopband attenuation must be positive, got {stop_atten_db}"
        )));
    }

    let (zeros, poles, gain) = cheby2_prototype(order, stop_atten_db);

    // pre-warp the edges for a bilinear transform at a normalized rate of 2
    let warp = |f: f64| 4.0 * (PI * (f / nyquist) / 2.0).tan();
    let (w_lo, w_hi) = (warp(low_hz), warp(high_hz));
    let bw = w_hi - w_lo;
    let w0 = (w_lo * w_hi).sqrt();

    let to_bandpass = |roots: &[Complex64]| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(2 * roots.len());
        let scaled: Vec<Complex64> = roots.iter().map(|r| r * (bw / 2.0)).collect();
        for r in &scaled {
            out.push(r + (r * r - w0 * w0).sqrt());
        }
        for r in &scaled {
            out.push(r - (r * r - w0 * w0).sqrt());
        }
        out
    };
    let bp_zeros = to_bandpass(&zeros);
    let bp_poles = to_bandpass(&poles);

    let fs2 = Complex64::new(4.0, 0.0);
    let bilinear = |r: &Complex64| (fs2 + r) / (fs2 - r);
    let num: Complex64 = bp_zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = bp_poles.iter().map(|p| fs2 - p).product();
    let dz: Vec<Complex64> = bp_zeros.iter().map(bilinear).collect();
    let dp: Vec<Complex64> = bp_poles.iter().map(bilinear).collect();
    let dgain = gain * (num / den).re;

    let sections = pair_sections(&dz, &dp, dgain)?;
    IirFilter::from_sections(
        sections,
        Some(DesignMeta {
            order,
            family: "chebyshev2".into(),
            low_hz,
            high_hz,
            stop_atten_db,
            sample_rate_hz,
        }),
    )
}

/// Analog Chebyshev type II low-pass prototype (even order), unit stopband
/// edge.
fn cheby2_prototype(order: usize, stop_atten_db: f64) -> (Vec<Complex64>, Vec<Complex64>, f64) {
    let n = order as f64;
    let eps = 1.0 / (10f64.powf(0.1 * stop_atten_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n;
    let ms: Vec<f64> = (0..order).map(|i| -n + 1.0 + 2.0 * i as f64).collect();

    let zeros: Vec<Complex64> = ms
        .iter()
        .map(|m| Complex64::new(0.0, 1.0 / (m * PI / (2.0 * n)).sin()))
        .collect();
    let poles: Vec<Complex64> = ms
        .iter()
        .map(|m| {
            let p = -Complex64::from_polar(1.0, PI * m / (2.0 * n));
            Complex64::new(mu.sinh() * p.re, mu.cosh() * p.im).inv()
        })
        .collect();
    let num: Complex64 = poles.iter().map(|p| -p).product();
    let den: Complex64 = zeros.iter().map(|z| -z).product();
    (zeros, poles, (num / den).re)
}

/// Groups conjugate root pairs into biquads, repeatedly taking the remaining
/// pole closest to the unit circle and its nearest zero. The most resonant
/// section ends up last; the overall gain goes into the first.
fn pair_sections(zeros: &[Complex64], poles: &[Complex64], gain: f64) -> Result<Vec<Biquad>> {
    const IMAG_TOL: f64 = 1e-10;
    let upper = |roots: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut up: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > IMAG_TOL).collect();
        let low = roots.iter().filter(|r| r.im < -IMAG_TOL).count();
        if up.len() != low || 2 * up.len() != roots.len() {
            return Err(Error::DesignFailure(
                "roots do not form complex-conjugate pairs".into(),
            ));
        }
        up.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(up)
    };
    let mut z = upper(zeros)?;
    let mut p = upper(poles)?;
    if z.len() != p.len() {
        return Err(Error::DesignFailure("zero/pole count mismatch".into()));
    }

    let mut sections = Vec::with_capacity(p.len());
    while !p.is_empty() {
        let pi = argmin(&p, |r| (1.0 - r.norm()).abs());
        let p1 = p.remove(pi);
        let zi = argmin(&z, |r| (r - p1).norm());
        let z1 = z.remove(zi);
        sections.push(Biquad {
            b0: 1.0,
            b1: -2.0 * z1.re,
            b2: z1.norm_sqr(),
            a1: -2.0 * p1.re,
            a2: p1.norm_sqr(),
        });
    }
    sections.reverse();
    let first = &mut sections[0];
    first.b0 *= gain;
    first.b1 *= gain;
    first.b2 *= gain;
    Ok(sections)
}

fn argmin(v: &[Complex64], key: impl Fn(&Complex64) -> f64) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| key(a.1).total_cmp(&key(b.1)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Forward-backward filtering with mirror edge padding and
/// steady-state initial conditions. No phase shift; same length as the
/// input.
pub fn filtfilt(filter: &IirFilter, signal: &PpgSignal) -> Result<PpgSignal> {
    signal.with_samples(filtfilt_values(filter, signal.samples())?)
}

/// Slice form of [`filtfilt`].
pub fn filtfilt_values(filter: &IirFilter, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= filter.min_len() {
        return Err(Error::SignalTooShort {
            needed: filter.min_len(),
            len: n,
        });
    }
    let pad = filter.pad_len(n);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| x[n - 1 - i]));

    let x0 = ext[0];
    filter.run(&mut ext, Some(x0));
    ext.reverse();
    let y0 = ext[0];
    filter.run(&mut ext, Some(y0));
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Complex response of the cascade at each frequency.
pub fn frequency_response(filter: &IirFilter, freqs_hz: &[f64]) -> Result<Vec<Complex64>> {
    let fs = filter
        .meta
        .as_ref()
        .map(|m| m.sample_rate_hz)
        .ok_or_else(|| Error::InvalidConfig("filter has no sample rate; use frequency_response_at".into()))?;
    frequency_response_at(filter, freqs_hz, fs)
}

/// Like [`frequency_response`], with an explicit sample rate.
pub fn frequency_response_at(
    filter: &IirFilter,
    freqs_hz: &[f64],
    sample_rate_hz: f64,
) -> Result<Vec<Complex64>> {
    freqs_hz
        .iter()
        .map(|&f| {
            if !(f >= 0.0) || f >= sample_rate_hz / 2.0 {
                return Err(Error::InvalidFrequency(f));
            }
            let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f / sample_rate_hz);
            Ok(filter
                .sections
                .iter()
                .map(|s| s.response(z_inv))
                .product())
        })
        .collect()
}
