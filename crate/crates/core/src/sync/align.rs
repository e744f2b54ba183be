use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{pearson_correlation, PpgSignal};

/// Correlations closer than this count as tied.
const TIE_EPS: f64 = 1e-12;

/// Minimum overlap, in seconds, at every candidate shift.
pub const MIN_OVERLAP_S: f64 = 2.0;

/// Default search half-width, in seconds.
pub const DEFAULT_MAX_SHIFT_S: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Positive: the reconstruction lags the reference by this many samples
    /// and must be advanced to match it.
    pub shift: i64,
    pub correlation: f64,
}

/// Candidate shifts `0, -1, 1, -2, 2, ...`, so a strict-improvement scan
/// breaks ties toward the smallest magnitude, then toward negative.
fn candidates(max_shift: i64) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_shift).flat_map(|k| [-k, k]))
}

fn overlap(n_ref: usize, n_rec: usize, k: i64) -> (usize, usize) {
    let start = (-k).max(0);
    let end = (n_ref as i64).min(n_rec as i64 - k);
    (start.max(0) as usize, end.max(start) as usize)
}

/// Exhaustive search for the integer shift maximizing the Pearson correlation
/// between `reference[n]` and `reconstructed[n + shift]`. Both signals must
/// already share a sample rate and be band-limited.
pub fn align_ppg(reference: &PpgSignal, reconstructed: &PpgSignal, max_shift_samples: usize) -> Result<Alignment> {
    let rate = reference.sample_rate_hz();
    if (rate - reconstructed.sample_rate_hz()).abs() > 1e-9 * rate {
        return Err(Error::RateMismatch(rate, reconstructed.sample_rate_hz()));
    }
    let (x, y) = (reference.samples(), reconstructed.samples());
    let max = max_shift_samples as i64;
    let needed = (MIN_OVERLAP_S * rate).ceil() as usize;
    let worst = [-max, max]
        .iter()
        .map(|&k| {
            let (s, e) = overlap(x.len(), y.len(), k);
            e - s
        })
        .min()
        .unwrap_or(0);
    if worst < needed.max(2) {
        return Err(Error::InsufficientOverlap {
            overlap: worst,
            needed: needed.max(2),
        });
    }

    let mut best: Option<Alignment> = None;
    for k in candidates(max) {
        let (s, e) = overlap(x.len(), y.len(), k);
        let ys = (s as i64 + k) as usize;
        let r = pearson_correlation(&x[s..e], &y[ys..ys + (e - s)])?;
        if best.is_none_or(|b| r > b.correlation + TIE_EPS) {
            best = Some(Alignment { shift: k, correlation: r });
        }
    }
    best.ok_or(Error::NoSegments)
}

/// Default search half-width for a sample rate.
pub fn default_max_shift(sample_rate_hz: f64) -> usize {
    (DEFAULT_MAX_SHIFT_S * sample_rate_hz).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{design_cheby2_bandpass, filtfilt_values};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn pulse(n: usize, fs: f64, f0: f64) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let ph = 2.0 * PI * f0 * k as f64 / fs;
                ph.sin() + 0.3 * (2.0 * ph + 0.4).sin()
            })
            .collect()
    }

    fn sig(x: Vec<f64>) -> PpgSignal {
        PpgSignal::new(x, 100.0, 0.0).unwrap()
    }

    /// `x` delayed by `d` samples, holding the first value.
    fn delayed(x: &[f64], d: i64) -> Vec<f64> {
        (0..x.len() as i64)
            .map(|n| x[(n - d).clamp(0, x.len() as i64 - 1) as usize])
            .collect()
    }

    #[test]
    fn identical_signals_align_at_zero() {
        let x = pulse(2000, 100.0, 1.1);
        let a = align_ppg(&sig(x.clone()), &sig(x), 50).unwrap();
        assert_eq!(a.shift, 0);
        assert!((a.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delayed_copy_gives_positive_shift() {
        let x = pulse(2000, 100.0, 1.1);
        let a = align_ppg(&sig(x.clone()), &sig(delayed(&x, 7)), 50).unwrap();
        assert_eq!(a.shift, 7);
        assert!(a.correlation > 0.999);
        let a = align_ppg(&sig(x.clone()), &sig(delayed(&x, -4)), 50).unwrap();
        assert_eq!(a.shift, -4);
    }

    #[test]
    fn noisy_delay_monte_carlo() {
        let bp = design_cheby2_bandpass(4, 0.4, 8.0, 30.0, 100.0).unwrap();
        let x = pulse(3000, 100.0, 1.2);
        let p_sig = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let sd = (p_sig / 10f64.powf(5.0 / 10.0)).sqrt();
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, sd).unwrap();
            let y: Vec<f64> = delayed(&x, 13).iter().map(|v| v + noise.sample(&mut rng)).collect();
            let xf = filtfilt_values(&bp, &x).unwrap();
            let yf = filtfilt_values(&bp, &y).unwrap();
            let a = align_ppg(&sig(xf), &sig(yf), 50).unwrap();
            if (a.shift - 13).abs() <= 1 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn ties_prefer_small_then_negative() {
        // period 4: shifts -4, 0 and 4 match equally well
        let x: Vec<f64> = (0..800).map(|k| [0.0, 1.0, 0.0, -1.0][k % 4]).collect();
        let y = delayed(&x, 4);
        let a = align_ppg(&sig(x.clone()), &sig(y), 6).unwrap();
        assert_eq!(a.shift.abs() % 4, 0);
        let b = align_ppg(&sig(x.clone()), &sig(x[2..].to_vec()), 3).unwrap();
        assert_eq!(b.shift, -2);
    }

    #[test]
    fn overlap_and_rate_errors() {
        let x = pulse(250, 100.0, 1.0);
        assert!(matches!(
            align_ppg(&sig(x.clone()), &sig(x.clone()), 60),
            Err(Error::InsufficientOverlap { .. })
        ));
        let other = PpgSignal::new(x.clone(), 30.0, 0.0).unwrap();
        assert!(matches!(
            align_ppg(&sig(x.clone()), &other, 5),
            Err(Error::RateMismatch(..))
        ));
        assert!(matches!(
            align_ppg(&sig(vec![1.0; 1000]), &sig(x.iter().cycle().take(1000).copied().collect()), 5),
            Err(Error::ConstantSignal)
        ));
    }

    proptest! {
        #[test]
        fn noiseless_periodic_shift_is_exact(f0 in 0.8f64..2.5, frac in 0.0f64..0.24) {
            // shifts below a quarter period are unambiguous
            let period = 100.0 / f0;
            let k = (frac * period).floor() as i64;
            let x = pulse(2000, 100.0, f0);
            let a = align_ppg(&sig(x.clone()), &sig(delayed(&x, k)), 50).unwrap();
            prop_assert_eq!(a.shift, k);
        }

        #[test]
        fn correlation_is_affine_invariant(a in 0.1f64..10.0, b in -5.0f64..5.0, k in -20i64..20) {
            let x = pulse(1500, 100.0, 1.3);
            let y = delayed(&x, k);
            let ya: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let r1 = align_ppg(&sig(x.clone()), &sig(y), 30).unwrap();
            let r2 = align_ppg(&sig(x), &sig(ya), 30).unwrap();
            prop_assert_eq!(r1.shift, r2.shift);
            prop_assert!((r1.correlation - r2.correlation).abs() < 1e-9);
        }
    }
}
