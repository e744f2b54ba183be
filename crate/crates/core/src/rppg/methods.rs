use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::RgbTrace;
use crate::error::{Error, Result};
use crate::signal::{mean, std_dev, PpgSignal, CONSTANT_EPS};

/// Rows project temporally normalized RGB onto the plane orthogonal to skin
/// tone.
pub const POS_PROJECTION: [[f64; 3]; 2] = [[0.0, 1.0, -1.0], [-2.0, 1.0, 1.0]];

pub const POS_WINDOW_S: f64 = 1.6;

/// Relative blood-volume pulse strength in `(r, g, b)`; normalized to unit
/// length before use.
pub const PBV_SIGNATURE: [f64; 3] = [0.33, 0.77, 0.53];

/// Eigenvalues of the PBV covariance below `largest / MAX_CONDITION` are
/// dropped from its pseudo-inverse.
const MAX_CONDITION: f64 = 1e12;

pub fn pos_window_len(sample_rate_hz: f64) -> usize {
    (POS_WINDOW_S * sample_rate_hz).ceil() as usize
}

fn remove_mean(mut x: Vec<f64>) -> Vec<f64> {
    let m = mean(&x);
    x.iter_mut().for_each(|v| *v -= m);
    x
}

/// Plane-orthogonal-to-skin with overlap-add over sliding windows.
pub fn pos(trace: &RgbTrace) -> Result<PpgSignal> {
    let n = trace.len();
    let win = pos_window_len(trace.sample_rate_hz());
    if n < win || win == 0 {
        return Err(Error::TraceTooShort { needed: win, len: n });
    }
    let ch = trace.channels();
    let mut out = vec![0.0; n];
    let mut s1 = vec![0.0; win];
    let mut s2 = vec![0.0; win];
    for start in 0..=n - win {
        let end = start + win;
        let means: Vec<f64> = ch.iter().map(|c| mean(&c[start..end])).collect();
        if means.iter().any(|m| *m < CONSTANT_EPS) {
            return Err(Error::DegenerateWindow(start));
        }
        for k in 0..win {
            let cn = [
                ch[0][start + k] / means[0],
                ch[1][start + k] / means[1],
                ch[2][start + k] / means[2],
            ];
            let [p1, p2] = POS_PROJECTION;
            s1[k] = p1[0] * cn[0] + p1[1] * cn[1] + p1[2] * cn[2];
            s2[k] = p2[0] * cn[0] + p2[1] * cn[1] + p2[2] * cn[2];
        }
        let sd2 = std_dev(&s2);
        let alpha = if sd2 < CONSTANT_EPS { 0.0 } else { std_dev(&s1) / sd2 };
        let h: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + alpha * b).collect();
        let hm = mean(&h);
        for (o, v) in out[start..end].iter_mut().zip(&h) {
            *o += v - hm;
        }
    }
    trace.output(remove_mean(out))
}

fn normalized_channels(trace: &RgbTrace) -> Result<[Vec<f64>; 3]> {
    let ch = trace.channels();
    let norm = |c: &[f64]| -> Result<Vec<f64>> {
        let m = mean(c);
        if m < CONSTANT_EPS {
            return Err(Error::DegenerateWindow(0));
        }
        Ok(c.iter().map(|v| v / m).collect())
    };
    Ok([norm(ch[0])?, norm(ch[1])?, norm(ch[2])?])
}

/// Whole-signal chrominance projection.
pub fn chrom(trace: &RgbTrace) -> Result<PpgSignal> {
    let win = pos_window_len(trace.sample_rate_hz());
    if trace.len() < win.max(2) {
        return Err(Error::TraceTooShort {
            needed: win.max(2),
            len: trace.len(),
        });
    }
    let [r, g, b] = normalized_channels(trace)?;
    let xs: Vec<f64> = r.iter().zip(&g).map(|(r, g)| 3.0 * r - 2.0 * g).collect();
    let ys: Vec<f64> = r
        .iter()
        .zip(&g)
        .zip(&b)
        .map(|((r, g), b)| 1.5 * r + g - 1.5 * b)
        .collect();
    let sy = std_dev(&ys);
    if sy < CONSTANT_EPS && std_dev(&xs) < CONSTANT_EPS {
        return trace.output(vec![0.0; xs.len()]);
    }
    let alpha = if sy < CONSTANT_EPS { 0.0 } else { std_dev(&xs) / sy };
    let out = xs.iter().zip(&ys).map(|(x, y)| x - alpha * y).collect();
    trace.output(remove_mean(out))
}

/// Blood-volume-pulse signature projection with [`PBV_SIGNATURE`].
pub fn pbv(trace: &RgbTrace) -> Result<PpgSignal> {
    pbv_with_signature(trace, PBV_SIGNATURE)
}

pub fn pbv_with_signature(trace: &RgbTrace, signature: [f64; 3]) -> Result<PpgSignal> {
    if trace.len() < 2 {
        return Err(Error::TraceTooShort {
            needed: 2,
            len: trace.len(),
        });
    }
    let cn = normalized_channels(trace).map_err(|_| Error::SingularCovariance(f64::INFINITY))?;
    let t = trace.len() as f64;
    let mut q = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let v = cn[i].iter().zip(&cn[j]).map(|(a, b)| a * b).sum::<f64>() / t;
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    // A noiseless trace spans only {1, pulse}; the pseudo-inverse restricted
    // to that plane still isolates the pulse. Fewer than two usable
    // directions leaves nothing but the mean.
    let eig = SymmetricEigen::new(q);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    let second = eig.eigenvalues[order[1]];
    if !(lmax > 0.0) || !(second > lmax / MAX_CONDITION) {
        let cond = if second > 0.0 { lmax / second } else { f64::INFINITY };
        return Err(Error::SingularCovariance(cond));
    }
    let p = Vector3::from(signature).normalize();
    let mut qinv_p = Vector3::zeros();
    for &i in &order {
        let l = eig.eigenvalues[i];
        if l > lmax / MAX_CONDITION {
            let v = eig.eigenvectors.column(i);
            qinv_p += v * (v.dot(&p) / l);
        }
    }
    if p.dot(&qinv_p).abs() < CONSTANT_EPS {
        return Err(Error::SingularCovariance(lmax / second));
    }
    let w = qinv_p / p.dot(&qinv_p);
    let out = (0..trace.len())
        .map(|k| w[0] * cn[0][k] + w[1] * cn[1][k] + w[2] * cn[2][k])
        .collect();
    trace.output(remove_mean(out))
}

/// Orthogonal-matrix projection: removes the dominant color direction and
/// keeps the remaining component with the largest variance.
pub fn omit(trace: &RgbTrace) -> Result<PpgSignal> {
    let n = trace.len();
    if n < 3 {
        return Err(Error::TraceTooShort { needed: 3, len: n });
    }
    let ch = trace.channels();
    let dominant = Vector3::new(mean(ch[0]), mean(ch[1]), mean(ch[2]));
    let norm = dominant.norm();
    if norm < CONSTANT_EPS {
        return Err(Error::DegenerateTrace);
    }
    // first Gram-Schmidt direction of [dominant | data]
    let q = dominant / norm;
    let proj = Matrix3::identity() - q * q.transpose();
    let mut rows = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut residual = 0.0;
    let mut total = 0.0;
    for k in 0..n {
        let x = Vector3::new(ch[0][k], ch[1][k], ch[2][k]);
        let y = proj * x;
        for c in 0..3 {
            rows[c][k] = y[c];
        }
        residual += y.norm_squared();
        total += x.norm_squared();
    }
    // the trace lies on the dominant direction alone
    if residual <= 1e-18 * total {
        return Err(Error::DegenerateTrace);
    }
    let best = (0..3)
        .max_by(|&a, &b| std_dev(&rows[a]).total_cmp(&std_dev(&rows[b])))
        .unwrap_or(1);
    let out = std::mem::take(&mut rows[best]);
    trace.output(remove_mean(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{design_cheby2_bandpass, filtfilt_values};
    use crate::signal::pearson_correlation;
    use crate::testutil::{dft_peak_hz, skin_trace, SkinTrace};
    use crate::rppg::RppgMethod;

    fn constant(n: usize) -> RgbTrace {
        RgbTrace::new(vec![0.7; n], vec![0.5; n], vec![0.4; n], 30.0).unwrap()
    }

    #[test]
    fn constant_trace_behaviour() {
        assert!(pos(&constant(600)).unwrap().samples().iter().all(|v| *v == 0.0));
        assert!(chrom(&constant(600)).unwrap().samples().iter().all(|v| *v == 0.0));
        assert!(matches!(pbv(&constant(600)), Err(Error::SingularCovariance(_))));
        assert!(matches!(omit(&constant(600)), Err(Error::DegenerateTrace)));
    }

    #[test]
    fn short_and_degenerate_inputs() {
        assert!(matches!(pos(&constant(40)), Err(Error::TraceTooShort { .. })));
        let zero_red = RgbTrace::new(vec![0.0; 100], vec![0.5; 100], vec![0.4; 100], 30.0).unwrap();
        assert!(matches!(pos(&zero_red), Err(Error::DegenerateWindow(0))));
        assert!(matches!(omit(&constant(2)), Err(Error::TraceTooShort { .. })));
    }

    #[test]
    fn every_method_recovers_the_pulse_rate() {
        let t = skin_trace(&SkinTrace::default());
        for m in RppgMethod::ALL {
            let out = m.apply(&t.trace).unwrap();
            assert_eq!(out.len(), t.trace.len());
            let f = dft_peak_hz(out.samples(), 30.0, 0.5, 4.0);
            assert!((f - 1.2).abs() <= 0.1, "{m}: {f}");
            assert!(crate::signal::mean(out.samples()).abs() < 1e-9);
        }
    }

    #[test]
    fn pos_is_robust_to_noise() {
        let mut hits = 0;
        for seed in 0..100 {
            let t = skin_trace(&SkinTrace {
                snr_db: Some(10.0),
                seed,
                ..SkinTrace::default()
            });
            let f = dft_peak_hz(pos(&t.trace).unwrap().samples(), 30.0, 0.5, 4.0);
            if (f - 1.2).abs() <= 0.1 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn chrom_sees_pure_green_modulation() {
        let n = 600;
        let g: Vec<f64> = (0..n)
            .map(|k| 0.5 * (1.0 + 0.01 * (2.0 * std::f64::consts::PI * 1.5 * k as f64 / 30.0).sin()))
            .collect();
        let t = RgbTrace::new(vec![0.7; n], g, vec![0.4; n], 30.0).unwrap();
        let out = chrom(&t).unwrap();
        assert!(std_dev(out.samples()) > 1e-4);
        assert!((dft_peak_hz(out.samples(), 30.0, 0.5, 4.0) - 1.5).abs() <= 0.05);
    }

    #[test]
    fn pbv_recovers_variation_along_signature() {
        let t = skin_trace(&SkinTrace {
            gains: PBV_SIGNATURE,
            baseline: [1.0, 1.0, 1.0],
            snr_db: Some(40.0),
            ..SkinTrace::default()
        });
        let out = pbv(&t.trace).unwrap();
        let r = pearson_correlation(out.samples(), &t.pulse).unwrap();
        assert!(r >= 0.99, "r = {r}");
    }

    #[test]
    fn omit_follows_orthogonal_wiggle() {
        let n = 600;
        let base = Vector3::new(0.7, 0.5, 0.4);
        let ortho = Vector3::new(0.5, -0.7, 0.0).normalize();
        let (mut r, mut g, mut b) = (vec![], vec![], vec![]);
        for k in 0..n {
            let w = 1e-3 * (2.0 * std::f64::consts::PI * 2.0 * k as f64 / 30.0).sin();
            let v = base + ortho * w;
            r.push(v[0]);
            g.push(v[1]);
            b.push(v[2]);
        }
        let out = omit(&RgbTrace::new(r, g, b, 30.0).unwrap()).unwrap();
        assert!((dft_peak_hz(out.samples(), 30.0, 0.5, 4.0) - 2.0).abs() <= 0.1);
    }

    #[test]
    fn spectral_peak_is_gain_invariant() {
        let t = skin_trace(&SkinTrace {
            snr_db: Some(15.0),
            ..SkinTrace::default()
        });
        for m in RppgMethod::ALL {
            let a = dft_peak_hz(m.apply(&t.trace).unwrap().samples(), 30.0, 0.5, 3.0);
            for gain in [0.01, 3.0, 250.0] {
                let b = dft_peak_hz(m.apply(&t.trace.scaled(gain).unwrap()).unwrap().samples(), 30.0, 0.5, 3.0);
                assert_eq!(a, b, "{m} at gain {gain}");
            }
        }
    }

    #[test]
    fn band_passed_outputs_track_the_pulse() {
        let bp = design_cheby2_bandpass(4, 0.4, 8.0, 30.0, 30.0).unwrap();
        for hr in [48.0, 72.0, 120.0, 160.0] {
            let t = skin_trace(&SkinTrace {
                hr_bpm: hr,
                snr_db: Some(10.0),
                seed: hr as u64,
                ..SkinTrace::default()
            });
            let pulse = filtfilt_values(&bp, &t.pulse).unwrap();
            for m in RppgMethod::ALL {
                let out = filtfilt_values(&bp, m.apply(&t.trace).unwrap().samples()).unwrap();
                // reconstructions are defined up to polarity
                let r = pearson_correlation(&out, &pulse).unwrap().abs();
                assert!(r >= 0.8, "{m} at {hr} bpm: r = {r}");
            }
        }
    }
}
