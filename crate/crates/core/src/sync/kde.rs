use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal::std_dev;

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb: `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
/// Falls back to whichever spread estimate is non-zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("{} samples", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSignal("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = std_dev(samples);
    let iqr = (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return Err(Error::ConstantSignal),
    };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate evaluated at `grid`.
pub fn gaussian_kde(samples: &[f64], grid: &[f64], bandwidth: Option<f64>) -> Result<Vec<f64>> {
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidBandwidth(h)),
        None => silverman_bandwidth(samples)?,
    };
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("{} samples", samples.len())));
    }
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    Ok(grid
        .iter()
        .map(|x| {
            samples
                .iter()
                .map(|s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Evenly spaced grid covering the samples plus three bandwidths each side.
pub fn kde_grid(samples: &[f64], bandwidth: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bandwidth;
    let points = points.max(2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Location of the density maximum on a grid.
pub fn kde_mode(samples: &[f64], bandwidth: Option<f64>) -> Result<f64> {
    let h = match bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(samples)?,
    };
    let grid = kde_grid(samples, h, 2001);
    let d = gaussian_kde(samples, &grid, Some(h))?;
    let (i, _) = d
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    Ok(grid[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn bandwidth_matches_hand_computation() {
        // sd = sqrt(2), IQR = 2 (type-7), n = 5
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let expected = 0.9 * (2f64.sqrt()).min(2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((silverman_bandwidth(&x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        let s: Vec<f64> = (0..200).map(|_| n.sample(&mut rng)).collect();
        let h = silverman_bandwidth(&s).unwrap();
        // +-5 bandwidths beyond the data
        let grid = kde_grid(&s, h * 5.0 / 3.0, 4001);
        let d = gaussian_kde(&s, &grid, Some(h)).unwrap();
        let dx = grid[1] - grid[0];
        let area: f64 = d.iter().sum::<f64>() * dx;
        assert!((area - 1.0).abs() < 1e-3, "{area}");
    }

    #[test]
    fn coincident_points_give_one_gaussian() {
        let d = gaussian_kde(&[2.0, 2.0], &[2.0, 3.0], Some(1.0)).unwrap();
        let c = 1.0 / (2.0 * PI).sqrt();
        assert!((d[0] - c).abs() < 1e-15);
        assert!((d[1] - c * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(silverman_bandwidth(&[1.0]), Err(Error::InsufficientData(_))));
        assert!(matches!(silverman_bandwidth(&[1.0, 1.0]), Err(Error::ConstantSignal)));
        assert!(matches!(gaussian_kde(&[1.0, 2.0], &[0.0], Some(0.0)), Err(Error::InvalidBandwidth(_))));
    }

    #[test]
    fn repeated_value_peaks_at_it() {
        let s = [1.7; 10];
        let grid: Vec<f64> = (0..401).map(|i| i as f64 * 0.01).collect();
        let d = gaussian_kde(&s, &grid, Some(0.2)).unwrap();
        let i = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        assert!((grid[i] - 1.7).abs() < 1e-9);
    }

    #[test]
    fn symmetric_data_gives_symmetric_density() {
        let s = [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0];
        let h = silverman_bandwidth(&s).unwrap();
        let grid: Vec<f64> = (0..=200).map(|i| -5.0 + i as f64 * 0.05).collect();
        let d = gaussian_kde(&s, &grid, Some(h)).unwrap();
        for i in 0..d.len() {
            assert!((d[i] - d[d.len() - 1 - i]).abs() < 1e-9);
        }
    }

    #[test]
    fn standard_normal_matches_pdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = Normal::new(0.0, 1.0).unwrap();
        let s: Vec<f64> = (0..10_000).map(|_| n.sample(&mut rng)).collect();
        let grid: Vec<f64> = (0..=160).map(|i| -4.0 + i as f64 * 0.05).collect();
        let d = gaussian_kde(&s, &grid, None).unwrap();
        let worst = grid
            .iter()
            .zip(&d)
            .map(|(x, v)| (v - (-0.5 * x * x).exp() / (2.0 * PI).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn mode_finds_cluster() {
        let s = [-1.5, -1.49, -1.51, -1.5, 0.3, 2.0];
        let m = kde_mode(&s, None).unwrap();
        assert!((m + 1.5).abs() < 0.05, "{m}");
    }

    proptest! {
        #[test]
        fn density_is_nonnegative_and_translates(
            s in prop::collection::vec(-10.0f64..10.0, 3..30),
            shift in -100.0f64..100.0,
        ) {
            prop_assume!(std_dev(&s) > 1e-6);
            let h = silverman_bandwidth(&s).unwrap();
            let grid = kde_grid(&s, h, 50);
            let d = gaussian_kde(&s, &grid, Some(h)).unwrap();
            prop_assert!(d.iter().all(|v| *v >= 0.0));
            let s2: Vec<f64> = s.iter().map(|v| v + shift).collect();
            let g2: Vec<f64> = grid.iter().map(|v| v + shift).collect();
            let h2 = silverman_bandwidth(&s2).unwrap();
            prop_assert!((h - h2).abs() < 1e-9 * (1.0 + h));
            let d2 = gaussian_kde(&s2, &g2, Some(h)).unwrap();
            for (a, b) in d.iter().zip(&d2) {
                prop_assert!((a - b).abs() < 1e-6 * (1.0 + a));
            }
        }
    }
}
