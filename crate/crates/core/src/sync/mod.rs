//! Stream synchronization: camera clock shifts and PPG alignment.

mod align;
mod clock;
mod kde;

pub use align::{align_ppg, default_max_shift, Alignment, DEFAULT_MAX_SHIFT_S, MIN_OVERLAP_S};
pub use clock::{
    cleanse_labels, pairwise_camera_delta, parse_clock_label, record_time_shift, ClockEntry, ClockLabelStream,
    ShiftEstimate,
};
pub use kde::{gaussian_kde, kde_grid, kde_mode, silverman_bandwidth};

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraShift {
    pub camera_id: String,
    pub estimate: Option<ShiftEstimate>,
    /// Labels dropped by cleansing.
    pub dropped_labels: usize,
    pub excluded_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDelta {
    pub a: String,
    pub b: String,
    pub delta_s: f64,
}

/// Per-camera shifts, every pairwise delta between usable cameras, and how
/// many cameras had to be excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub cameras: Vec<CameraShift>,
    pub deltas: Vec<CameraDelta>,
    pub num_cameras: usize,
    pub num_excluded: usize,
}

impl ShiftReport {
    pub fn excluded_fraction(&self) -> f64 {
        if self.num_cameras == 0 {
            0.0
        } else {
            self.num_excluded as f64 / self.num_cameras as f64
        }
    }
}

fn labeled(stream: &ClockLabelStream) -> usize {
    stream.entries().iter().filter(|e| e.label.is_some()).count()
}

/// Cleanses every stream, estimates its shift and collects pairwise deltas.
pub fn shift_report(streams: &[ClockLabelStream]) -> ShiftReport {
    let cameras: Vec<CameraShift> = streams
        .iter()
        .map(|s| {
            let clean = cleanse_labels(s);
            let dropped_labels = labeled(s) - labeled(&clean);
            let (estimate, excluded_reason) = match record_time_shift(&clean) {
                Ok(e) => (Some(e), None),
                Err(e @ Error::NoTransitions) => (None, Some(e.to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
            CameraShift {
                camera_id: s.camera_id().to_string(),
                estimate,
                dropped_labels,
                excluded_reason,
            }
        })
        .collect();
    let mut deltas = Vec::new();
    for (i, a) in cameras.iter().enumerate() {
        for b in &cameras[i + 1..] {
            if let (Some(ea), Some(eb)) = (&a.estimate, &b.estimate) {
                deltas.push(CameraDelta {
                    a: a.camera_id.clone(),
                    b: b.camera_id.clone(),
                    delta_s: pairwise_camera_delta(ea, eb),
                });
            }
        }
    }
    let num_excluded = cameras.iter().filter(|c| c.estimate.is_none()).count();
    ShiftReport {
        num_cameras: cameras.len(),
        num_excluded,
        cameras,
        deltas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ticking(id: &str, shift: f64, labels: bool) -> ClockLabelStream {
        let entries = (0..300)
            .map(|i| {
                let t = 43_200.0 + (i as f64 + 0.5) / 30.0;
                let s = (t + shift).floor() as u32;
                ClockEntry {
                    frame_timestamp_s: t,
                    label: labels.then(|| format!("{:02}:{:02}:{:02}", s / 3600, s / 60 % 60, s % 60)),
                }
            })
            .collect();
        ClockLabelStream::new(id, entries).unwrap()
    }

    #[test]
    fn report_counts_exclusions_and_pairs() {
        let r = shift_report(&[
            ticking("a", -1.0, true),
            ticking("b", 0.5, false),
            ticking("c", -1.2, true),
        ]);
        assert_eq!(r.num_cameras, 3);
        assert_eq!(r.num_excluded, 1);
        assert_eq!(r.deltas.len(), 1);
        assert!((r.deltas[0].delta_s - 0.2).abs() < 1.0 / 30.0);
        assert!((r.excluded_fraction() - 1.0 / 3.0).abs() < 1e-15);
        let text = serde_json::to_string(&r).unwrap();
        let back: ShiftReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
