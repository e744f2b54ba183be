//! Camera record time shifts from a visible wall clock.
//!
//! The clock has one-second resolution. When the displayed second changes
//! between two adjacent frames, the tick happened somewhere between their
//! timestamps; taking the midpoint bounds the error by half a frame interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DAY_S: i64 = 86_400;
/// A backwards jump larger than this is read as a midnight wrap.
const WRAP_WINDOW_S: i64 = 43_200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockEntry {
    pub frame_timestamp_s: f64,
    pub label: Option<String>,
}

/// Per-frame decoded clock labels of one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockLabelStream {
    camera_id: String,
    entries: Vec<ClockEntry>,
}

impl ClockLabelStream {
    pub fn new(camera_id: impl Into<String>, entries: Vec<ClockEntry>) -> Result<Self> {
        if let Some(i) = entries
            .windows(2)
            .position(|w| !(w[1].frame_timestamp_s > w[0].frame_timestamp_s))
        {
            return Err(Error::NonMonotoneTimestamps { line: i + 1 });
        }
        Ok(Self {
            camera_id: camera_id.into(),
            entries,
        })
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn entries(&self) -> &[ClockEntry] {
        &self.entries
    }

    /// Parsed labels unwrapped across midnight, in seconds.
    fn unwrapped(&self) -> Vec<Option<i64>> {
        let mut offset = 0;
        let mut prev: Option<i64> = None;
        self.entries
            .iter()
            .map(|e| {
                let v = e.label.as_deref().and_then(parse_clock_label)? as i64;
                let mut u = v + offset;
                if let Some(p) = prev {
                    if u < p - WRAP_WINDOW_S {
                        offset += DAY_S;
                        u += DAY_S;
                    }
                }
                prev = Some(u);
                Some(u)
            })
            .collect()
    }
}

/// Seconds since midnight for `HH:MM:SS` or `HH.MM.SS`.
pub fn parse_clock_label(label: &str) -> Option<u32> {
    let s = label.trim();
    let sep = if s.contains(':') { ':' } else { '.' };
    let mut parts = s.split(sep);
    let mut field = |max: u32| -> Option<u32> {
        let p = parts.next()?;
        if p.is_empty() || p.len() > 2 || !p.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        p.parse::<u32>().ok().filter(|v| *v < max)
    };
    let (h, m, sec) = (field(24)?, field(60)?, field(60)?);
    if parts.next().is_some() {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

/// Drops unparseable labels and keeps the longest non-decreasing run of clock
/// readings (after midnight unwrapping). Frames and timestamps are kept;
/// rejected frames lose their label.
pub fn cleanse_labels(stream: &ClockLabelStream) -> ClockLabelStream {
    let values = stream.unwrapped();
    let present: Vec<(usize, i64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    let keep = longest_non_decreasing(&present.iter().map(|p| p.1).collect::<Vec<_>>());
    let mut kept = vec![false; values.len()];
    for k in keep {
        kept[present[k].0] = true;
    }
    let entries = stream
        .entries
        .iter()
        .zip(&kept)
        .map(|(e, &k)| ClockEntry {
            frame_timestamp_s: e.frame_timestamp_s,
            label: if k { e.label.as_ref().map(|l| l.trim().to_string()) } else { None },
        })
        .collect();
    ClockLabelStream {
        camera_id: stream.camera_id.clone(),
        entries,
    }
}

/// Indices of a longest non-decreasing subsequence. Among equally long ones
/// the earliest labels win, so an outlier is dropped rather than the run it
/// interrupts.
fn longest_non_decreasing(v: &[i64]) -> Vec<usize> {
    // from_here[i] = length of the longest run starting at i, by patience
    // sorting on the reversed, negated sequence
    let mut tails: Vec<i64> = Vec::new();
    let mut from_here = vec![0; v.len()];
    for i in (0..v.len()).rev() {
        let w = -v[i];
        let pos = tails.partition_point(|&t| t <= w);
        if pos == tails.len() {
            tails.push(w);
        } else {
            tails[pos] = w;
        }
        from_here[i] = pos + 1;
    }
    let mut need = tails.len();
    let mut out = Vec::with_capacity(need);
    let mut floor = i64::MIN;
    for i in 0..v.len() {
        if need > 0 && from_here[i] == need && v[i] >= floor {
            out.push(i);
            floor = v[i];
            need -= 1;
        }
    }
    out
}

/// Record time shift of one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub shift_s: f64,
    pub num_transitions: usize,
    pub per_transition_shifts: Vec<f64>,
}

/// Averages `label(t_next) - (t_prev + t_next) / 2` over every pair of
/// adjacent labeled frames whose displayed time differs. Unlabeled frames
/// break pairs.
pub fn record_time_shift(stream: &ClockLabelStream) -> Result<ShiftEstimate> {
    let values = stream.unwrapped();
    let ts: Vec<f64> = stream.entries.iter().map(|e| e.frame_timestamp_s).collect();
    let shifts: Vec<f64> = (1..values.len())
        .filter_map(|i| match (values[i - 1], values[i]) {
            (Some(a), Some(b)) if a != b => Some(b as f64 - (ts[i - 1] + ts[i]) / 2.0),
            _ => None,
        })
        .collect();
    if shifts.is_empty() {
        return Err(Error::NoTransitions);
    }
    Ok(ShiftEstimate {
        shift_s: shifts.iter().sum::<f64>() / shifts.len() as f64,
        num_transitions: shifts.len(),
        per_transition_shifts: shifts,
    })
}

/// Grid for camera deltas: 2^-20 s (about 1 us). Values on it subtract and
/// add without rounding, so deltas telescope exactly.
const DELTA_GRID: f64 = 1_048_576.0;

fn on_grid(x: f64) -> f64 {
    (x * DELTA_GRID).round() / DELTA_GRID
}

/// `a.shift_s - b.shift_s`, evaluated on a 2^-20 s grid.
pub fn pairwise_camera_delta(a: &ShiftEstimate, b: &ShiftEstimate) -> f64 {
    on_grid(a.shift_s) - on_grid(b.shift_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(labels: &[&str]) -> ClockLabelStream {
        let entries = labels
            .iter()
            .enumerate()
            .map(|(i, l)| ClockEntry {
                frame_timestamp_s: i as f64,
                label: (!l.is_empty()).then(|| l.to_string()),
            })
            .collect();
        ClockLabelStream::new("cam", entries).unwrap()
    }

    fn labels(s: &ClockLabelStream) -> Vec<Option<&str>> {
        s.entries().iter().map(|e| e.label.as_deref()).collect()
    }

    fn hms(secs: i64) -> String {
        let s = secs.rem_euclid(DAY_S);
        format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
    }

    /// Frames at `fps` starting at `t0`; the clock reads `t + shift`.
    fn generated(fps: f64, t0: f64, shift: f64, n: usize) -> ClockLabelStream {
        let entries = (0..n)
            .map(|i| {
                let t = t0 + i as f64 / fps;
                ClockEntry {
                    frame_timestamp_s: t,
                    label: Some(hms((t + shift).floor() as i64)),
                }
            })
            .collect();
        ClockLabelStream::new("gen", entries).unwrap()
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_clock_label("12:00:01"), Some(43201));
        assert_eq!(parse_clock_label("23.59.59"), Some(86399));
        assert_eq!(parse_clock_label(" 7:05:09 "), Some(7 * 3600 + 5 * 60 + 9));
        for bad in ["garbage", "12:60:00", "24:00:00", "12:00", "12:00:00:00", "1a:00:00", ""] {
            assert_eq!(parse_clock_label(bad), None, "{bad}");
        }
    }

    #[test]
    fn cleanse_examples() {
        let s = cleanse_labels(&stream(&["12:00:01", "garbage", "12:00:02"]));
        assert_eq!(labels(&s), vec![Some("12:00:01"), None, Some("12:00:02")]);
        assert_eq!(s.entries().len(), 3);

        let ok = stream(&["12:00:01", "12:00:01", "12:00:02", "12:00:03"]);
        assert_eq!(cleanse_labels(&ok), ok);

        let s = cleanse_labels(&stream(&["12:00:05", "12:00:03", "12:00:06"]));
        assert_eq!(labels(&s), vec![Some("12:00:05"), None, Some("12:00:06")]);
    }

    #[test]
    fn cleanse_handles_midnight() {
        let s = stream(&["23:59:58", "23:59:59", "00:00:00", "00:00:01"]);
        assert_eq!(cleanse_labels(&s), s);
        let est = record_time_shift(&s).unwrap();
        assert_eq!(est.num_transitions, 3);
    }

    /// Brute force over every subset: the length of the longest
    /// non-decreasing subsequence.
    /// Longest consistent index set; ties go to the lexicographically
    /// smallest index list.
    fn brute_force_longest(v: &[i64]) -> Vec<usize> {
        let mut best: Vec<usize> = Vec::new();
        for mask in 0u32..1 << v.len() {
            let idx: Vec<usize> = (0..v.len()).filter(|i| mask & (1 << i) != 0).collect();
            if !idx.windows(2).all(|w| v[w[0]] <= v[w[1]]) {
                continue;
            }
            if idx.len() > best.len() || (idx.len() == best.len() && idx < best) {
                best = idx;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn cleanse_keeps_a_longest_consistent_run(secs in prop::collection::vec(0i64..8, 0..10)) {
            let strs: Vec<String> = secs.iter().map(|s| hms(43200 + s)).collect();
            let refs: Vec<&str> = strs.iter().map(|s| s.as_str()).collect();
            let out = cleanse_labels(&stream(&refs));
            let kept: Vec<usize> = out
                .entries()
                .iter()
                .enumerate()
                .filter_map(|(i, e)| e.label.as_ref().map(|_| i))
                .collect();
            prop_assert_eq!(kept, brute_force_longest(&secs));
        }

        #[test]
        fn shift_moves_opposite_to_timestamp_translation(
            shift in -3.0f64..2.0,
            delta in -1000.0f64..1000.0,
        ) {
            let s = generated(30.0, 43200.0 + 0.0123, shift, 300);
            let moved = ClockLabelStream::new(
                "gen",
                s.entries()
                    .iter()
                    .map(|e| ClockEntry { frame_timestamp_s: e.frame_timestamp_s + delta, label: e.label.clone() })
                    .collect(),
            ).unwrap();
            let a = record_time_shift(&s).unwrap().shift_s;
            let b = record_time_shift(&moved).unwrap().shift_s;
            prop_assert!((b - (a - delta)).abs() < 1e-9);
        }

        #[test]
        fn deltas_telescope_exactly(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let e = |s: f64| ShiftEstimate { shift_s: s, num_transitions: 1, per_transition_shifts: vec![s] };
            let (ea, eb, ec) = (e(a), e(b), e(c));
            let d12 = pairwise_camera_delta(&ea, &eb);
            let d23 = pairwise_camera_delta(&eb, &ec);
            let d31 = pairwise_camera_delta(&ec, &ea);
            prop_assert_eq!(d12 + d23 + d31, 0.0);
            prop_assert_eq!(d12 + d23, pairwise_camera_delta(&ea, &ec));
            prop_assert_eq!(d12, -pairwise_camera_delta(&eb, &ea));
        }
    }

    #[test]
    fn zero_shift_with_ticks_at_midpoints() {
        // a tick every second lands halfway between two frames
        let fps = 30.0;
        let t0 = 43200.0 - 0.5 / fps + 1.0 / fps;
        let s = generated(fps, t0, 0.0, 300);
        let est = record_time_shift(&s).unwrap();
        assert!(est.shift_s.abs() <= 0.5 / fps);
        assert_eq!(est.num_transitions, 9);
    }

    #[test]
    fn recovers_injected_shift() {
        let fps = 30.0;
        let s = generated(fps, 43200.017, -1.5, 600);
        let est = record_time_shift(&s).unwrap();
        assert!((est.shift_s + 1.5).abs() <= 0.5 / fps, "{}", est.shift_s);
        let mean = est.per_transition_shifts.iter().sum::<f64>() / est.num_transitions as f64;
        assert_eq!(est.shift_s, mean);
    }

    #[test]
    fn constant_labels_have_no_transitions() {
        let s = stream(&["12:00:00"; 20]);
        assert!(matches!(record_time_shift(&s), Err(Error::NoTransitions)));
    }

    #[test]
    fn missing_labels_break_pairs() {
        let s = stream(&["12:00:00", "", "12:00:01", "12:00:02"]);
        assert_eq!(record_time_shift(&s).unwrap().num_transitions, 1);
    }

    #[test]
    fn pairwise_examples() {
        let e = |s: f64| ShiftEstimate { shift_s: s, num_transitions: 1, per_transition_shifts: vec![s] };
        assert_eq!(pairwise_camera_delta(&e(-1.0), &e(-1.0)), 0.0);
        assert!((pairwise_camera_delta(&e(-1.0), &e(-1.2)) - 0.2).abs() < 1e-6);
    }
}
