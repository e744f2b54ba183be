//! Classical unsupervised pulse reconstruction from RGB traces.

mod methods;
mod roi;

pub use methods::{chrom, omit, pbv, pbv_with_signature, pos, pos_window_len, PBV_SIGNATURE, POS_PROJECTION, POS_WINDOW_S};
pub use roi::{default_roi_set, extract_traces, parse_roi_masks, roi_mean, write_roi_masks, Frame, RoiMask, RoiShape};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{PpgSignal, RoiTraceSet};

/// Per-frame channel means of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbTrace {
    r: Vec<f64>,
    g: Vec<f64>,
    b: Vec<f64>,
    sample_rate_hz: f64,
    t0_s: f64,
}

impl RgbTrace {
    pub fn new(r: Vec<f64>, g: Vec<f64>, b: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if r.len() != g.len() || r.len() != b.len() {
            return Err(Error::LengthMismatch(r.len(), g.len().max(b.len())));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidRate(sample_rate_hz));
        }
        if r.iter().chain(&g).chain(&b).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSignal(
                "trace values must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            r,
            g,
            b,
            sample_rate_hz,
            t0_s: 0.0,
        })
    }

    pub fn with_t0(mut self, t0_s: f64) -> Self {
        self.t0_s = t0_s;
        self
    }

    /// Pools every region of a trace set into one trace; the rate comes from
    /// the frame timestamps.
    pub fn pooled(set: &RoiTraceSet) -> Result<Self> {
        let rate = set
            .frame_rate_hz()
            .ok_or_else(|| Error::InvalidSignal("need at least 2 frames".into()))?;
        let [r, g, b] = set.pooled_rgb();
        Ok(Self::new(r, g, b, rate)?.with_t0(set.frame_timestamps_s()[0]))
    }

    /// One region of a trace set.
    pub fn from_roi(set: &RoiTraceSet, roi: usize) -> Result<Self> {
        if roi >= set.num_roi() {
            return Err(Error::ShapeMismatch(format!("no region {roi}")));
        }
        let rate = set
            .frame_rate_hz()
            .ok_or_else(|| Error::InvalidSignal("need at least 2 frames".into()))?;
        let (r, g, b) = set.roi_rows(roi);
        Ok(Self::new(r.to_vec(), g.to_vec(), b.to_vec(), rate)?.with_t0(set.frame_timestamps_s()[0]))
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn channels(&self) -> [&[f64]; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    /// Every channel multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        let s = |v: &[f64]| v.iter().map(|x| x * a).collect();
        Ok(Self::new(s(&self.r), s(&self.g), s(&self.b), self.sample_rate_hz)?.with_t0(self.t0_s))
    }

    pub(crate) fn output(&self, samples: Vec<f64>) -> Result<PpgSignal> {
        PpgSignal::new(samples, self.sample_rate_hz, self.t0_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RppgMethod {
    Pos,
    Chrom,
    Pbv,
    Omit,
}

impl RppgMethod {
    pub const ALL: [RppgMethod; 4] = [RppgMethod::Pos, RppgMethod::Chrom, RppgMethod::Pbv, RppgMethod::Omit];

    pub fn apply(self, trace: &RgbTrace) -> Result<PpgSignal> {
        match self {
            RppgMethod::Pos => pos(trace),
            RppgMethod::Chrom => chrom(trace),
            RppgMethod::Pbv => pbv(trace),
            RppgMethod::Omit => omit(trace),
        }
    }
}

impl fmt::Display for RppgMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RppgMethod::Pos => "pos",
            RppgMethod::Chrom => "chrom",
            RppgMethod::Pbv => "pbv",
            RppgMethod::Omit => "omit",
        })
    }
}

impl FromStr for RppgMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pos" => Ok(RppgMethod::Pos),
            "chrom" => Ok(RppgMethod::Chrom),
            "pbv" => Ok(RppgMethod::Pbv),
            "omit" => Ok(RppgMethod::Omit),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}
