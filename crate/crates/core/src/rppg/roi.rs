//! Face regions and per-frame channel means.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::RoiTraceSet;

/// An interleaved RGB frame, `height x width x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x3 frame",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a frame from three `height x width` planes of 8-bit samples.
    pub fn from_planar_u8(width: usize, height: usize, planes: &[u8]) -> Result<Self> {
        let plane = width * height;
        if planes.len() != 3 * plane {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes for a planar {width}x{height} RGB frame",
                planes.len()
            )));
        }
        let mut data = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for c in 0..3 {
                data.push(planes[c * plane + i] as f64);
            }
        }
        Self::new(width, height, data)
    }

    pub fn uniform(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: rgb.iter().copied().cycle().take(width * height * 3).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RoiShape {
    /// Vertices in pixel coordinates.
    Polygon(Vec<(f64, f64)>),
    /// Row-major selection of frame shape.
    Mask {
        width: usize,
        height: usize,
        bits: Vec<bool>,
    },
}

/// A named face region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMask {
    pub name: String,
    pub shape: RoiShape,
}

impl RoiMask {
    pub fn polygon(name: impl Into<String>, vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidConfig(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            shape: RoiShape::Polygon(vertices),
        })
    }

    pub fn mask(name: impl Into<String>, width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} mask bits for a {width}x{height} frame",
                bits.len()
            )));
        }
        if !bits.iter().any(|b| *b) {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            name: name.into(),
            shape: RoiShape::Mask {
                width,
                height,
                bits,
            },
        })
    }

    /// Pixel indices `(x, y)` selected in a `width x height` frame. Polygons
    /// use even-odd fill and include a pixel when its center is inside.
    pub fn pixels(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        match &self.shape {
            RoiShape::Polygon(v) => {
                let (min_y, max_y) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p.1), hi.max(p.1))
                });
                let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
                let y1 = ((max_y - 0.5).floor().min(height as f64 - 1.0)).max(-1.0);
                if y1 < 0.0 {
                    return Vec::new();
                }
                let mut out = Vec::new();
                for y in y0..=y1 as usize {
                    for x in 0..width {
                        if point_in_polygon(x as f64 + 0.5, y as f64 + 0.5, v) {
                            out.push((x, y));
                        }
                    }
                }
                out
            }
            RoiShape::Mask {
                width: mw,
                height: mh,
                bits,
            } => {
                let mut out = Vec::new();
                for y in 0..height.min(*mh) {
                    for x in 0..width.min(*mw) {
                        if bits[y * mw + x] {
                            out.push((x, y));
                        }
                    }
                }
                out
            }
        }
    }

    /// Polygon with normalized `[0, 1]` vertices scaled to a frame.
    pub fn scaled(&self, width: usize, height: usize) -> Self {
        match &self.shape {
            RoiShape::Polygon(v) => Self {
                name: self.name.clone(),
                shape: RoiShape::Polygon(
                    v.iter()
                        .map(|(x, y)| (x * width as f64, y * height as f64))
                        .collect(),
                ),
            },
            RoiShape::Mask { .. } => self.clone(),
        }
    }
}

fn point_in_polygon(px: f64, py: f64, v: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (xi, yi) = v[i];
        let (xj, yj) = v[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Mean `(r, g, b)` over the pixels a mask selects.
pub fn roi_mean(frame: &Frame, mask: &RoiMask) -> Result<[f64; 3]> {
    let px = mask.pixels(frame.width, frame.height);
    if px.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut acc = [0.0; 3];
    for &(x, y) in &px {
        let p = frame.pixel(x, y);
        for c in 0..3 {
            acc[c] += p[c];
        }
    }
    let n = px.len() as f64;
    Ok([acc[0] / n, acc[1] / n, acc[2] / n])
}

/// Per-frame region means for a frame sequence. Polygon vertices are taken
/// as normalized coordinates and scaled to each frame.
pub fn extract_traces(frames: &[Frame], timestamps_s: Vec<f64>, masks: &[RoiMask]) -> Result<RoiTraceSet> {
    if frames.len() != timestamps_s.len() {
        return Err(Error::LengthMismatch(frames.len(), timestamps_s.len()));
    }
    let mut rows = vec![Vec::with_capacity(frames.len()); 3 * masks.len()];
    let mut scaled: Vec<RoiMask> = Vec::new();
    let mut size = (0, 0);
    for f in frames {
        if (f.width, f.height) != size {
            size = (f.width, f.height);
            scaled = masks.iter().map(|m| m.scaled(f.width, f.height)).collect();
        }
        for (j, m) in scaled.iter().enumerate() {
            let rgb = roi_mean(f, m)?;
            for c in 0..3 {
                rows[3 * j + c].push(rgb[c]);
            }
        }
    }
    RoiTraceSet::new(rows, timestamps_s, masks.iter().map(|m| m.name.clone()).collect())
}

/// Seven face regions in normalized coordinates of a face-centered crop.
/// A stand-in set, not tied to any particular landmark model.
pub fn default_roi_set() -> Vec<RoiMask> {
    let rect = |name: &str, x0: f64, y0: f64, x1: f64, y1: f64| RoiMask {
        name: name.to_string(),
        shape: RoiShape::Polygon(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]),
    };
    vec![
        rect("forehead", 0.35, 0.12, 0.65, 0.24),
        rect("left_cheek", 0.26, 0.48, 0.40, 0.64),
        rect("right_cheek", 0.60, 0.48, 0.74, 0.64),
        RoiMask {
            name: "nose".into(),
            shape: RoiShape::Polygon(vec![(0.50, 0.38), (0.56, 0.58), (0.44, 0.58)]),
        },
        rect("chin", 0.42, 0.80, 0.58, 0.90),
        rect("left_temple", 0.20, 0.22, 0.30, 0.36),
        rect("right_temple", 0.70, 0.22, 0.80, 0.36),
    ]
}

/// Writes polygon masks as `name x,y x,y ...` lines with normalized
/// coordinates. Bitmap masks are skipped.
pub fn write_roi_masks(masks: &[RoiMask]) -> String {
    let mut out = String::from("# name x,y x,y ... (normalized frame coordinates)\n");
    for m in masks {
        if let RoiShape::Polygon(v) = &m.shape {
            out.push_str(&m.name);
            for (x, y) in v {
                let _ = write!(out, " {x},{y}");
            }
            out.push('\n');
        }
    }
    out
}

/// Parses the text format of [`write_roi_masks`].
pub fn parse_roi_masks(text: &str, path: &Path) -> Result<Vec<RoiMask>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default().to_string();
        let mut vertices = Vec::new();
        for tok in parts {
            let (x, y) = tok
                .split_once(',')
                .ok_or_else(|| Error::schema(path, i + 1, format!("bad vertex {tok:?}")))?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| (0.0..=1.0).contains(v))
                    .ok_or_else(|| Error::schema(path, i + 1, format!("bad coordinate {s:?}")))
            };
            vertices.push((parse(x)?, parse(y)?));
        }
        if vertices.len() < 3 {
            return Err(Error::schema(path, i + 1, "polygon needs at least 3 vertices"));
        }
        out.push(RoiMask {
            name,
            shape: RoiShape::Polygon(vertices),
        });
    }
    if out.is_empty() {
        return Err(Error::schema(path, 1, "no regions"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_traces_over_frames() {
        let frames: Vec<Frame> = (0..3).map(|i| Frame::uniform(40, 40, [i as f64, 2.0 * i as f64, 7.0])).collect();
        let set = extract_traces(&frames, vec![0.0, 0.1, 0.2], &default_roi_set()).unwrap();
        assert_eq!(set.num_roi(), 7);
        assert_eq!(set.roi_names()[0], "forehead");
        assert_eq!(set.traces()[3 * 6 + 1], vec![0.0, 2.0, 4.0]);
        assert!(matches!(extract_traces(&frames, vec![0.0], &default_roi_set()), Err(Error::LengthMismatch(3, 1))));
    }

    #[test]
    fn uniform_frame_gives_its_value() {
        let f = Frame::uniform(8, 6, [10.0, 20.0, 30.0]);
        for m in default_roi_set() {
            let m = m.scaled(8, 6);
            if m.pixels(8, 6).is_empty() {
                continue;
            }
            assert_eq!(roi_mean(&f, &m).unwrap(), [10.0, 20.0, 30.0]);
        }
    }

    #[test]
    fn single_pixel_mask() {
        let data: Vec<f64> = (0..2 * 2 * 3).map(|v| v as f64).collect();
        let f = Frame::new(2, 2, data).unwrap();
        let m = RoiMask::mask("p", 2, 2, vec![false, false, true, false]).unwrap();
        assert_eq!(roi_mean(&f, &m).unwrap(), [6.0, 7.0, 8.0]);
    }

    #[test]
    fn checkerboard_mean() {
        let mut data = Vec::new();
        let mut expected = [0.0; 3];
        for y in 0..2 {
            for x in 0..2 {
                let v = if (x + y) % 2 == 0 { 0.0 } else { 255.0 };
                data.extend([v, v, v]);
                for e in &mut expected {
                    *e += v / 4.0;
                }
            }
        }
        let f = Frame::new(2, 2, data).unwrap();
        let full = RoiMask::polygon("all", vec![(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]).unwrap();
        assert_eq!(full.pixels(2, 2).len(), 4);
        assert_eq!(roi_mean(&f, &full).unwrap(), expected);
        assert_eq!(expected, [127.5; 3]);
    }

    #[test]
    fn polygon_uses_pixel_centers() {
        // covers centers (0.5, 0.5) and (1.5, 0.5) only
        let m = RoiMask::polygon("strip", vec![(0.2, 0.2), (1.8, 0.2), (1.8, 0.8), (0.2, 0.8)]).unwrap();
        assert_eq!(m.pixels(4, 4), vec![(0, 0), (1, 0)]);
        let tiny = RoiMask::polygon("none", vec![(0.6, 0.6), (0.9, 0.6), (0.9, 0.9)]).unwrap();
        assert!(matches!(
            roi_mean(&Frame::uniform(4, 4, [1.0; 3]), &tiny),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn planar_frames_are_interleaved() {
        let planes = [1u8, 2, 10, 20, 100, 200];
        let f = Frame::from_planar_u8(2, 1, &planes).unwrap();
        assert_eq!(f.pixel(0, 0), [1.0, 10.0, 100.0]);
        assert_eq!(f.pixel(1, 0), [2.0, 20.0, 200.0]);
    }

    #[test]
    fn mask_file_round_trip() {
        let set = default_roi_set();
        let text = write_roi_masks(&set);
        let back = parse_roi_masks(&text, Path::new("masks.txt")).unwrap();
        assert_eq!(back, set);
        assert!(parse_roi_masks("a 0.1,0.1 0.2,0.2\n", Path::new("m")).is_err());
        assert!(parse_roi_masks("a 0.1,0.1 0.2,0.2 1.5,0.3\n", Path::new("m")).is_err());
    }
}
