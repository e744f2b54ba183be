//! On-disk formats.
//!
//! Traces, signals and clock labels are comma-separated text with a header
//! row. Lines starting with `#` are comments; `# key=value` comments before
//! the header carry metadata. Floats are written in shortest round-trip form,
//! so parsing a written file gives back the exact values.
//!
//! Recording manifests are JSON; relative paths in a manifest resolve against
//! the manifest's directory.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biomarker::{Biomarker, BiomarkerValues};
use crate::error::{Error, Result};
use crate::signal::{PpgSignal, RoiTraceSet};
use crate::sync::{ClockEntry, ClockLabelStream};

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    res.map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `# key=value` lines at the top of a file.
fn metadata(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .take_while(|l| l.is_empty() || l.starts_with('#'))
        .filter_map(|l| {
            let (k, v) = l.trim_start_matches('#').split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Header and records with their 1-based line numbers.
fn read_table(text: &str, path: &Path) -> Result<(Vec<String>, Vec<(usize, csv::StringRecord)>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::schema(path, line, e.to_string())
    };
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::schema(path, 1, "missing header row"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn field_f64(rec: &csv::StringRecord, i: usize, path: &Path, line: usize, column: &str) -> Result<f64> {
    let s = rec.get(i).unwrap_or_default();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::schema(path, line, format!("column {column}: bad number {s:?}")))
}

fn check_increasing(times: &[(usize, f64)]) -> Result<()> {
    match times.windows(2).find(|w| !(w[1].1 > w[0].1)) {
        Some(w) => Err(Error::NonMonotoneTimestamps { line: w[1].0 }),
        None => Ok(()),
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>, mut out: String) -> String {
    let body = w.into_inner().expect("in-memory writer");
    out.push_str(&String::from_utf8(body).expect("utf-8 fields"));
    out
}

/// Trace table: `timestamp_s` followed by `name.r,name.g,name.b` per region.
pub fn parse_traces(text: &str, path: &Path) -> Result<RoiTraceSet> {
    let (header, rows) = read_table(text, path)?;
    if header[0] != "timestamp_s" {
        return Err(Error::schema(path, 1, format!("first column must be timestamp_s, got {:?}", header[0])));
    }
    let cols = &header[1..];
    if cols.is_empty() || cols.len() % 3 != 0 {
        return Err(Error::schema(path, 1, format!("{} value columns is not a multiple of 3", cols.len())));
    }
    let mut names = Vec::with_capacity(cols.len() / 3);
    for triple in cols.chunks(3) {
        let name = triple[0]
            .strip_suffix(".r")
            .filter(|n| !n.is_empty())
            .ok_or_else(|| Error::schema(path, 1, format!("expected <roi>.r, got {:?}", triple[0])))?;
        for (col, ch) in triple[1..].iter().zip(["g", "b"]) {
            if *col != format!("{name}.{ch}") {
                return Err(Error::schema(path, 1, format!("expected {name}.{ch}, got {col:?}")));
            }
        }
        if names.iter().any(|n| n == name) {
            return Err(Error::schema(path, 1, format!("duplicate region {name:?}")));
        }
        names.push(name.to_string());
    }
    if rows.is_empty() {
        return Err(Error::schema(path, 2, "no frames"));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut traces = vec![Vec::with_capacity(rows.len()); cols.len()];
    for (line, rec) in &rows {
        times.push((*line, field_f64(rec, 0, path, *line, "timestamp_s")?));
        for (c, row) in traces.iter_mut().enumerate() {
            let v = field_f64(rec, c + 1, path, *line, &cols[c])?;
            if v < 0.0 {
                return Err(Error::schema(path, *line, format!("column {}: negative value {v}", cols[c])));
            }
            row.push(v);
        }
    }
    check_increasing(&times)?;
    RoiTraceSet::new(traces, times.into_iter().map(|t| t.1).collect(), names)
}

pub fn write_traces(set: &RoiTraceSet) -> String {
    let mut w = csv_writer();
    let mut header = vec!["timestamp_s".to_string()];
    for n in set.roi_names() {
        header.extend(["r", "g", "b"].map(|c| format!("{n}.{c}")));
    }
    w.write_record(&header).expect("in-memory write");
    for (i, t) in set.frame_timestamps_s().iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(set.traces().iter().map(|r| r[i].to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w, String::new())
}

pub fn parse_trace_file(path: &Path) -> Result<RoiTraceSet> {
    parse_traces(&read_text(path)?, path)
}

pub fn write_trace_file(path: &Path, set: &RoiTraceSet) -> Result<()> {
    write_atomic(path, write_traces(set).as_bytes())
}

/// Uniformly sampled signal: optional `# sample_rate_hz=` and `# t0_s=`
/// metadata, then `t_s,value` rows. Without metadata the rate and start time
/// come from the `t_s` column.
pub fn parse_signal(text: &str, path: &Path) -> Result<PpgSignal> {
    let meta = metadata(text);
    let (header, rows) = read_table(text, path)?;
    if header != ["t_s", "value"] {
        return Err(Error::schema(path, 1, format!("expected header t_s,value, got {}", header.join(","))));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        times.push((*line, field_f64(rec, 0, path, *line, "t_s")?));
        values.push(field_f64(rec, 1, path, *line, "value")?);
    }
    if values.is_empty() {
        return Err(Error::schema(path, 2, "no samples"));
    }
    check_increasing(&times)?;
    let meta_f64 = |key: &str| -> Result<Option<f64>> {
        meta.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| Error::schema(path, 1, format!("bad {key} {v:?}"))))
            .transpose()
    };
    let rate = match meta_f64("sample_rate_hz")? {
        Some(r) => r,
        None if times.len() >= 2 => (times.len() - 1) as f64 / (times[times.len() - 1].1 - times[0].1),
        None => return Err(Error::schema(path, 1, "sample_rate_hz missing and only one sample")),
    };
    let t0 = meta_f64("t0_s")?.unwrap_or(times[0].1);
    PpgSignal::new(values, rate, t0)
}

pub fn write_signal(signal: &PpgSignal) -> String {
    let head = format!("# sample_rate_hz={}\n# t0_s={}\n", signal.sample_rate_hz(), signal.t0_s());
    let mut w = csv_writer();
    w.write_record(["t_s", "value"]).expect("in-memory write");
    for (i, v) in signal.samples().iter().enumerate() {
        let t = signal.t0_s() + i as f64 / signal.sample_rate_hz();
        w.write_record([t.to_string(), v.to_string()]).expect("in-memory write");
    }
    finish(w, head)
}

pub fn parse_signal_file(path: &Path) -> Result<PpgSignal> {
    parse_signal(&read_text(path)?, path)
}

pub fn write_signal_file(path: &Path, signal: &PpgSignal) -> Result<()> {
    write_atomic(path, write_signal(signal).as_bytes())
}

/// Decoded clock labels: `frame_index,timestamp_s,label`, where an empty
/// label is a frame the reader could not decode. The camera comes from
/// `# camera_id=`, else the file stem.
pub fn parse_clock_labels(text: &str, path: &Path) -> Result<ClockLabelStream> {
    let meta = metadata(text);
    let (header, rows) = read_table(text, path)?;
    if header != ["frame_index", "timestamp_s", "label"] {
        return Err(Error::schema(
            path,
            1,
            format!("expected header frame_index,timestamp_s,label, got {}", header.join(",")),
        ));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut entries = Vec::with_capacity(rows.len());
    for (k, (line, rec)) in rows.iter().enumerate() {
        let idx = rec.get(0).unwrap_or_default();
        if idx.parse::<usize>().ok() != Some(k) {
            return Err(Error::schema(path, *line, format!("frame_index {idx:?}, expected {k}")));
        }
        let t = field_f64(rec, 1, path, *line, "timestamp_s")?;
        times.push((*line, t));
        let label = rec.get(2).unwrap_or_default();
        entries.push(ClockEntry {
            frame_timestamp_s: t,
            label: (!label.is_empty()).then(|| label.to_string()),
        });
    }
    check_increasing(&times)?;
    let camera = meta.get("camera_id").cloned().unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    ClockLabelStream::new(camera, entries)
}

pub fn write_clock_labels(stream: &ClockLabelStream) -> String {
    let head = format!("# camera_id={}\n", stream.camera_id());
    let mut w = csv_writer();
    w.write_record(["frame_index", "timestamp_s", "label"]).expect("in-memory write");
    for (i, e) in stream.entries().iter().enumerate() {
        w.write_record([i.to_string(), e.frame_timestamp_s.to_string(), e.label.clone().unwrap_or_default()])
            .expect("in-memory write");
    }
    finish(w, head)
}

pub fn parse_clock_label_file(path: &Path) -> Result<ClockLabelStream> {
    parse_clock_labels(&read_text(path)?, path)
}

pub fn write_clock_label_file(path: &Path, stream: &ClockLabelStream) -> Result<()> {
    write_atomic(path, write_clock_labels(stream).as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Rest,
    PostExercise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerEntry {
    pub value: f64,
    pub unit: String,
}

/// One recording of one subject from one camera.
///
/// To read a dataset with a different layout, write one manifest per
/// recording pointing at converted trace and signal files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingManifest {
    pub subject_id: String,
    pub state: SessionState,
    pub camera_id: String,
    pub trace_path: PathBuf,
    pub reference_ppg_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_label_path: Option<PathBuf>,
    #[serde(default)]
    pub biomarkers: BTreeMap<Biomarker, BiomarkerEntry>,
    pub fps: f64,
    #[serde(default)]
    pub notes: String,
}

/// A manifest with its files loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub manifest: RecordingManifest,
    pub traces: RoiTraceSet,
    pub reference_ppg: PpgSignal,
    pub clock_labels: Option<ClockLabelStream>,
}

/// Largest relative difference tolerated between the manifest fps and the
/// rate implied by the trace timestamps.
const FPS_TOLERANCE: f64 = 0.05;

impl RecordingManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Checks the fields that need no file access: fps, units and value
    /// ranges.
    pub fn check_fields(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Manifest(format!("fps {}", self.fps)));
        }
        for (b, e) in &self.biomarkers {
            if e.unit != b.unit() {
                return Err(Error::Manifest(format!("{b}: unit {:?}, expected {:?}", e.unit, b.unit())));
            }
            b.validate(e.value)?;
        }
        Ok(())
    }

    pub fn biomarker_values(&self) -> BiomarkerValues {
        self.biomarkers.iter().map(|(b, e)| (*b, e.value)).collect()
    }

    /// Reads and validates a manifest and every file it references.
    pub fn load(path: &Path) -> Result<Recording> {
        let manifest = Self::from_json(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        manifest.open(base)
    }

    /// Loads the referenced files, resolving relative paths against `base`.
    pub fn open(self, base: &Path) -> Result<Recording> {
        self.check_fields()?;
        let traces = parse_trace_file(&base.join(&self.trace_path))?;
        if let Some(rate) = traces.frame_rate_hz() {
            if ((rate - self.fps) / self.fps).abs() > FPS_TOLERANCE {
                return Err(Error::Manifest(format!("fps {} but traces run at {rate:.3} Hz", self.fps)));
            }
        }
        let reference_ppg = parse_signal_file(&base.join(&self.reference_ppg_path))?;
        let clock_labels = self
            .clock_label_path
            .as_ref()
            .map(|p| parse_clock_label_file(&base.join(p)))
            .transpose()?;
        Ok(Recording {
            manifest: self,
            traces,
            reference_ppg,
            clock_labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}
