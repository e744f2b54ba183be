use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use rppg_core::evaluation::{constant_baseline, evaluate_suite, hr_from_ppg, EvalOptions, EvalRecord};
use rppg_core::filter::{design_cheby2_bandpass, filtfilt};
use rppg_core::io::{self, Recording, RecordingManifest, SessionState};
use rppg_core::latency::{bench_inference, BenchOptions};
use rppg_core::model::{
    fit_scaler, fittable_targets, predict_recording, train, Checkpoint, EpochRecord, FpnConfig, FpnModel, StandardScaler, TrainConfig,
    TrainSample,
};
use rppg_core::pipeline::{
    fine_align, onto_reference_grid, predict_on_reference, synchronize, training_samples, unsupervised_ppg,
    RecordingSync,
};
use rppg_core::rppg::{default_roi_set, extract_traces, parse_roi_masks, Frame, RppgMethod};
use rppg_core::signal::sliding_windows;
use rppg_core::synth::{generate_synthetic_recording, SynthConfig, MANIFEST_FILE};
use rppg_core::sync::{cleanse_labels, record_time_shift, shift_report};
use rppg_core::{Biomarker, Error};

use crate::output::{emit, render};
use crate::{
    BenchArgs, Cli, CliError, Command, EvalArgs, EvalMethod, ExtractArgs, FilterArgs, HrArgs, Method, RppgArgs,
    State, SyncPpgArgs, SyncVideoArgs, SynthArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Extract(a) => extract(a),
        Command::Rppg(a) => rppg(a),
        Command::Filter(a) => filter(a),
        Command::Hr(a) => hr(cli, a),
        Command::SyncVideo(a) => sync_video(cli, a),
        Command::SyncPpg(a) => sync_ppg(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Bench(a) => bench(cli, a),
        Command::Synth(a) => synth(cli, a),
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io { path: path.into(), source: e }.into())
}

fn extract(a: &ExtractArgs) -> Result<()> {
    if a.width == 0 || a.height == 0 || !(a.fps > 0.0) {
        return Err(CliError::Usage("--width, --height and --fps must be positive".into()));
    }
    let frame_bytes = 3 * a.width * a.height;
    let mut raw = Vec::new();
    if a.frames.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&a.frames)
            .map_err(|e| Error::Io { path: a.frames.clone(), source: e })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            let bytes = read(&f)?;
            if bytes.len() != frame_bytes {
                return Err(Error::ShapeMismatch(format!("{}: {} bytes, expected {frame_bytes}", f.display(), bytes.len())).into());
            }
            raw.push(bytes);
        }
    } else {
        let bytes = read(&a.frames)?;
        if bytes.is_empty() || bytes.len() % frame_bytes != 0 {
            return Err(Error::ShapeMismatch(format!("{} bytes is not a whole number of {frame_bytes}-byte frames", bytes.len())).into());
        }
        raw = bytes.chunks(frame_bytes).map(<[u8]>::to_vec).collect();
    }
    let frames = raw
        .iter()
        .map(|b| Frame::from_planar_u8(a.width, a.height, b))
        .collect::<rppg_core::Result<Vec<_>>>()?;
    let masks = match &a.masks {
        Some(p) => {
            let text = String::from_utf8_lossy(&read(p)?).into_owned();
            parse_roi_masks(&text, p)?
        }
        None => default_roi_set(),
    };
    let ts = (0..frames.len()).map(|i| a.t0 + i as f64 / a.fps).collect();
    let set = extract_traces(&frames, ts, &masks)?;
    io::write_trace_file(&a.out, &set)?;
    Ok(())
}

fn load_checkpoint(path: Option<&PathBuf>) -> Result<Checkpoint> {
    let p = path.ok_or_else(|| CliError::Usage("--checkpoint is required for the model".into()))?;
    Ok(Checkpoint::load(p)?)
}

fn scaler_of(ckpt: &Checkpoint) -> StandardScaler {
    ckpt.scaler
        .clone()
        .unwrap_or_else(|| StandardScaler::identity(&ckpt.model.config().targets))
}

fn unsupervised(m: Method) -> Option<RppgMethod> {
    match m {
        Method::Pos => Some(RppgMethod::Pos),
        Method::Chrom => Some(RppgMethod::Chrom),
        Method::Pbv => Some(RppgMethod::Pbv),
        Method::Omit => Some(RppgMethod::Omit),
        Method::Model => None,
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn rppg(a: &RppgArgs) -> Result<()> {
    let traces = io::parse_trace_file(&a.traces)?;
    match unsupervised(a.method) {
        Some(m) => {
            if a.biomarkers_out.is_some() {
                return Err(CliError::Usage("--biomarkers-out needs --method model".into()));
            }
            io::write_signal_file(&a.out, &unsupervised_ppg(&traces, m)?)?;
        }
        None => {
            let ckpt = load_checkpoint(a.checkpoint.as_ref())?;
            let p = predict_recording(&ckpt.model, &scaler_of(&ckpt), &traces)?;
            io::write_signal_file(&a.out, &p.ppg)?;
            if let Some(out) = &a.biomarkers_out {
                io::write_atomic(out, json_line(&p.biomarkers).as_bytes())?;
            }
        }
    }
    Ok(())
}

fn filter(a: &FilterArgs) -> Result<()> {
    let s = io::parse_signal_file(&a.input)?;
    let f = design_cheby2_bandpass(a.order, a.low, a.high, a.stopband_db, s.sample_rate_hz())?;
    io::write_signal_file(&a.out, &filtfilt(&f, &s)?)?;
    Ok(())
}

#[derive(Serialize)]
struct HrRow {
    start_s: f64,
    duration_s: f64,
    hr_bpm: f64,
    peak_power_fraction: f64,
}

fn hr(cli: &Cli, a: &HrArgs) -> Result<()> {
    let s = io::parse_signal_file(&a.input)?;
    let parts = match a.segment_s {
        Some(seg) => sliding_windows(&s, seg, seg)?,
        None => vec![s],
    };
    let rows = parts
        .iter()
        .map(|p| {
            let e = hr_from_ppg(p, (a.low, a.high))?;
            Ok(HrRow {
                start_s: p.t0_s(),
                duration_s: p.duration_s(),
                hr_bpm: e.bpm,
                peak_power_fraction: e.peak_power_fraction,
            })
        })
        .collect::<rppg_core::Result<Vec<_>>>()?;
    emit(&render(cli.format, &rows), None)
}

#[derive(Serialize)]
struct SyncVideoRow {
    record: &'static str,
    camera: String,
    other: Option<String>,
    value_s: Option<f64>,
    num_transitions: Option<usize>,
    dropped_labels: Option<usize>,
    excluded_reason: Option<String>,
}

fn sync_video(cli: &Cli, a: &SyncVideoArgs) -> Result<()> {
    let streams = a
        .clock
        .iter()
        .map(|p| io::parse_clock_label_file(p))
        .collect::<rppg_core::Result<Vec<_>>>()?;
    let report = shift_report(&streams);
    let text = match cli.format {
        crate::Format::Jsonl => serde_json::to_string(&report).expect("serializable") + "\n",
        crate::Format::Csv => {
            let mut rows: Vec<SyncVideoRow> = report
                .cameras
                .iter()
                .map(|c| SyncVideoRow {
                    record: "shift",
                    camera: c.camera_id.clone(),
                    other: None,
                    value_s: c.estimate.as_ref().map(|e| e.shift_s),
                    num_transitions: c.estimate.as_ref().map(|e| e.num_transitions),
                    dropped_labels: Some(c.dropped_labels),
                    excluded_reason: c.excluded_reason.clone(),
                })
                .collect();
            rows.extend(report.deltas.iter().map(|d| SyncVideoRow {
                record: "delta",
                camera: d.a.clone(),
                other: Some(d.b.clone()),
                value_s: Some(d.delta_s),
                num_transitions: None,
                dropped_labels: None,
                excluded_reason: None,
            }));
            render(cli.format, &rows)
        }
    };
    emit(&text, None)
}

#[derive(Serialize)]
struct SyncPpgRow {
    video_shift_s: f64,
    ppg_shift_samples: i64,
    ppg_shift_s: f64,
    correlation: f64,
}

fn sync_ppg(cli: &Cli, a: &SyncPpgArgs) -> Result<()> {
    let reference = io::parse_signal_file(&a.reference)?;
    let rec = io::parse_signal_file(&a.reconstructed)?;
    let video_shift_s = match (&a.clock, a.video_shift_s) {
        (Some(p), _) => record_time_shift(&cleanse_labels(&io::parse_clock_label_file(p)?))?.shift_s,
        (None, Some(s)) => s,
        (None, None) => 0.0,
    };
    let times: Vec<f64> = (0..rec.len()).map(|i| rec.t0_s() + i as f64 / rec.sample_rate_hz()).collect();
    let coarse = RecordingSync {
        video_shift_s,
        ..RecordingSync::identity()
    };
    let sync = fine_align(rec.samples(), &times, coarse, &reference)?;
    if let Some(out) = &a.out {
        io::write_signal_file(out, &onto_reference_grid(rec.samples(), &times, &sync, &reference)?)?;
    }
    let row = SyncPpgRow {
        video_shift_s: sync.video_shift_s,
        ppg_shift_samples: sync.ppg_shift_samples,
        ppg_shift_s: sync.ppg_shift_samples as f64 / reference.sample_rate_hz(),
        correlation: sync.correlation,
    };
    emit(&render(cli.format, &[row]), None)
}

/// Manifest files named directly or found under directories, in path order.
fn manifests(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for e in std::fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            walk(p, &mut found).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("no recordings found".into()).into());
    }
    Ok(out)
}

fn recording_id(path: &Path, rec: &Recording) -> String {
    path.parent()
        .and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("{}_{}", rec.manifest.subject_id, rec.manifest.camera_id))
}

struct Loaded {
    id: String,
    rec: Recording,
    sync: RecordingSync,
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<rppg_core::Result<Loaded>>> {
    let files = manifests(paths)?;
    Ok(files
        .par_iter()
        .map(|p| {
            let rec = RecordingManifest::load(p)?;
            let sync = synchronize(&rec.traces, &rec.reference_ppg, rec.clock_labels.as_ref())?;
            Ok(Loaded {
                id: recording_id(p, &rec),
                rec,
                sync,
            })
        })
        .collect())
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(CliError::Usage("--val-fraction must be in [0, 1)".into()));
    }
    let loaded = load_all(&a.data)?.into_iter().collect::<rppg_core::Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..loaded.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n_val = (a.val_fraction * loaded.len() as f64).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val.min(loaded.len().saturating_sub(1)));

    let table: Vec<_> = train_idx.iter().map(|&i| loaded[i].rec.manifest.biomarker_values()).collect();
    let (targets, dropped) = fittable_targets(&table, &Biomarker::MODEL_DEFAULT);
    for e in &dropped {
        eprintln!("not training a head for {e}");
    }
    let scaler = fit_scaler(&table, &targets)?;
    let channels = loaded[0].rec.traces.num_channels();
    let config = if a.tiny {
        FpnConfig::tiny(channels, targets)
    } else {
        FpnConfig {
            in_channels: channels,
            ..FpnConfig::default()
        }
    };
    let windows = |idx: &[usize]| -> rppg_core::Result<Vec<TrainSample>> {
        let per: Vec<rppg_core::Result<Vec<TrainSample>>> = idx
            .par_iter()
            .map(|&i| {
                let l = &loaded[i];
                let fps = l.rec.traces.frame_rate_hz().unwrap_or(l.rec.manifest.fps);
                let frames = (a.window_s * fps).round() as usize;
                training_samples(
                    &l.rec.traces,
                    &l.rec.reference_ppg,
                    &l.sync,
                    &l.rec.manifest.biomarker_values(),
                    &scaler,
                    frames,
                )
            })
            .collect();
        Ok(per.into_iter().collect::<rppg_core::Result<Vec<_>>>()?.concat())
    };
    let train_set = windows(train_idx)?;
    let val_set = windows(val_idx)?;
    let mut model = FpnModel::new(config, cli.seed)?;
    let tc = TrainConfig {
        window_s: a.window_s,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: cli.seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let history: Vec<EpochRecord> = train(&mut model, &train_set, &val_set, &tc, |r| {
        eprintln!(
            "epoch {} train {:.5} val {} ({:.1} s)",
            r.epoch,
            r.train_loss,
            r.val_loss.map_or("-".into(), |v| format!("{v:.5}")),
            start.elapsed().as_secs_f64()
        );
    })?;
    let ckpt = Checkpoint {
        model,
        scaler: Some(scaler),
    };
    io::write_atomic(&a.out, &ckpt.to_bytes())?;
    if let Some(log) = &a.log {
        let text: String = history
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
            .collect();
        io::write_atomic(log, text.as_bytes())?;
    }
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let prefilter = match a.prefilter.as_deref() {
        Some([lo, hi]) => Some((*lo, *hi)),
        Some(_) => return Err(CliError::Usage("--prefilter takes LOW,HIGH".into())),
        None => None,
    };
    let (ckpt, baseline) = match a.method {
        EvalMethod::Model => (Some(load_checkpoint(a.checkpoint.as_ref())?), None),
        EvalMethod::Baseline => {
            if a.train_data.is_empty() {
                return Err(CliError::Usage("--method baseline needs --train-data".into()));
            }
            let files = manifests(&a.train_data)?;
            let table = files
                .iter()
                .map(|p| Ok(RecordingManifest::from_json(&String::from_utf8_lossy(&read(p)?))?.biomarker_values()))
                .collect::<Result<Vec<_>>>()?;
            let present: Vec<Biomarker> = Biomarker::MODEL_DEFAULT
                .into_iter()
                .filter(|t| table.iter().any(|r| r.contains_key(t)))
                .collect();
            (None, Some(constant_baseline(&table, &present)?))
        }
        _ => (None, None),
    };
    let targets: Vec<Biomarker> = match (&ckpt, &baseline) {
        (Some(c), _) => c.model.config().targets.clone(),
        (None, Some(b)) => Biomarker::MODEL_DEFAULT.into_iter().filter(|t| b.contains_key(t)).collect(),
        _ => Vec::new(),
    };
    let mut failures = Vec::new();
    let mut records = Vec::new();
    for (i, item) in load_all(&a.data)?.into_iter().enumerate() {
        let l = match item {
            Ok(l) => l,
            Err(e) => {
                failures.push((format!("#{i}"), e.to_string()));
                continue;
            }
        };
        let truth = l.rec.manifest.biomarker_values();
        let outcome = (|| -> rppg_core::Result<EvalRecord> {
            let (ppg, bio) = match a.method {
                EvalMethod::Model => {
                    let c = ckpt.as_ref().expect("loaded above");
                    let p = predict_on_reference(&c.model, &scaler_of(c), &l.rec.traces, &l.sync, &l.rec.reference_ppg)?;
                    (Some(p.ppg), p.biomarkers)
                }
                EvalMethod::Baseline => (None, baseline.clone().expect("fitted above")),
                m => {
                    let method = match m {
                        EvalMethod::Pos => RppgMethod::Pos,
                        EvalMethod::Chrom => RppgMethod::Chrom,
                        EvalMethod::Pbv => RppgMethod::Pbv,
                        _ => RppgMethod::Omit,
                    };
                    let p = unsupervised_ppg(&l.rec.traces, method)?;
                    let grid = onto_reference_grid(p.samples(), l.rec.traces.frame_timestamps_s(), &l.sync, &l.rec.reference_ppg)?;
                    (Some(grid), Default::default())
                }
            };
            Ok(EvalRecord {
                id: l.id.clone(),
                predicted_ppg: ppg,
                reference_ppg: Some(l.rec.reference_ppg.clone()),
                predicted_biomarkers: bio,
                true_biomarkers: truth,
            })
        })();
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push((l.id.clone(), e.to_string())),
        }
    }
    let name = format!("{:?}", a.method).to_lowercase();
    let options = EvalOptions {
        segment_s: a.segment_s,
        prefilter_band_hz: prefilter,
    };
    let mut report = evaluate_suite(&name, &a.dataset, &records, &targets, &options);
    report.num_recordings += failures.len();
    failures.extend(report.failures);
    report.failures = failures;
    for (id, msg) in &report.failures {
        eprintln!("skipped {id}: {msg}");
    }
    let text = match cli.format {
        crate::Format::Csv => report.to_csv(),
        crate::Format::Jsonl => report.to_jsonl(),
    };
    emit(&text, a.out.as_deref())
}

#[derive(Serialize)]
struct BenchRow {
    model: String,
    num_params: usize,
    segment_s: f64,
    fps: f64,
    frames: usize,
    repetitions: usize,
    warmup: usize,
    mean_ms: f64,
    p50_ms: f64,
    p95_ms: f64,
    min_ms: f64,
    max_ms: f64,
    cpu: String,
    logical_cpus: usize,
}

pub fn cpu_name() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string())
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let (name, model) = match &a.checkpoint {
        Some(p) => (p.display().to_string(), Checkpoint::load(p)?.model),
        None if a.tiny => ("tiny".to_string(), FpnModel::new(FpnConfig::tiny(21, Biomarker::MODEL_DEFAULT.to_vec()), cli.seed)?),
        None => ("default".to_string(), FpnModel::new(FpnConfig::default(), cli.seed)?),
    };
    let r = bench_inference(
        &model,
        &BenchOptions {
            segment_s: a.segment_s,
            fps: a.fps,
            repetitions: a.repetitions,
            warmup: a.warmup,
            seed: cli.seed,
        },
    )?;
    let row = BenchRow {
        model: name,
        num_params: model.num_params(),
        segment_s: a.segment_s,
        fps: a.fps,
        frames: r.frames,
        repetitions: r.repetitions,
        warmup: r.warmup,
        mean_ms: r.mean_ms,
        p50_ms: r.p50_ms,
        p95_ms: r.p95_ms,
        min_ms: r.min_ms,
        max_ms: r.max_ms,
        cpu: cpu_name(),
        logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    emit(&render(cli.format, &[row]), None)
}

#[derive(Serialize)]
struct SynthRow {
    dir: String,
    seed: u64,
    hr_bpm: f64,
    mean_hr_bpm: f64,
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let jobs: Vec<(PathBuf, SynthConfig)> = (0..a.count)
        .map(|i| {
            let hr = match (a.hr_min, a.hr_max) {
                (Some(lo), Some(hi)) if hi > lo => rng.random_range(lo..hi),
                (Some(lo), Some(_)) => lo,
                _ => a.hr,
            };
            let dir = if a.count == 1 {
                a.out.clone()
            } else {
                a.out.join(format!("rec_{i:04}"))
            };
            let cfg = SynthConfig {
                duration_s: a.duration_s,
                fps: a.fps,
                ppg_rate_hz: a.ppg_rate_hz,
                hr_bpm: hr,
                hr_drift_bpm_per_min: a.drift,
                hrv_fraction: a.hrv,
                noise_snr_db: a.snr_db,
                injected_video_shift_s: a.video_shift_s,
                injected_ppg_shift_samples: a.ppg_shift_samples,
                frame_jitter_s: a.jitter_s,
                label_dropout: a.label_dropout,
                label_garble: a.label_garble,
                camera_id: a.camera_id.clone(),
                subject_id: if a.count == 1 {
                    a.subject_id.clone()
                } else {
                    format!("{}_{i:04}", a.subject_id)
                },
                state: match a.state {
                    State::Rest => SessionState::Rest,
                    State::PostExercise => SessionState::PostExercise,
                },
                seed: cli.seed.wrapping_add(i as u64),
                ..SynthConfig::default()
            };
            (dir, cfg)
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|(dir, cfg)| {
            let rec = generate_synthetic_recording(cfg)?;
            rec.write_to(dir)?;
            Ok(SynthRow {
                dir: dir.display().to_string(),
                seed: cfg.seed,
                hr_bpm: cfg.hr_bpm,
                mean_hr_bpm: rec.ground_truth.mean_hr_bpm,
            })
        })
        .collect::<rppg_core::Result<Vec<_>>>()?;
    emit(&render(cli.format, &rows), None)
}
