//! `rppg`: command-line front end.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the input data is
//! rejected or a computation fails.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rppg", version, about = "Remote photoplethysmography pipeline", args_override_self = true)]
pub struct Cli {
    /// TOML file with default flag values; `RPPG_CONFIG` names one too.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-recording work.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pos,
    Chrom,
    Pbv,
    Omit,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMethod {
    Pos,
    Chrom,
    Pbv,
    Omit,
    Model,
    /// Constant biomarker predictions fitted on `--train-data`.
    Baseline,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Region mean colors from raw planar RGB frames.
    Extract(ExtractArgs),
    /// Pulse waveform from a trace file.
    Rppg(RppgArgs),
    /// Zero-phase Chebyshev II band-pass of a signal file.
    Filter(FilterArgs),
    /// Heart rate of a signal file.
    Hr(HrArgs),
    /// Record time shifts from decoded clock labels.
    SyncVideo(SyncVideoArgs),
    /// Lag between a reference PPG and a video-derived pulse.
    SyncPpg(SyncPpgArgs),
    /// Train the multitask network.
    Train(TrainArgs),
    /// Score a method on recordings.
    Eval(EvalArgs),
    /// Time forward passes.
    Bench(BenchArgs),
    /// Generate synthetic recordings.
    Synth(SynthArgs),
}

pub const SUBCOMMANDS: [&str; 10] =
    ["extract", "rppg", "filter", "hr", "sync-video", "sync-ppg", "train", "eval", "bench", "synth"];

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// A file of concatenated planar frames, or a directory of one file per
    /// frame (read in name order).
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Timestamp of the first frame.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Region file (`name x,y x,y ...` per line); default is seven face regions.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RppgArgs {
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Model checkpoint, for `--method model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where `--method model` writes its biomarker estimates (JSON).
    #[arg(long)]
    pub biomarkers_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub low: f64,
    #[arg(long, default_value_t = 8.0)]
    pub high: f64,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 30.0)]
    pub stopband_db: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HrArgs {
    /// Signal file.
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub low: f64,
    #[arg(long, default_value_t = 3.0)]
    pub high: f64,
    /// Report one estimate per segment of this length instead of one overall.
    #[arg(long)]
    pub segment_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SyncVideoArgs {
    /// Clock label file, one per camera.
    #[arg(long, required = true)]
    pub clock: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SyncPpgArgs {
    #[arg(long)]
    pub reference: PathBuf,
    /// Video-derived pulse, stamped on the camera clock. Its polarity must
    /// match the reference: the lag maximizes the Pearson correlation, so an
    /// inverted pulse lands half a period off.
    #[arg(long)]
    pub reconstructed: PathBuf,
    /// Wall clock minus camera clock.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "clock")]
    pub video_shift_s: Option<f64>,
    /// Clock labels to estimate the video shift from.
    #[arg(long)]
    pub clock: Option<PathBuf>,
    /// Writes the reconstruction moved onto the reference grid.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest files or directories searched for `manifest.json`.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20.0)]
    pub window_s: f64,
    /// Share of recordings held out for validation loss.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Two-stage width-4 network, for smoke tests.
    #[arg(long)]
    pub tiny: bool,
    /// Per-epoch losses as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub method: EvalMethod,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Recordings the constant baseline is fitted on.
    #[arg(long)]
    pub train_data: Vec<PathBuf>,
    #[arg(long, default_value = "data")]
    pub dataset: String,
    #[arg(long, default_value_t = 10.0)]
    pub segment_s: f64,
    /// Band-pass the prediction before heart-rate extraction, `LOW,HIGH` in Hz.
    #[arg(long, value_delimiter = ',')]
    pub prefilter: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Checkpoint to time; without it a freshly initialized model is used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, conflicts_with = "checkpoint")]
    pub tiny: bool,
    #[arg(long, default_value_t = 20.0)]
    pub segment_s: f64,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 200)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Recordings to generate; more than one go to `rec_0000`, `rec_0001`, ...
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 72.0)]
    pub hr: f64,
    /// With `--hr-max`, draw each recording's rate uniformly from the range.
    #[arg(long, requires = "hr_max")]
    pub hr_min: Option<f64>,
    #[arg(long, requires = "hr_min")]
    pub hr_max: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 100.0)]
    pub ppg_rate_hz: f64,
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub drift: f64,
    #[arg(long, default_value_t = 0.05)]
    pub hrv: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub video_shift_s: f64,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub ppg_shift_samples: i64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter_s: f64,
    #[arg(long, default_value_t = 0.0)]
    pub label_dropout: f64,
    #[arg(long, default_value_t = 0.0)]
    pub label_garble: f64,
    #[arg(long, default_value = "cam0")]
    pub camera_id: String,
    #[arg(long, default_value = "synthetic")]
    pub subject_id: String,
    #[arg(long, value_enum, default_value_t = State::Rest)]
    pub state: State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum State {
    Rest,
    PostExercise,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(rppg_core::Error),
}

impl From<rppg_core::Error> for CliError {
    fn from(e: rppg_core::Error) -> Self {
        CliError::Data(e)
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let args = match config::expand(args, &SUBCOMMANDS) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            let _ = Cli::command().print_help();
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
