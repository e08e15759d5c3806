//! `stforge` command-line front end.
//!
//! Every pipeline stage is a subcommand sharing one TOML configuration
//! (`--config`). Exit status is 0 on success, 1 when processing fails and 2
//! on usage errors.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
pub mod output;

pub use config::PipelineConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROCESSING: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Bad invocation detected after argument parsing (e.g. a path that is
/// neither given as a flag nor set in the config).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "stforge", version, about = "Speech-translation corpus and evaluation pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML); omitted keys take their defaults.
    #[arg(long, global = true, env = "STFORGE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads for file-level parallelism.
    #[arg(long, global = true, env = "STFORGE_JOBS", default_value_t = 1)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split long recordings at untranscribable gaps.
    Segment(SegmentArgs),
    /// Segment once per max_seg_len value of a grid.
    Sweep(SweepArgs),
    /// Clean target text and drop pairs by length and ASR agreement.
    Filter(FilterArgs),
    /// Apply random tempo, pitch and echo to source audio.
    Augment(AugmentArgs),
    /// Draw one epoch's sample of a manifest.
    Sample(SampleArgs),
    /// Pack a manifest into length-sorted batches.
    Batch(BatchArgs),
    /// Corpus BLEU of a hypothesis file.
    Score(ScoreArgs),
    /// BLEU per swept max_seg_len value.
    SweepScore(SweepScoreArgs),
    /// Parameter inventory of the reference model.
    ParamsReport(ParamsReportArgs),
    /// Element-wise mean of several checkpoints.
    AverageCkpt(AverageCkptArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Frame transcripts, one JSON object per line.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    #[arg(long, env = "STFORGE_MAX_SEG_LEN")]
    pub max_seg_len: Option<f64>,
    #[arg(long, env = "STFORGE_MIN_GAP")]
    pub min_gap: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 25.0)]
    pub hi: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, env = "STFORGE_MIN_GAP")]
    pub min_gap: Option<f64>,
    /// Receives one `<max_seg_len>.yaml` per grid value.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `id<TAB>hypothesis` lines.
    #[arg(long)]
    pub asr_hyps: Option<PathBuf>,
    #[arg(long, env = "STFORGE_WER_THRESHOLD")]
    pub wer_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dropped ids with their reason.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// A WAV file or a manifest (`.tsv`).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, env = "STFORGE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub p_aug: Option<f64>,
    /// Tempo factor range `LO,HI`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub tempo: Option<(f64, f64)>,
    /// Pitch shift range in cents, `LO,HI`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub pitch: Option<(f64, f64)>,
    /// Echo delay range in ms, `LO,HI`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub echo_delay: Option<(f64, f64)>,
    /// Echo decay range, `LO,HI`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub echo_decay: Option<(f64, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub epoch: u64,
    #[arg(long, env = "STFORGE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Cap on summed source samples per batch.
    #[arg(long, env = "STFORGE_MAX_BATCH")]
    pub max_batch: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Ignore hypothesis line breaks and realign to the reference segments.
    #[arg(long)]
    pub resegment: bool,
    /// Also write the score line here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepScoreArgs {
    /// Segmentations named `<max_seg_len>.yaml`.
    #[arg(long)]
    pub segdir: PathBuf,
    /// Translations named `<max_seg_len>.txt`, one line per segment.
    #[arg(long)]
    pub trans: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParamsReportArgs {
    /// Mark only layer norms, attention and coupling modules trainable.
    #[arg(long)]
    pub lna: bool,
}

#[derive(Debug, Args)]
pub struct AverageCkptArgs {
    /// Checkpoint directories to average.
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            eprintln!("\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_PROCESSING
        }
    }
}
