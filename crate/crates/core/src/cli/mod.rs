//! The `sla-grader` command line.
//!
//! Every subcommand resolves its settings as flag, then `--config` file
//! (`key=value` lines, keys named like the long flags), then default, and
//! writes a run manifest recording the resolved settings together with the
//! checksums of all inputs and outputs. `replay` re-executes a manifest and
//! verifies that every output is byte-identical.

mod commands;
mod run_manifest;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::decode::DecodeMode;
use crate::error::{Error, Result};
use crate::eval::Granularity;
use crate::model::HeadKind;

pub use run_manifest::{sha256_file, RunManifest, Settings, RUN_MANIFEST_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sla-grader", version, about = "Train, decode, calibrate and evaluate spoken-proficiency graders")]
pub struct Cli {
    /// File of key=value defaults for the subcommand's options
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Where to write the run manifest (default: derived from --out)
    #[arg(long, global = true, value_name = "FILE")]
    pub run_manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (train/dev/test manifests and features)
    Synth(SynthArgs),
    /// Fit a grader for one part
    Train(TrainArgs),
    /// Decode a manifest's responses with a trained grader
    Predict(PredictArgs),
    /// Fit per-part affine calibration on dev predictions
    Calibrate(CalibrateArgs),
    /// Compute RMSE, PCC and SRC for a predictions file
    Eval(EvalArgs),
    /// Matched and cross-part evaluation matrix
    Xeval(XevalArgs),
    /// Submission-level evaluation over a subset of parts
    Xtask(XtaskArgs),
    /// Finite-difference gradient audit on random models
    Gradcheck(GradcheckArgs),
    /// Decode externally produced class logits
    IngestLogits(IngestArgs),
    /// Re-run a run manifest and verify its outputs are byte-identical
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_submissions: Option<usize>,
    #[arg(long)]
    pub dev_submissions: Option<usize>,
    #[arg(long)]
    pub test_submissions: Option<usize>,
    /// Comma-separated part numbers
    #[arg(long)]
    pub parts: Option<PartList>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub shared_weight: Option<f64>,
    #[arg(long)]
    pub part_weight: Option<f64>,
    #[arg(long)]
    pub feature_noise: Option<f64>,
    #[arg(long)]
    pub annotator_noise: Option<f64>,
    /// Seed for the signal directions (default: --seed)
    #[arg(long)]
    pub direction_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub part: Option<u8>,
    #[arg(long)]
    pub head: Option<HeadKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Hidden layer width; 0 means a linear head on the raw features
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file to write; the training log goes to <out>.log.tsv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Part to predict (default: the model's training part)
    #[arg(long)]
    pub part: Option<u8>,
    /// hard|soft|reg (default: soft for classifier heads, reg otherwise)
    #[arg(long)]
    pub mode: Option<DecodeMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Predictions on the dev split
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Dev manifest with references
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// response|part|submission
    #[arg(long)]
    pub granularity: Option<Granularity>,
    /// System label in the report
    #[arg(long)]
    pub name: Option<String>,
    /// Report file; a tab-separated copy goes to <out>.tsv
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write calibrated scores, clamped to the scale, at the chosen granularity
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct XevalArgs {
    /// Grader for one part, as PART=PATH (repeatable)
    #[arg(long = "model", value_name = "PART=PATH")]
    pub models: Vec<ModelSpec>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<DecodeMode>,
    /// Matrix file; a tab-separated copy goes to <out>.tsv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct XtaskArgs {
    /// Grader for one part, as PART=PATH (repeatable)
    #[arg(long = "model", value_name = "PART=PATH")]
    pub models: Vec<ModelSpec>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Parts averaged into the submission score (default: all model parts)
    #[arg(long)]
    pub parts: Option<PartList>,
    #[arg(long)]
    pub mode: Option<DecodeMode>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub head: Option<HeadKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random models, seeded seed, seed+1, ...
    #[arg(long)]
    pub models: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Lines of response_id, part, chunk, comma-separated logits
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// hard|soft
    #[arg(long)]
    pub mode: Option<DecodeMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Comma-separated part numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartList(pub Vec<u8>);

impl FromStr for PartList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u8>()
                    .map_err(|_| Error::Usage(format!("invalid part {p:?} in list {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PartList(parts))
    }
}

impl fmt::Display for PartList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        f.write_str(&s.join(","))
    }
}

/// `PART=PATH`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub part: u8,
    pub path: PathBuf,
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (p, path) = s
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("expected PART=PATH, got {s:?}")))?;
        let part = p
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("invalid part {p:?} in {s:?}")))?;
        if path.is_empty() {
            return Err(Error::Usage(format!("empty path in {s:?}")));
        }
        Ok(ModelSpec { part, path: path.into() })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.part, self.path.display())
    }
}

/// Comma-separated [`ModelSpec`]s, the config-file form of repeated `--model`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpecs(pub Vec<ModelSpec>);

impl FromStr for ModelSpecs {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',').map(|m| m.trim().parse()).collect::<Result<_>>().map(ModelSpecs)
    }
}

impl fmt::Display for ModelSpecs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|m| m.to_string()).collect();
        f.write_str(&s.join(","))
    }
}

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first) and runs the subcommand. Help and
/// version go to `stdout`; usage errors, progress and failures go to
/// `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(cli, argv, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
