//! `panoptic` — command-line pipeline over bundle manifests: supervision
//! target generation, proposal decoding, matching, fusion, augmentation
//! and panoptic-quality evaluation.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use panoptic_core::{Error, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "panoptic",
    version,
    about = "Panoptic segmentation post-processing pipeline"
)]
struct Cli {
    /// Pipeline configuration JSON (partial files fill in defaults).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for per-image parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate per-level supervision targets from ground-truth scenes.
    GenTargets {
        /// Scene manifest (file or directory of manifests).
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Decode per-level head tensors into ranked proposals with queries.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Match predictions to ground truth (Hungarian + optional refinement).
    Match {
        /// Prediction manifest (file or directory).
        #[arg(long)]
        predictions: PathBuf,
        /// Ground-truth manifest (file or directory).
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Apply the two-stage proposal-aware refinement (default).
        #[arg(long, overrides_with = "no_refine")]
        refine: bool,
        /// Keep the raw one-to-one assignment.
        #[arg(long)]
        no_refine: bool,
    },
    /// Fuse predictions (after test-time NMS) into panoptic maps.
    Fuse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate predicted panoptic maps against ground truth.
    Eval {
        /// Predicted panoptic maps (file or directory).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth panoptic maps (file or directory).
        #[arg(long)]
        gt: PathBuf,
        /// Class table JSON.
        #[arg(long)]
        classes: PathBuf,
        /// Report JSON path.
        #[arg(long)]
        output: PathBuf,
        /// Where the aligned plain-text score table goes (defaults to the
        /// report path with a .txt extension).
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Copy-paste donor instances into ground-truth scenes.
    Augment {
        #[arg(long)]
        input: PathBuf,
        /// Manifest(s) providing donor thing instances.
        #[arg(long)]
        donors: PathBuf,
        /// Donors pasted per image.
        #[arg(long)]
        count: usize,
        /// Explicit seed; augmentation refuses to run without one.
        #[arg(long)]
        seed: u64,
        /// Constrain pasted centroids to this stuff class's region.
        #[arg(long)]
        region_class: Option<u32>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Size-binned detection rates of thing objects.
    DetectRate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, Error> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(&cli.config)?;
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::GenTargets { input, output } => commands::gen_targets::run(&input, &output, jobs),
        Command::Decode { input, output } => commands::decode::run(&input, &output, &config, jobs),
        Command::Match {
            predictions,
            gt,
            output,
            refine: _,
            no_refine,
        } => commands::match_cmd::run(&predictions, &gt, &output, !no_refine, &config, jobs),
        Command::Fuse { input, output } => commands::fuse::run(&input, &output, &config, jobs),
        Command::Eval {
            pred,
            gt,
            classes,
            output,
            text,
        } => commands::eval::run(&pred, &gt, &classes, &output, text.as_deref(), jobs),
        Command::Augment {
            input,
            donors,
            count,
            seed,
            region_class,
            output,
        } => commands::augment::run(&input, &donors, count, seed, region_class, &output, jobs),
        Command::DetectRate { pred, gt, output } => {
            commands::detect_rate::run(&pred, &gt, &output, &config, jobs)
        }
    }
}

/// Distinct exit codes per error class, with a machine-readable record on
/// stderr.
fn error_code(err: &Error) -> (u8, &'static str) {
    match err {
        Error::Manifest(_) | Error::Json(_) => (10, "manifest"),
        Error::ShapeMismatch(_) => (11, "shape_mismatch"),
        Error::MissingLevel(_) => (12, "missing_input"),
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => (12, "missing_input"),
        Error::InvalidValue(_) | Error::UnitMismatch(_) | Error::OutOfBounds(_) => {
            (13, "invalid_value")
        }
        Error::EmptyDomain(_) => (14, "empty_domain"),
        Error::Io(_) => (15, "io"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = error_code(&err);
            let record = serde_json::json!({
                "error": { "code": code, "kind": kind, "message": err.to_string() }
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
