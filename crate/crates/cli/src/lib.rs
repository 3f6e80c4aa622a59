//! Command-line harness for landmark-based fetal biometry: orientation
//! fitting, training with orientation ablations, agreement evaluation,
//! single-image measurement, synthetic data and annotation converters.
//!
//! Every command reads one optional TOML experiment file (see [`config`])
//! plus `--set key=value` overrides and writes its outputs into a run
//! directory together with the resolved config and its fingerprint.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod plot;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fetal_biometry::measure::ScalePreference;
use fetal_biometry::MeasurementKind;

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::{CliResult, ExitStatus};

#[derive(Debug, Parser)]
#[command(name = "fetal-biometry", version, about = "Landmark-based fetal biometry")]
pub struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    /// Override a config value, e.g. `--set train.epochs=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Write outputs here instead of a fresh timestamped directory.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the landmark orientation model of each configured measurement.
    FitDod,

    /// Train one regressor per measurement and orientation mode.
    Train {
        /// Continue from checkpoints already in `--run-dir`.
        #[arg(long)]
        resume: bool,
        /// Stop after this many completed epochs (resumable later).
        #[arg(long)]
        stop_after: Option<usize>,
    },

    /// Score predictions against ground truth on test data.
    Evaluate {
        /// Checkpoint to evaluate. Repeatable; defaults to every
        /// `model_*.json` in `--run-dir`.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Test manifest. Repeatable; defaults to the configured test data.
        #[arg(long)]
        test_manifest: Vec<PathBuf>,
        /// Also score the annotations against themselves.
        #[arg(long)]
        ground_truth: bool,
    },

    /// Predict and measure one image, printing JSON.
    Measure {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// metadata, recover or auto; defaults to `scale.source`.
        #[arg(long)]
        scale_source: Option<ScalePreference>,
        /// Calibration of the image, when known.
        #[arg(long)]
        mm_per_pixel: Option<f64>,
        /// Ruler template JSON; defaults to `scale.ruler_template`.
        #[arg(long)]
        ruler_template: Option<PathBuf>,
    },

    /// Generate a synthetic dataset from the `[synth]` section.
    Synth {
        /// Output directory; defaults to `<run dir>/synth`.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Convert a VIA point-annotation export to the annotation CSV.
    ConvertVia {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Label for regions without a `measurement` attribute.
        #[arg(long)]
        measurement: Option<MeasurementKind>,
    },

    /// Derive OFD and BPD landmarks from head-contour masks.
    ConvertHcMasks {
        /// Directory holding `<name>.png` and `<name>_Annotation.png`.
        #[arg(long)]
        input_dir: PathBuf,
        /// CSV with `filename` and `pixel size(mm)` columns.
        #[arg(long)]
        pixel_sizes: Option<PathBuf>,
        /// Defaults to `<input-dir>/annotations.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> CliResult<LoadedConfig> {
    match &cli.config {
        Some(path) => ExperimentConfig::load(path, &cli.overrides),
        None => ExperimentConfig::from_overrides(&cli.overrides),
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> CliResult<()> {
    let loaded = load_config(cli)?;
    if matches!(cli.command, Command::FitDod | Command::Train { .. } | Command::Evaluate { .. } | Command::Measure { .. }) {
        loaded.config.check_paths()?;
    }
    let run_dir = cli.run_dir.as_deref();
    match &cli.command {
        Command::FitDod => commands::fit_dod::run(&loaded, run_dir),
        Command::Train { resume, stop_after } => commands::train::run(&loaded, run_dir, *resume, *stop_after),
        Command::Evaluate {
            checkpoint,
            test_manifest,
            ground_truth,
        } => commands::evaluate::run(&loaded, run_dir, checkpoint, test_manifest, *ground_truth),
        Command::Measure {
            checkpoint,
            image,
            scale_source,
            mm_per_pixel,
            ruler_template,
        } => commands::measure::run(
            &loaded,
            commands::measure::MeasureArgs {
                checkpoint,
                image,
                scale_source: *scale_source,
                mm_per_pixel: *mm_per_pixel,
                ruler_template: ruler_template.as_deref(),
            },
        ),
        Command::Synth { out } => commands::synth::run(&loaded, run_dir, out.as_deref()),
        Command::ConvertVia {
            input,
            output,
            measurement,
        } => commands::convert::via(input, output, *measurement),
        Command::ConvertHcMasks {
            input_dir,
            pixel_sizes,
            output,
        } => commands::convert::hc_masks(input_dir, pixel_sizes.as_deref(), output.as_deref()),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::InvalidInput.code()
            } else {
                ExitStatus::Ok.code()
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitStatus::Ok.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status.code()
        }
    }
}
