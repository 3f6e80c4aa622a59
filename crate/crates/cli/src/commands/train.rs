use std::io::Write;
use std::path::Path;

use fetal_biometry::model::{prepare_samples, train, Checkpoint, OrientationMode, TrainConfig, TrainOptions, TrainSetup};
use fetal_biometry::MeasurementKind;

use crate::commands::orientation_for;
use crate::config::LoadedConfig;
use crate::dataset::{load_images, with_measurement, Partition};
use crate::error::{CliError, CliResult};
use crate::plot::convergence_plot;
use crate::run::RunDir;

pub fn checkpoint_file(kind: MeasurementKind, mode: OrientationMode) -> String {
    format!("model_{kind}_{mode}.json")
}

pub fn curves_file(kind: MeasurementKind, mode: OrientationMode) -> String {
    format!("curves_{kind}_{mode}.csv")
}

pub fn plot_file(kind: MeasurementKind) -> String {
    format!("curves_{kind}.png")
}

pub const SUMMARY_FILE: &str = "train_summary.csv";

/// Trains every configured measurement under every ablation mode. Writes a
/// checkpoint and a curve CSV per run, one convergence plot per measurement
/// and a summary table.
pub fn run(loaded: &LoadedConfig, run_dir: Option<&Path>, resume: bool, stop_after: Option<usize>) -> CliResult<()> {
    let config = &loaded.config;
    if resume && run_dir.is_none() {
        return Err(CliError::invalid("--resume needs --run-dir pointing at the interrupted run"));
    }
    let mut partition = Partition::from_config(config)?;
    let run = RunDir::create(loaded, run_dir, "train")?;
    let modes = config.training_modes();

    let mut summary = csv::Writer::from_path(run.join(SUMMARY_FILE))?;
    summary.write_record([
        "measurement",
        "orientation_mode",
        "epochs",
        "best_epoch",
        "best_val_median_px_error",
        "final_val_median_px_error",
        "n_train",
        "n_val",
    ])?;

    for &kind in &config.measurements {
        let orientation = if modes.contains(&OrientationMode::Dynamic) {
            let (model, path) = orientation_for(config, &run, &partition.train, kind)?;
            eprintln!("{kind}: orientation {:.2} deg ({})", model.angle_degrees(), path.display());
            Some((model, path))
        } else {
            None
        };

        let train_images = load_images(&with_measurement(&partition.train, kind), &mut partition.rejected);
        let val_images = load_images(&with_measurement(&partition.val, kind), &mut partition.rejected);
        if train_images.is_empty() {
            return Err(CliError::invalid(format!("no training records carry {kind}")));
        }
        if val_images.is_empty() {
            return Err(CliError::invalid(format!("no validation records carry {kind}")));
        }
        let train_samples = prepare_samples(&train_images, kind, &config.model)?;
        let val_samples = prepare_samples(&val_images, kind, &config.model)?;
        drop((train_images, val_images));
        eprintln!("{kind}: {} training, {} validation images", train_samples.len(), val_samples.len());

        let mut finished: Vec<(String, Checkpoint)> = Vec::new();
        for &mode in &modes {
            let setup = TrainSetup {
                measurement: kind,
                spec: config.model.clone(),
                train: TrainConfig {
                    orientation_mode: mode,
                    ..config.train.clone()
                },
                augment: config.augment,
                heatmap: config.heatmap,
                orientation: orientation.as_ref().map(|(m, _)| m.clone()),
                orientation_model_path: orientation.as_ref().map(|(_, p)| p.display().to_string()),
                config_fingerprint: Some(loaded.fingerprint.clone()),
            };
            let ckpt_path = run.join(checkpoint_file(kind, mode));
            let previous = if resume && ckpt_path.is_file() {
                let c = Checkpoint::load(&ckpt_path)?;
                eprintln!("{kind}/{mode}: resuming after epoch {}", c.epochs_completed);
                Some(c)
            } else {
                None
            };
            let epochs = setup.train.epochs;
            let mut progress = |epoch: usize, c: &fetal_biometry::model::EpochCurves| {
                eprintln!(
                    "{kind}/{mode} epoch {}/{epochs}: train loss {:.3e}, val median error {:.3} px",
                    epoch + 1,
                    c.train_loss[epoch],
                    c.val_median_px_error[epoch]
                );
                let _ = std::io::stderr().flush();
            };
            let options = TrainOptions {
                resume: previous.as_ref(),
                stop_after,
                on_epoch: Some(&mut progress),
            };
            let ckpt = train(&train_samples, &val_samples, &setup, options)
                .map_err(|e| CliError::from(e).context(format!("training {kind}/{mode}")))?;
            ckpt.save(&ckpt_path)?;
            ckpt.write_curves_csv(run.join(curves_file(kind, mode)))?;

            let c = &ckpt.curves;
            let last = c.val_median_px_error.last().copied().unwrap_or(f64::NAN);
            summary.write_record([
                kind.to_string(),
                mode.to_string(),
                ckpt.epochs_completed.to_string(),
                (ckpt.best_epoch + 1).to_string(),
                c.val_median_px_error.get(ckpt.best_epoch).copied().unwrap_or(f64::NAN).to_string(),
                last.to_string(),
                ckpt.n_train.to_string(),
                ckpt.n_val.to_string(),
            ])?;
            println!(
                "{kind}/{mode}: best epoch {} of {}, final val median error {last:.3} px -> {}",
                ckpt.best_epoch + 1,
                ckpt.epochs_completed,
                ckpt_path.display()
            );
            finished.push((mode.to_string(), ckpt));
        }
        let runs: Vec<_> = finished.iter().map(|(l, c)| (l.clone(), &c.curves)).collect();
        convergence_plot(&run.join(plot_file(kind)), kind.as_str(), &runs)?;
    }
    summary.flush()?;
    partition.save(&run.path)?;
    println!("run directory: {}", run.path.display());
    Ok(())
}
