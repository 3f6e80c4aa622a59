//! One module per subcommand.

pub mod convert;
pub mod evaluate;
pub mod fit_dod;
pub mod measure;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use fetal_biometry::dod::{fit_orientation, GmmFitConfig, OrientationModel};
use fetal_biometry::MeasurementKind;

use crate::config::ExperimentConfig;
use crate::dataset::{with_measurement, Record};
use crate::error::{CliError, CliResult};
use crate::run::RunDir;

pub fn orientation_file(kind: MeasurementKind) -> String {
    format!("orientation_{kind}.json")
}

/// Fits the orientation of `kind` from the training records.
pub fn fit_for(records: &[Record], kind: MeasurementKind, gmm: &GmmFitConfig) -> CliResult<OrientationModel> {
    let subset = with_measurement(records, kind);
    if subset.is_empty() {
        return Err(CliError::invalid(format!("no training records carry {kind}")));
    }
    let pairs = subset
        .iter()
        .map(|r| Ok((r.entry.landmarks[0], r.dims()?)))
        .collect::<CliResult<Vec<_>>>()?;
    fit_orientation(&pairs, gmm).map_err(|e| CliError::from(e).context(format!("fitting {kind} orientation")))
}

/// The orientation model for `kind`: the configured file (or
/// `orientation_<kind>.json` inside a configured directory), else one
/// already in the run directory, else a fresh fit saved there.
pub fn orientation_for(
    config: &ExperimentConfig,
    run: &RunDir,
    train: &[Record],
    kind: MeasurementKind,
) -> CliResult<(OrientationModel, PathBuf)> {
    let load = |path: &Path| -> CliResult<OrientationModel> {
        let model = OrientationModel::load(path).map_err(|e| CliError::from(e).context(path.display()))?;
        if model.measurement != kind {
            return Err(CliError::invalid(format!(
                "{} holds a {} orientation, expected {kind}",
                path.display(),
                model.measurement
            )));
        }
        Ok(model)
    };
    if let Some(configured) = &config.data.orientation_model {
        let path = if configured.is_dir() {
            configured.join(orientation_file(kind))
        } else {
            configured.clone()
        };
        return Ok((load(&path)?, path));
    }
    let path = run.join(orientation_file(kind));
    if path.is_file() {
        return Ok((load(&path)?, path));
    }
    let model = fit_for(train, kind, &config.gmm)?;
    model.save(&path)?;
    Ok((model, path))
}
