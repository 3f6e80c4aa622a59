use std::path::Path;

use crate::commands::{fit_for, orientation_file};
use crate::config::LoadedConfig;
use crate::dataset::Partition;
use crate::error::CliResult;
use crate::run::RunDir;

/// Fits one orientation model per measurement on the training records
/// (validation and test records excluded).
pub fn run(loaded: &LoadedConfig, run_dir: Option<&Path>) -> CliResult<()> {
    let config = &loaded.config;
    let partition = Partition::from_config(config)?;
    let run = RunDir::create(loaded, run_dir, "fit-dod")?;
    partition.save(&run.path)?;
    for &kind in &config.measurements {
        let model = fit_for(&partition.train, kind, &config.gmm)?;
        let path = run.join(orientation_file(kind));
        model.save(&path)?;
        println!(
            "{kind}: direction {:.2} deg from {} pairs -> {}",
            model.angle_degrees(),
            model.fit.n_pairs,
            path.display()
        );
    }
    Ok(())
}
