use std::path::Path;

use fetal_biometry::data::{chi_square_uniformity, generate_synthetic, write_synthetic};
use serde_json::json;

use crate::config::LoadedConfig;
use crate::error::CliResult;
use crate::run::RunDir;

const ORIENTATION_BINS: usize = 10;

/// Generates the `[synth]` dataset and prints a JSON summary including the
/// χ² uniformity p-value of the sampled orientations.
pub fn run(loaded: &LoadedConfig, run_dir: Option<&Path>, out: Option<&Path>) -> CliResult<()> {
    let cfg = &loaded.config.synth;
    let dir = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let run = RunDir { path: dir.to_path_buf() };
            run.record(loaded, "synth")?;
            run.path
        }
        None => RunDir::create(loaded, run_dir, "synth")?.join("synth"),
    };
    let dataset = generate_synthetic(cfg)?;
    let csv = write_synthetic(&dir, &dataset)?;
    let (lo, hi) = cfg.orientation_range_deg;
    let p_value = if hi > lo {
        chi_square_uniformity(&dataset.orientations_deg, lo, hi, ORIENTATION_BINS).ok()
    } else {
        None
    };
    let summary = json!({
        "annotations": csv.display().to_string(),
        "n_images": dataset.images.len(),
        "ruler_template": dataset.ruler.as_ref().map(|_| dir.join("ruler_template.json").display().to_string()),
        "orientation_uniformity_p": p_value,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
