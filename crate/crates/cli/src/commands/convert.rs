use std::path::{Path, PathBuf};

use fetal_biometry::data::{convert_hc18_masks, convert_via, relative_to, save_point_annotations, ImageEntry, Rejection};
use fetal_biometry::MeasurementKind;

use crate::error::{CliError, CliResult};

fn report(entries: &[ImageEntry], rejected: &[Rejection], output: &Path) -> CliResult<()> {
    for r in rejected {
        eprintln!("rejected: {r}");
    }
    if entries.is_empty() {
        return Err(CliError::invalid("no usable annotations found"));
    }
    let pairs: usize = entries.iter().map(|e| e.landmarks.len()).sum();
    println!(
        "{} images, {pairs} landmark pairs, {} rejected -> {}",
        entries.len(),
        rejected.len(),
        output.display()
    );
    Ok(())
}

/// VIA JSON to the annotation CSV. Image names are kept as exported, so the
/// CSV belongs next to the images.
pub fn via(input: &Path, output: &Path, measurement: Option<MeasurementKind>) -> CliResult<()> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", input.display())))?;
    let converted = convert_via(&text, measurement).map_err(|e| CliError::from(e).context(input.display()))?;
    report(&converted.entries, &converted.rejected, output)?;
    save_point_annotations(output, &converted.entries)?;
    Ok(())
}

/// Head-contour masks to OFD/BPD annotations. Image paths are rewritten
/// relative to the output CSV's directory.
pub fn hc_masks(input_dir: &Path, pixel_sizes: Option<&Path>, output: Option<&Path>) -> CliResult<()> {
    if !input_dir.is_dir() {
        return Err(CliError::invalid(format!("{} is not a directory", input_dir.display())));
    }
    let output: PathBuf = output.map(Path::to_path_buf).unwrap_or_else(|| input_dir.join("annotations.csv"));
    let converted = convert_hc18_masks(input_dir, pixel_sizes)?;
    let out_dir = match output.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut entries = converted.entries;
    if !same_dir(out_dir, input_dir) {
        let images = std::path::absolute(input_dir)?;
        let base = std::path::absolute(out_dir)?;
        for e in &mut entries {
            e.image = relative_to(&images.join(&e.image), &base).display().to_string();
        }
    }
    report(&entries, &converted.rejected, &output)?;
    save_point_annotations(&output, &entries)?;
    Ok(())
}

fn same_dir(a: &Path, b: &Path) -> bool {
    let norm = |p: &Path| std::fs::canonicalize(p).ok();
    norm(a).is_some() && norm(a) == norm(b)
}
