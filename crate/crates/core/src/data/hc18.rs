//! Head-axis landmarks from contour masks (HC18 layout).

use std::collections::HashMap;
use std::path::Path;

use crate::data::{ImageEntry, Rejection};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::measure::{boundary_points, ellipse_axis_landmarks, fit_ellipse, AxisLandmarks};

/// OFD and BPD landmarks from a head mask: largest component with holes
/// filled, its outline, a least-squares ellipse, then the axis endpoints.
pub fn derive_landmarks_from_mask(mask: &GrayImage) -> Result<AxisLandmarks> {
    let boundary = boundary_points(mask);
    if boundary.is_empty() {
        return Err(Error::EllipseFit("mask has no foreground".into()));
    }
    let ellipse = fit_ellipse(&boundary)?;
    Ok(ellipse_axis_landmarks(&ellipse))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskConversion {
    pub entries: Vec<ImageEntry>,
    pub rejected: Vec<Rejection>,
}

const MASK_SUFFIX: &str = "_Annotation";

/// Leading digits of the file name, so `010_HC.png` and `010_2HC.png`
/// share a subject.
fn subject_of(name: &str) -> String {
    let digits: String = name.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        name.to_string()
    } else {
        digits
    }
}

/// Reads `filename,pixel size(mm),...` style CSVs.
fn read_pixel_sizes(path: &Path) -> Result<HashMap<String, f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = csv.headers()?.clone();
    let name_col = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case("filename"))
        .ok_or_else(|| Error::Parse(format!("{}: no filename column", path.display())))?;
    let size_col = header
        .iter()
        .position(|h| h.to_ascii_lowercase().starts_with("pixel size"))
        .ok_or_else(|| Error::Parse(format!("{}: no pixel size column", path.display())))?;
    let mut sizes = HashMap::new();
    for row in csv.records() {
        let row = row?;
        if let (Some(name), Some(Ok(size))) = (row.get(name_col), row.get(size_col).map(str::parse::<f64>)) {
            sizes.insert(name.to_string(), size);
        }
    }
    Ok(sizes)
}

/// Converts every `<name>_Annotation.png` in `image_dir` into OFD and BPD
/// pairs for `<name>.png`. Image paths in the entries are relative to
/// `image_dir`.
pub fn convert_hc18_masks(image_dir: impl AsRef<Path>, pixel_sizes: Option<&Path>) -> Result<MaskConversion> {
    let image_dir = image_dir.as_ref();
    let sizes = match pixel_sizes {
        Some(p) => read_pixel_sizes(p)?,
        None => HashMap::new(),
    };
    let mut names: Vec<String> = std::fs::read_dir(image_dir)
        .map_err(|e| Error::io(image_dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(&format!("{MASK_SUFFIX}.png")))
        .collect();
    names.sort();

    let mut out = MaskConversion::default();
    for mask_name in names {
        let image = mask_name.replace(MASK_SUFFIX, "");
        if !image_dir.join(&image).is_file() {
            out.rejected.push(Rejection::new(None, image, "image for mask not found"));
            continue;
        }
        let derived = GrayImage::load(image_dir.join(&mask_name)).and_then(|m| derive_landmarks_from_mask(&m));
        match derived {
            Ok(axes) => out.entries.push(ImageEntry {
                subject_id: subject_of(&image),
                mm_per_pixel: sizes.get(&image).copied(),
                landmarks: vec![axes.ofd, axes.bpd],
                image,
            }),
            Err(e) => out.rejected.push(Rejection::new(None, image, e.to_string())),
        }
    }
    Ok(out)
}
