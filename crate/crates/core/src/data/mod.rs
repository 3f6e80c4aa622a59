//! Dataset ingestion, splitting and synthetic data.
//!
//! Point annotations live in a flat CSV with the columns
//!
//! ```text
//! image,measurement,x1,y1,x2,y2,subject_id,mm_per_pixel
//! ```
//!
//! one row per landmark pair. `image` is relative to the CSV's directory (or
//! absolute), `measurement` is `OFD`, `BPD` or `FL`, coordinates are pixels
//! with the origin at the top-left pixel center, and the last two columns may
//! be empty. Landmark order in the file is the annotation order; orientation
//! ordering is applied downstream and never written back.

mod annotations;
mod hc18;
mod split;
mod synthetic;
mod via;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use annotations::{
    load_point_annotations, parse_point_annotations, save_point_annotations,
    write_point_annotations, ImageEntry, PointAnnotations, CSV_COLUMNS,
};
pub use hc18::{convert_hc18_masks, derive_landmarks_from_mask, MaskConversion};
pub use split::{make_split, SplitManifest, SplitPolicy};
pub use synthetic::{
    chi_square_uniformity, generate_synthetic, write_synthetic, RulerSpec, SyntheticConfig,
    SyntheticDataset, SyntheticShape,
};
pub use via::{convert_via, ViaConversion};

/// A record that could not be loaded, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line in the source file, when the source is line oriented.
    pub line: Option<u64>,
    pub record: String,
    pub reason: String,
}

impl Rejection {
    pub(crate) fn new(line: Option<u64>, record: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            line,
            record: record.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line} ({}): {}", self.record, self.reason),
            None => write!(f, "{}: {}", self.record, self.reason),
        }
    }
}

/// `path` relative to `base` when it lies underneath, else unchanged.
pub fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| path.to_path_buf())
}
