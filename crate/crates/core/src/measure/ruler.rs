//! Pixel scale recovery from on-screen ruler markers.
//!
//! A small template of one marker is matched over a search band with
//! zero-mean normalized cross-correlation. Peaks above a threshold survive
//! greedy non-maximum suppression, are sorted along the band's long axis, and
//! the median gap between consecutive peaks gives pixels per marker spacing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Minimum number of markers needed to trust a scale estimate.
pub const MIN_MARKERS: usize = 3;

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    fn clipped(&self, width: usize, height: usize) -> Rect {
        let x = self.x.min(width);
        let y = self.y.min(height);
        Rect {
            x,
            y,
            width: self.width.min(width - x),
            height: self.height.min(height - y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RulerTemplate {
    pub patch: GrayImage,
    /// Physical distance between adjacent markers.
    pub physical_spacing_mm: f64,
    pub search_band: Rect,
    pub ncc_threshold: f64,
    /// Suppression radius in pixels; half the patch width when unset.
    pub nms_radius: Option<f64>,
}

/// On-disk sidecar next to the template patch image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TemplateSidecar {
    patch: PathBuf,
    physical_spacing_mm: f64,
    search_band: Rect,
    #[serde(default = "default_threshold")]
    ncc_threshold: f64,
    #[serde(default)]
    nms_radius: Option<f64>,
}

fn default_threshold() -> f64 {
    0.6
}

impl RulerTemplate {
    pub fn new(patch: GrayImage, physical_spacing_mm: f64, search_band: Rect) -> Self {
        Self {
            patch,
            physical_spacing_mm,
            search_band,
            ncc_threshold: default_threshold(),
            nms_radius: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.physical_spacing_mm > 0.0) {
            return Err(Error::domain("ruler spacing must be positive"));
        }
        let (pw, ph) = (self.patch.width(), self.patch.height());
        if pw == 0 || ph == 0 {
            return Err(Error::domain("ruler template patch is empty"));
        }
        if pw > self.search_band.width || ph > self.search_band.height {
            return Err(Error::domain(format!(
                "template {pw}x{ph} does not fit the {}x{} search band",
                self.search_band.width, self.search_band.height
            )));
        }
        Ok(())
    }

    pub fn nms_radius(&self) -> f64 {
        self.nms_radius
            .unwrap_or(self.patch.width() as f64 / 2.0)
    }

    /// Writes `<stem>.png` and the JSON sidecar at `json_path`.
    pub fn save(&self, json_path: impl AsRef<Path>) -> Result<()> {
        let json_path = json_path.as_ref();
        let patch_name = PathBuf::from(format!(
            "{}.png",
            json_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("ruler_template")
        ));
        let dir = json_path.parent().unwrap_or_else(|| Path::new(""));
        self.patch.save_png(dir.join(&patch_name))?;
        let sidecar = TemplateSidecar {
            patch: patch_name,
            physical_spacing_mm: self.physical_spacing_mm,
            search_band: self.search_band,
            ncc_threshold: self.ncc_threshold,
            nms_radius: self.nms_radius,
        };
        let text = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(json_path, text + "\n").map_err(|e| Error::io(json_path, e))
    }

    pub fn load(json_path: impl AsRef<Path>) -> Result<Self> {
        let json_path = json_path.as_ref();
        let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let sidecar: TemplateSidecar = serde_json::from_str(&text)?;
        let dir = json_path.parent().unwrap_or_else(|| Path::new(""));
        let template = Self {
            patch: GrayImage::load(dir.join(&sidecar.patch))?,
            physical_spacing_mm: sidecar.physical_spacing_mm,
            search_band: sidecar.search_band,
            ncc_threshold: sidecar.ncc_threshold,
            nms_radius: sidecar.nms_radius,
        };
        template.validate()?;
        Ok(template)
    }
}

/// A detected marker: patch center position and correlation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredScale {
    pub mm_per_pixel: f64,
    pub median_gap_px: f64,
    /// Accepted markers sorted along the band.
    pub peaks: Vec<Peak>,
}

/// Zero-mean NCC of `patch` at every placement inside `band`.
///
/// Entry `(row, col)` is the score with the patch's top-left corner at
/// `(band.x + col, band.y + row)`. Flat windows score 0.
pub fn ncc_map(image: &GrayImage, patch: &GrayImage, band: Rect) -> ndarray::Array2<f64> {
    let band = band.clipped(image.width(), image.height());
    let (pw, ph) = (patch.width(), patch.height());
    if pw > band.width || ph > band.height {
        return ndarray::Array2::zeros((0, 0));
    }
    let n = (pw * ph) as f64;
    let t_mean = patch.data().sum() / n;
    let t_zero = patch.data().mapv(|v| v - t_mean);
    let t_norm = t_zero.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rows = band.height - ph + 1;
    let cols = band.width - pw + 1;
    let data = image.data();
    ndarray::Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (oy, ox) = (band.y + r, band.x + c);
        let window = data.slice(ndarray::s![oy..oy + ph, ox..ox + pw]);
        let w_mean = window.sum() / n;
        let mut cross = 0.0;
        let mut w_sq = 0.0;
        for (w, t) in window.iter().zip(t_zero.iter()) {
            let wz = w - w_mean;
            cross += wz * t;
            w_sq += wz * wz;
        }
        let denom = w_sq.sqrt() * t_norm;
        if denom <= 1e-12 {
            0.0
        } else {
            cross / denom
        }
    })
}

/// Estimates millimeters per pixel from ruler markers in the search band.
pub fn recover_scale(image: &GrayImage, template: &RulerTemplate) -> Result<RecoveredScale> {
    template.validate()?;
    let band = template.search_band.clipped(image.width(), image.height());
    let scores = ncc_map(image, &template.patch, band);
    let half_w = (template.patch.width() as f64 - 1.0) / 2.0;
    let half_h = (template.patch.height() as f64 - 1.0) / 2.0;

    let mut candidates: Vec<Peak> = scores
        .indexed_iter()
        .filter(|(_, s)| **s >= template.ncc_threshold)
        .map(|((r, c), s)| Peak {
            x: (band.x + c) as f64 + half_w,
            y: (band.y + r) as f64 + half_h,
            score: *s,
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.y.total_cmp(&b.y))
            .then_with(|| a.x.total_cmp(&b.x))
    });
    let radius = template.nms_radius();
    let mut peaks: Vec<Peak> = Vec::new();
    for cand in candidates {
        if peaks
            .iter()
            .all(|p| (p.x - cand.x).hypot(p.y - cand.y) > radius)
        {
            peaks.push(cand);
        }
    }
    if peaks.len() < MIN_MARKERS {
        return Err(Error::ScaleRecoveryFailed {
            found: peaks.len(),
            needed: MIN_MARKERS,
        });
    }

    let vertical = band.height >= band.width;
    peaks.sort_by(|a, b| {
        if vertical {
            a.y.total_cmp(&b.y).then_with(|| a.x.total_cmp(&b.x))
        } else {
            a.x.total_cmp(&b.x).then_with(|| a.y.total_cmp(&b.y))
        }
    });
    let mut gaps: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .collect();
    gaps.sort_by(f64::total_cmp);
    let median_gap_px = crate::metrics::median_sorted(&gaps);
    Ok(RecoveredScale {
        mm_per_pixel: template.physical_spacing_mm / median_gap_px,
        median_gap_px,
        peaks,
    })
}
