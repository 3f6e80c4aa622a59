//! From landmark pairs to millimeters.
//!
//! Covers scale recovery from on-screen ruler markers, direct least-squares
//! ellipse fitting for head-contour annotations, and the final pixel-to-mm
//! conversion.

mod ellipse;
mod mask;
mod ruler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LandmarkPair, MeasurementKind};

pub use ellipse::{ellipse_axis_landmarks, fit_ellipse, AxisLandmarks, Ellipse};
pub use mask::{boundary_points, largest_component};
pub use ruler::{recover_scale, ncc_map, Peak, Rect, RecoveredScale, RulerTemplate};

/// Where a pixel scale came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSource {
    /// Physical calibration shipped with the image.
    Metadata,
    /// Estimated from ruler markers.
    Recovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScale {
    pub mm_per_pixel: f64,
    pub source: ScaleSource,
}

impl PixelScale {
    pub fn metadata(mm_per_pixel: f64) -> Self {
        Self {
            mm_per_pixel,
            source: ScaleSource::Metadata,
        }
    }

    pub fn recovered(mm_per_pixel: f64) -> Self {
        Self {
            mm_per_pixel,
            source: ScaleSource::Recovered,
        }
    }
}

/// Which scale sources to try, from the command line or a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePreference {
    /// Calibration metadata only.
    Metadata,
    /// Ruler recovery only.
    Recover,
    /// Metadata when present, otherwise ruler recovery.
    #[default]
    Auto,
}

impl std::str::FromStr for ScalePreference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "metadata" => Ok(Self::Metadata),
            "recover" => Ok(Self::Recover),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Parse(format!(
                "unknown scale source {other:?} (expected metadata, recover or auto)"
            ))),
        }
    }
}

/// Picks the pixel scale for one image according to `preference`.
///
/// Fails with [`Error::NoScale`] when no allowed source yields a scale.
pub fn resolve_scale(
    preference: ScalePreference,
    metadata: Option<f64>,
    image: &crate::image::GrayImage,
    template: Option<&RulerTemplate>,
) -> Result<PixelScale> {
    let from_metadata = metadata.filter(|m| *m > 0.0 && m.is_finite()).map(PixelScale::metadata);
    if preference != ScalePreference::Recover {
        if let Some(scale) = from_metadata {
            return Ok(scale);
        }
        if preference == ScalePreference::Metadata {
            return Err(Error::NoScale("image carries no mm_per_pixel metadata".into()));
        }
    }
    let template = template.ok_or_else(|| Error::NoScale("no ruler template configured".into()))?;
    match recover_scale(image, template) {
        Ok(r) => Ok(PixelScale::recovered(r.mm_per_pixel)),
        Err(Error::ScaleRecoveryFailed { found, needed }) => Err(Error::NoScale(format!(
            "ruler recovery found {found} markers, need {needed}"
        ))),
        Err(e) => Err(e),
    }
}

/// A measurement in pixels and millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiometricResult {
    pub kind: MeasurementKind,
    pub length_px: f64,
    pub mm_per_pixel: f64,
    pub length_mm: f64,
    pub landmarks: LandmarkPair,
    pub scale_source: ScaleSource,
}

/// Length of `pair` in pixels and millimeters.
pub fn compute_measurement(pair: &LandmarkPair, scale: PixelScale) -> Result<BiometricResult> {
    if !(scale.mm_per_pixel > 0.0) || !scale.mm_per_pixel.is_finite() {
        return Err(Error::domain(format!(
            "mm_per_pixel must be positive, got {}",
            scale.mm_per_pixel
        )));
    }
    pair.validate()?;
    let length_px = pair.length();
    Ok(BiometricResult {
        kind: pair.measurement,
        length_px,
        mm_per_pixel: scale.mm_per_pixel,
        length_mm: length_px * scale.mm_per_pixel,
        landmarks: *pair,
        scale_source: scale.source,
    })
}
