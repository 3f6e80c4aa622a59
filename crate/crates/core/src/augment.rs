//! Geometric training augmentation applied jointly to image and landmarks.
//!
//! Rotation and scaling are both about the image center `((W-1)/2, (H-1)/2)`
//! and keep the original frame size. Images are resampled bilinearly with
//! zero fill; landmarks go through the exact affine map. Orientation
//! reassignment runs after every geometric step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dod::{reassign, ProjectionAxis};
use crate::error::{Error, Result};
use crate::geometry::{ImageDims, LandmarkPair, Point2D};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Rotation angle range in degrees, sampled uniformly.
    pub rotation_range_deg: (f64, f64),
    /// Scale jitter range in percent, sampled uniformly.
    pub scale_range_pct: (f64, f64),
    pub max_resample_attempts: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_range_deg: (-180.0, 180.0),
            scale_range_pct: (-5.0, 5.0),
            max_resample_attempts: 10,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// No geometric change at all.
    pub fn identity() -> Self {
        Self {
            rotation_range_deg: (0.0, 0.0),
            scale_range_pct: (0.0, 0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.rotation_range_deg;
        if !(-180.0..=180.0).contains(&r0) || !(-180.0..=180.0).contains(&r1) || r0 > r1 {
            return Err(Error::domain(format!(
                "rotation range ({r0}, {r1}) must be an ordered sub-range of [-180, 180]"
            )));
        }
        let (s0, s1) = self.scale_range_pct;
        if !(-5.0..=5.0).contains(&s0) || !(-5.0..=5.0).contains(&s1) || s0 > s1 {
            return Err(Error::domain(format!(
                "scale range ({s0}, {s1}) must be an ordered sub-range of [-5, 5] percent"
            )));
        }
        if self.max_resample_attempts == 0 {
            return Err(Error::domain("max_resample_attempts must be at least 1"));
        }
        Ok(())
    }
}

/// A transformed landmark left the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rejected {
    pub landmark: Point2D,
}

/// One image with the landmark pair being trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: GrayImage,
    pub pair: LandmarkPair,
}

/// How class labels are assigned after augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelPolicy {
    /// Keep whatever order the transform produced.
    Keep,
    /// Reorder by projection onto the axis.
    Reorder(ProjectionAxis),
}

impl LabelPolicy {
    pub fn apply(&self, pair: &LandmarkPair, dims: ImageDims) -> Result<LandmarkPair> {
        match self {
            LabelPolicy::Keep => Ok(*pair),
            LabelPolicy::Reorder(axis) => reassign(pair, axis, dims),
        }
    }
}

fn map_pair(pair: &LandmarkPair, dims: ImageDims, f: impl Fn(Point2D) -> Point2D) -> std::result::Result<LandmarkPair, Rejected> {
    let mapped = pair.map_points(f);
    for p in mapped.points() {
        if !dims.contains(&p) {
            return Err(Rejected { landmark: p });
        }
    }
    Ok(mapped)
}

/// Rotation of a point by `angle_deg` about `center` (positive angles turn
/// +x toward +y).
pub fn rotate_point(p: Point2D, center: Point2D, angle_deg: f64) -> Point2D {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    Point2D::new(center.x + c * dx - s * dy, center.y + s * dx + c * dy)
}

/// Rotates image and landmarks about the image center, keeping the frame size.
pub fn rotate(sample: &Sample, angle_deg: f64) -> std::result::Result<Sample, Rejected> {
    if angle_deg == 0.0 {
        return Ok(sample.clone());
    }
    let dims = sample.image.dims();
    let center = dims.center();
    let pair = map_pair(&sample.pair, dims, |p| rotate_point(p, center, angle_deg))?;
    let src = &sample.image;
    let image = GrayImage::from_fn(dims.width, dims.height, |x, y| {
        let q = rotate_point(Point2D::new(x as f64, y as f64), center, -angle_deg);
        src.bilinear(q.x, q.y)
    });
    Ok(Sample { image, pair })
}

/// Scales image and landmarks about the image center by `factor`.
pub fn scale_jitter(sample: &Sample, factor: f64) -> std::result::Result<Sample, Rejected> {
    if factor == 1.0 {
        return Ok(sample.clone());
    }
    let dims = sample.image.dims();
    let c = dims.center();
    let pair = map_pair(&sample.pair, dims, |p| {
        Point2D::new(c.x + factor * (p.x - c.x), c.y + factor * (p.y - c.y))
    })?;
    let src = &sample.image;
    let image = GrayImage::from_fn(dims.width, dims.height, |x, y| {
        src.bilinear(
            c.x + (x as f64 - c.x) / factor,
            c.y + (y as f64 - c.y) / factor,
        )
    });
    Ok(Sample { image, pair })
}

fn sample_range<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Parameters drawn for one accepted augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub scale: f64,
    pub attempts: usize,
}

/// Outcome of [`augment_sample`].
#[derive(Debug, Clone, PartialEq)]
pub enum Augmented {
    Sample(Sample, AugmentParams),
    /// Every attempt pushed a landmark out of frame; drop for this epoch.
    Skipped { attempts: usize },
}

/// Rotation, then scale jitter, then label reassignment.
///
/// Parameters are redrawn up to `max_resample_attempts` times when a landmark
/// leaves the frame.
pub fn augment_sample<R: Rng + ?Sized>(
    sample: &Sample,
    policy: &LabelPolicy,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Augmented> {
    config.validate()?;
    for attempt in 1..=config.max_resample_attempts {
        let angle = sample_range(rng, config.rotation_range_deg);
        let pct = sample_range(rng, config.scale_range_pct);
        let scale = 1.0 + pct / 100.0;
        let out = rotate(sample, angle).and_then(|s| scale_jitter(&s, scale));
        if let Ok(mut out) = out {
            out.pair = policy.apply(&out.pair, out.image.dims())?;
            return Ok(Augmented::Sample(
                out,
                AugmentParams {
                    angle_deg: angle,
                    scale,
                    attempts: attempt,
                },
            ));
        }
    }
    Ok(Augmented::Skipped {
        attempts: config.max_resample_attempts,
    })
}
