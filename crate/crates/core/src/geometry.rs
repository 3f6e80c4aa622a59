//! Points, landmark pairs and the image coordinate frame.
//!
//! All coordinates use one frame: `x` grows to the right, `y` grows downward,
//! and the origin sits on the center of the top-left pixel. Landmarks are kept
//! as continuous values so augmentation never quantizes ground truth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D point in pixel (or any other consistent) units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Lexicographic `(x, y)` comparison used for deterministic tie-breaks.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

/// A point expressed as a fraction of the image width and height.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub u: f64,
    pub v: f64,
}

impl NormalizedPoint {
    /// Checked constructor; both coordinates must lie in `[0, 1]`.
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!(
                "normalized point ({u}, {v}) outside [0,1]^2"
            )));
        }
        Ok(Self { u, v })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.u, self.v]
    }
}

/// Pixel dimensions of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: usize,
    pub height: usize,
}

impl ImageDims {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    /// `true` when `p` lies in `[0, width) x [0, height)`.
    pub fn contains(&self, p: &Point2D) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    /// Geometric center in the pixel-center convention.
    pub fn center(&self) -> Point2D {
        Point2D::new(
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }
}

/// The biometric measurements a landmark pair can encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasurementKind {
    /// Occipito-frontal diameter (major head axis).
    #[serde(rename = "OFD")]
    Ofd,
    /// Biparietal diameter (minor head axis).
    #[serde(rename = "BPD")]
    Bpd,
    /// Femur length.
    #[serde(rename = "FL")]
    Fl,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 3] = [Self::Ofd, Self::Bpd, Self::Fl];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ofd => "OFD",
            Self::Bpd => "BPD",
            Self::Fl => "FL",
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasurementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "OFD" => Ok(Self::Ofd),
            "BPD" => Ok(Self::Bpd),
            "FL" => Ok(Self::Fl),
            other => Err(Error::Parse(format!("unknown measurement kind {other:?}"))),
        }
    }
}

/// Two labeled landmarks defining one biometric measurement.
///
/// `first` and `second` are the class-1 and class-2 landmarks. Raw
/// annotations keep the order in which they were clicked; orientation
/// reassignment may swap them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPair {
    pub first: Point2D,
    pub second: Point2D,
    pub measurement: MeasurementKind,
}

impl LandmarkPair {
    /// Checked constructor: points must be finite and distinct.
    pub fn new(first: Point2D, second: Point2D, measurement: MeasurementKind) -> Result<Self> {
        let pair = Self {
            first,
            second,
            measurement,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.first.is_finite() || !self.second.is_finite() {
            return Err(Error::domain("landmark coordinates must be finite"));
        }
        if self.first == self.second {
            return Err(Error::domain(format!(
                "{} landmarks coincide at ({}, {})",
                self.measurement, self.first.x, self.first.y
            )));
        }
        Ok(())
    }

    /// Same points with the class labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            first: self.second,
            second: self.first,
            measurement: self.measurement,
        }
    }

    pub fn points(&self) -> [Point2D; 2] {
        [self.first, self.second]
    }

    pub fn length(&self) -> f64 {
        euclidean_distance(&self.first, &self.second)
    }

    /// Applies `f` to both points, keeping labels.
    pub fn map_points(&self, mut f: impl FnMut(Point2D) -> Point2D) -> Self {
        Self {
            first: f(self.first),
            second: f(self.second),
            measurement: self.measurement,
        }
    }
}

/// Maps a pixel position into `[0,1]^2` by dividing by the image size.
pub fn normalize(p: &Point2D, width: usize, height: usize) -> Result<NormalizedPoint> {
    if width == 0 || height == 0 {
        return Err(Error::domain("image dimensions must be positive"));
    }
    if !ImageDims::new(width, height).contains(p) {
        return Err(Error::domain(format!(
            "point ({}, {}) outside {width}x{height} image",
            p.x, p.y
        )));
    }
    Ok(NormalizedPoint {
        u: p.x / width as f64,
        v: p.y / height as f64,
    })
}

/// Inverse of [`normalize`]. Integer pixel positions come back exactly.
pub fn denormalize(p: &NormalizedPoint, width: usize, height: usize) -> Point2D {
    Point2D::new(
        snap_to_integer(p.u * width as f64),
        snap_to_integer(p.v * height as f64),
    )
}

/// Undoes the last-bit error of a divide/multiply round trip near integers.
fn snap_to_integer(v: f64) -> f64 {
    let r = v.round();
    if (r - v).abs() <= 4.0 * f64::EPSILON * v.abs() {
        r
    } else {
        v
    }
}

pub fn euclidean_distance(a: &Point2D, b: &Point2D) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}
