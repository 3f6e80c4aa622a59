//! Synthetic ultrasound-like frames with exact landmark ground truth.
//!
//! A femur is a bright flat-ended rod whose end-face centers are the FL
//! landmarks; a head is a bright elliptical shell whose axis endpoints are
//! the OFD and BPD landmarks. Shapes sit on multiplicative speckle. An
//! optional vertical ruler of square markers is drawn on a black strip along
//! the right edge.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{save_point_annotations, ImageEntry};
use crate::error::{Error, Result};
use crate::geometry::{LandmarkPair, MeasurementKind, Point2D};
use crate::image::{AnnotatedImage, GrayImage};
use crate::measure::{Rect, RulerTemplate};

const MAX_POSE_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticShape {
    EllipseHead,
    RodFemur,
}

/// Ruler markers every `spacing_px` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulerSpec {
    pub spacing_px: usize,
    pub marker_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub width: usize,
    pub height: usize,
    pub n_images: usize,
    pub shape: SyntheticShape,
    /// Shape center range as fractions of the frame width.
    pub center_x_range: (f64, f64),
    /// Shape center range as fractions of the frame height.
    pub center_y_range: (f64, f64),
    /// Rod length, or head major axis (twice the semi-major axis), in pixels.
    pub length_range_px: (f64, f64),
    /// Head minor/major axis ratio.
    pub aspect_range: (f64, f64),
    /// Rod width or shell thickness in pixels.
    pub thickness_px: f64,
    /// Direction from the first to the second landmark, degrees.
    pub orientation_range_deg: (f64, f64),
    /// Standard deviation of the multiplicative speckle.
    pub noise_std: f64,
    pub mm_per_pixel: f64,
    /// Write `mm_per_pixel` into the annotations.
    pub scale_metadata: bool,
    pub ruler: Option<RulerSpec>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            n_images: 200,
            shape: SyntheticShape::RodFemur,
            center_x_range: (0.4, 0.6),
            center_y_range: (0.4, 0.6),
            length_range_px: (50.0, 70.0),
            aspect_range: (0.7, 0.85),
            thickness_px: 5.0,
            orientation_range_deg: (-45.0, 45.0),
            noise_std: 0.2,
            mm_per_pixel: 0.1,
            scale_metadata: true,
            ruler: None,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.n_images == 0 {
            return Err(Error::domain("n_images must be at least 1"));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::domain("synthetic frames must be at least 16x16"));
        }
        for (name, r) in [("center_x_range", self.center_x_range), ("center_y_range", self.center_y_range)] {
            if !ordered(r) || r.0 < 0.0 || r.1 > 1.0 {
                return Err(Error::domain(format!("{name} must be an ordered range inside [0, 1]")));
            }
        }
        if !ordered(self.length_range_px) || self.length_range_px.0 <= 0.0 {
            return Err(Error::domain("length_range_px must be an ordered positive range"));
        }
        let (a0, a1) = self.aspect_range;
        if !ordered(self.aspect_range) || a0 <= 0.0 || a1 > 1.0 {
            return Err(Error::domain("aspect_range must be an ordered range inside (0, 1]"));
        }
        let (o0, o1) = self.orientation_range_deg;
        if !ordered(self.orientation_range_deg) || o0 < -180.0 || o1 > 180.0 {
            return Err(Error::domain("orientation_range_deg must be an ordered range inside [-180, 180]"));
        }
        if !(self.thickness_px > 0.0) || !(self.noise_std >= 0.0) || !(self.mm_per_pixel > 0.0) {
            return Err(Error::domain("thickness, noise and scale must be positive"));
        }
        if let Some(r) = self.ruler {
            if r.marker_size == 0 || r.spacing_px < r.marker_size + 2 {
                return Err(Error::domain("ruler spacing must exceed the marker size by 2 px"));
            }
            if 3 * r.spacing_px + 8 > self.height {
                return Err(Error::domain("frame too short for three ruler markers"));
            }
        }
        Ok(())
    }

    fn ruler_strip(&self) -> Option<(usize, RulerSpec)> {
        self.ruler.map(|r| (self.width - (r.marker_size + 8), r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub images: Vec<AnnotatedImage>,
    /// Sampled first-to-second landmark direction per image, degrees.
    pub orientations_deg: Vec<f64>,
    /// Matching template when a ruler was drawn.
    pub ruler: Option<RulerTemplate>,
}

impl SyntheticDataset {
    pub fn entries(&self) -> Vec<ImageEntry> {
        self.images
            .iter()
            .map(|img| ImageEntry {
                image: format!("{}.png", img.image_id),
                landmarks: img.landmarks.clone(),
                subject_id: img.subject_id.clone(),
                mm_per_pixel: img.mm_per_pixel,
            })
            .collect()
    }
}

struct Pose {
    center: Point2D,
    length: f64,
    aspect: f64,
    angle_deg: f64,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Coverage in `[0, 1]` of a pixel by a band `|d| <= half`, one-pixel ramp.
fn ramp(half: f64, d: f64) -> f64 {
    (half + 0.5 - d.abs()).clamp(0.0, 1.0)
}

impl Pose {
    fn frame(&self) -> (f64, f64) {
        let t = self.angle_deg.to_radians();
        (t.cos(), t.sin())
    }

    fn landmarks(&self, shape: SyntheticShape) -> Vec<LandmarkPair> {
        let (c, s) = self.frame();
        let p = |k: f64, dx: f64, dy: f64| Point2D::new(self.center.x + k * dx, self.center.y + k * dy);
        let half = self.length / 2.0;
        match shape {
            SyntheticShape::RodFemur => vec![LandmarkPair {
                first: p(-half, c, s),
                second: p(half, c, s),
                measurement: MeasurementKind::Fl,
            }],
            SyntheticShape::EllipseHead => {
                let b = half * self.aspect;
                vec![
                    LandmarkPair {
                        first: p(-half, c, s),
                        second: p(half, c, s),
                        measurement: MeasurementKind::Ofd,
                    },
                    LandmarkPair {
                        first: p(b, s, -c),
                        second: p(-b, s, -c),
                        measurement: MeasurementKind::Bpd,
                    },
                ]
            }
        }
    }

    /// Axis-aligned extent of the drawn shape.
    fn bounds(&self, shape: SyntheticShape, thickness: f64) -> (f64, f64, f64, f64) {
        let (c, s) = self.frame();
        let half = self.length / 2.0;
        let t = thickness / 2.0 + 1.0;
        let (ex, ey) = match shape {
            SyntheticShape::RodFemur => (half * c.abs() + t * s.abs(), half * s.abs() + t * c.abs()),
            SyntheticShape::EllipseHead => {
                let b = half * self.aspect;
                (
                    (half * half * c * c + b * b * s * s).sqrt() + t,
                    (half * half * s * s + b * b * c * c).sqrt() + t,
                )
            }
        };
        (self.center.x - ex, self.center.x + ex, self.center.y - ey, self.center.y + ey)
    }

    fn intensity(&self, shape: SyntheticShape, thickness: f64, x: f64, y: f64) -> f64 {
        let (c, s) = self.frame();
        let (dx, dy) = (x - self.center.x, y - self.center.y);
        let along = c * dx + s * dy;
        let across = -s * dx + c * dy;
        let half = self.length / 2.0;
        match shape {
            SyntheticShape::RodFemur => ramp(half, along) * ramp(thickness / 2.0, across),
            SyntheticShape::EllipseHead => {
                let b = half * self.aspect;
                let r = ((along / half).powi(2) + (across / b).powi(2)).sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                // first-order distance to the contour
                let grad = ((along / (half * half)).powi(2) + (across / (b * b)).powi(2)).sqrt() / r;
                ramp(thickness / 2.0, (r - 1.0) / grad)
            }
        }
    }
}

fn sample_pose(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Pose> {
    let (w, h) = (config.width as f64, config.height as f64);
    let x_limit = config.ruler_strip().map_or(w, |(x0, _)| x0 as f64);
    for _ in 0..MAX_POSE_ATTEMPTS {
        let pose = Pose {
            center: Point2D::new(
                uniform(rng, config.center_x_range) * (w - 1.0),
                uniform(rng, config.center_y_range) * (h - 1.0),
            ),
            length: uniform(rng, config.length_range_px),
            aspect: uniform(rng, config.aspect_range),
            angle_deg: uniform(rng, config.orientation_range_deg),
        };
        let (x0, x1, y0, y1) = pose.bounds(config.shape, config.thickness_px);
        if x0 >= 0.0 && y0 >= 0.0 && x1 <= x_limit - 1.0 && y1 <= h - 1.0 {
            return Ok(pose);
        }
    }
    Err(Error::domain(format!(
        "no pose fits the {}x{} frame after {MAX_POSE_ATTEMPTS} draws; shrink the size or center ranges",
        config.width, config.height
    )))
}

fn marker_rows(config: &SyntheticConfig, ruler: RulerSpec) -> impl Iterator<Item = usize> {
    let last = config.height - ruler.marker_size - 4;
    (4..=last).step_by(ruler.spacing_px)
}

fn ruler_template(config: &SyntheticConfig, strip_x: usize, ruler: RulerSpec) -> RulerTemplate {
    let m = ruler.marker_size;
    let patch = GrayImage::from_fn(m + 4, m + 4, |x, y| {
        if (2..m + 2).contains(&x) && (2..m + 2).contains(&y) {
            1.0
        } else {
            0.0
        }
    });
    let band = Rect::new(strip_x, 0, config.width - strip_x, config.height);
    RulerTemplate::new(patch, config.mm_per_pixel * ruler.spacing_px as f64, band)
}

/// Renders `n_images` frames; deterministic in `config.seed`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let strip = config.ruler_strip();
    let mut images = Vec::with_capacity(config.n_images);
    let mut orientations = Vec::with_capacity(config.n_images);

    for i in 0..config.n_images {
        let pose = sample_pose(config, &mut rng)?;
        let mut pixels = GrayImage::from_fn(config.width, config.height, |x, y| {
            let signal = 0.15 + 0.7 * pose.intensity(config.shape, config.thickness_px, x as f64, y as f64);
            let n: f64 = StandardNormal.sample(&mut rng);
            (signal * (1.0 + config.noise_std * n)).clamp(0.0, 1.0)
        });
        if let Some((x0, ruler)) = strip {
            for y in 0..config.height {
                for x in x0..config.width {
                    pixels.set(x, y, 0.0);
                }
            }
            let mx = x0 + 4;
            for y0 in marker_rows(config, ruler) {
                for y in y0..y0 + ruler.marker_size {
                    for x in mx..mx + ruler.marker_size {
                        pixels.set(x, y, 1.0);
                    }
                }
            }
        }
        let image = AnnotatedImage {
            pixels,
            landmarks: pose.landmarks(config.shape),
            mm_per_pixel: config.scale_metadata.then_some(config.mm_per_pixel),
            image_id: format!("synth_{i:05}"),
            subject_id: format!("subject_{i:05}"),
            source_id: "synthetic".into(),
        };
        image.validate()?;
        images.push(image);
        orientations.push(pose.angle_deg);
    }
    Ok(SyntheticDataset {
        images,
        orientations_deg: orientations,
        ruler: strip.map(|(x0, r)| ruler_template(config, x0, r)),
    })
}

/// Writes `<id>.png` per image plus `annotations.csv` (and the ruler
/// template, if any) into `dir`. Returns the CSV path.
pub fn write_synthetic(dir: impl AsRef<Path>, dataset: &SyntheticDataset) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for img in &dataset.images {
        img.pixels.save_png(dir.join(format!("{}.png", img.image_id)))?;
    }
    if let Some(t) = &dataset.ruler {
        t.save(dir.join("ruler_template.json"))?;
    }
    let csv = dir.join("annotations.csv");
    save_point_annotations(&csv, &dataset.entries())?;
    Ok(csv)
}

/// p-value of Pearson's χ² test that `values` are uniform on `[lo, hi]`.
pub fn chi_square_uniformity(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<f64> {
    if bins < 2 || !(hi > lo) {
        return Err(Error::domain("need at least 2 bins over a non-empty range"));
    }
    if values.len() < 5 * bins {
        return Err(Error::InsufficientData {
            needed: 5 * bins,
            got: values.len(),
        });
    }
    let mut counts = vec![0usize; bins];
    for v in values {
        if !(lo..=hi).contains(v) {
            return Err(Error::domain(format!("value {v} outside [{lo}, {hi}]")));
        }
        let k = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((bins - 1) as f64).map_err(|e| Error::domain(e.to_string()))?;
    Ok(dist.sf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::recover_scale;

    fn fixed_pose(shape: SyntheticShape) -> SyntheticConfig {
        SyntheticConfig {
            n_images: 1,
            shape,
            center_x_range: (0.5, 0.5),
            center_y_range: (0.5, 0.5),
            length_range_px: (60.0, 60.0),
            aspect_range: (0.75, 0.75),
            orientation_range_deg: (30.0, 30.0),
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn fixed_rod_has_analytic_endpoints() {
        let d = generate_synthetic(&fixed_pose(SyntheticShape::RodFemur)).unwrap();
        let pair = d.images[0].landmarks[0];
        let c = 63.5;
        let (cos, sin) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        assert!((pair.first.x - (c - 30.0 * cos)).abs() < 1e-12);
        assert!((pair.first.y - (c - 30.0 * sin)).abs() < 1e-12);
        assert!((pair.second.x - (c + 30.0 * cos)).abs() < 1e-12);
        assert!((pair.length() - 60.0).abs() < 1e-12);
        // the rod is bright along its axis and dark well off it
        let img = &d.images[0].pixels;
        let mean = |x: f64, y: f64| {
            let mut s = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    s += img.get((x.round() as isize + dx) as usize, (y.round() as isize + dy) as usize);
                }
            }
            s / 9.0
        };
        assert!(mean(c, c) > 0.6);
        assert!(mean(c - 15.0 * sin, c + 15.0 * cos) < 0.3);
    }

    #[test]
    fn fixed_head_axes_are_perpendicular() {
        let d = generate_synthetic(&fixed_pose(SyntheticShape::EllipseHead)).unwrap();
        let img = &d.images[0];
        let ofd = img.pair(MeasurementKind::Ofd).unwrap();
        let bpd = img.pair(MeasurementKind::Bpd).unwrap();
        assert!((ofd.length() - 60.0).abs() < 1e-9);
        assert!((bpd.length() - 45.0).abs() < 1e-9);
        let u = (ofd.second.x - ofd.first.x, ofd.second.y - ofd.first.y);
        let v = (bpd.second.x - bpd.first.x, bpd.second.y - bpd.first.y);
        assert!((u.0 * v.0 + u.1 * v.1).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_images() {
        let c = SyntheticConfig {
            n_images: 5,
            ..SyntheticConfig::default()
        };
        assert_eq!(generate_synthetic(&c).unwrap(), generate_synthetic(&c).unwrap());
    }

    #[test]
    fn shapes_stay_inside_the_frame() {
        let c = SyntheticConfig {
            n_images: 200,
            orientation_range_deg: (-180.0, 180.0),
            shape: SyntheticShape::EllipseHead,
            center_x_range: (0.2, 0.8),
            ..SyntheticConfig::default()
        };
        for img in generate_synthetic(&c).unwrap().images {
            img.validate().unwrap();
        }
    }

    #[test]
    fn orientations_are_uniform() {
        let c = SyntheticConfig {
            n_images: 2000,
            width: 32,
            height: 32,
            length_range_px: (10.0, 12.0),
            thickness_px: 2.0,
            orientation_range_deg: (-180.0, 180.0),
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&c).unwrap();
        let p = chi_square_uniformity(&d.orientations_deg, -180.0, 180.0, 18).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn skewed_values_fail_uniformity() {
        let v: Vec<f64> = (0..2000).map(|i| (i as f64 / 2000.0).powi(2) * 360.0 - 180.0).collect();
        assert!(chi_square_uniformity(&v, -180.0, 180.0, 18).unwrap() < 0.01);
    }

    #[test]
    fn ruler_scale_is_recovered_exactly() {
        let c = SyntheticConfig {
            n_images: 3,
            ruler: Some(RulerSpec {
                spacing_px: 10,
                marker_size: 3,
            }),
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&c).unwrap();
        let t = d.ruler.as_ref().unwrap();
        for img in &d.images {
            assert_eq!(recover_scale(&img.pixels, t).unwrap().mm_per_pixel, 0.1);
        }
    }

    #[test]
    fn written_dataset_reloads() {
        let c = SyntheticConfig {
            n_images: 4,
            ..SyntheticConfig::default()
        };
        let d = generate_synthetic(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = write_synthetic(dir.path(), &d).unwrap();
        let back = crate::data::load_point_annotations(&csv).unwrap();
        assert_eq!(back.entries, d.entries());
        assert!(back.rejected.is_empty());
    }

    #[test]
    fn impossible_pose_ranges_error() {
        let c = SyntheticConfig {
            length_range_px: (200.0, 220.0),
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic(&c).is_err());
    }
}
