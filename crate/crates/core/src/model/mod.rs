//! Heatmap landmark regressor: architecture, preprocessing, training and
//! inference. One network is trained per measurement kind.

mod checkpoint;
mod network;
mod train;

use serde::{Deserialize, Serialize};

use crate::dod::{reassign, OrientationModel, ProjectionAxis};
use crate::error::{Error, Result};
use crate::geometry::{ImageDims, LandmarkPair, Point2D};
use crate::heatmap::{decode, HeatmapConfig};
use crate::image::GrayImage;

pub use checkpoint::{Checkpoint, EpochCurves, ResumeState};
pub use network::Regressor;
pub use train::{prepare_samples, train, PreparedSample, TrainOptions, TrainSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Four parallel resolution streams fused into one before the head.
    MultiResolutionFull,
    /// Three down and three up stages with skip connections.
    TinyEncoderDecoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressorSpec {
    pub variant: Variant,
    pub input_height: usize,
    pub input_width: usize,
    /// Input pixels per output cell; a power of two.
    pub output_stride: usize,
    /// Widths of the four resolution stages, finest first.
    pub channels: [usize; 4],
}

impl Default for RegressorSpec {
    fn default() -> Self {
        Self {
            variant: Variant::TinyEncoderDecoder,
            input_height: 256,
            input_width: 256,
            output_stride: 4,
            channels: [16, 24, 32, 48],
        }
    }
}

impl RegressorSpec {
    pub fn validate(&self) -> Result<()> {
        let s = self.output_stride;
        if !s.is_power_of_two() || s > 16 {
            return Err(Error::domain(format!("output stride {s} must be a power of two up to 16")));
        }
        let unit = 8 * s;
        if self.input_height == 0
            || self.input_width == 0
            || self.input_height % unit != 0
            || self.input_width % unit != 0
        {
            return Err(Error::domain(format!(
                "input {}x{} must be a positive multiple of {unit} (8 x output stride)",
                self.input_width, self.input_height
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::domain("stage widths must be positive"));
        }
        Ok(())
    }

    /// `(rows, cols)` of the output heatmaps.
    pub fn output_grid(&self) -> (usize, usize) {
        (
            self.input_height / self.output_stride,
            self.input_width / self.output_stride,
        )
    }

    pub fn input_dims(&self) -> ImageDims {
        ImageDims::new(self.input_width, self.input_height)
    }
}

/// How landmark classes are assigned during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationMode {
    /// Reorder by the fitted orientation model after every augmentation.
    #[default]
    Dynamic,
    FixedHorizontal,
    FixedVertical,
    /// Keep annotation order through augmentation.
    None,
}

impl OrientationMode {
    pub const ALL: [OrientationMode; 4] = [
        Self::Dynamic,
        Self::FixedHorizontal,
        Self::FixedVertical,
        Self::None,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Dynamic => "dynamic",
            Self::FixedHorizontal => "fixed_horizontal",
            Self::FixedVertical => "fixed_vertical",
            Self::None => "none",
        }
    }

    /// The reordering axis, or `None` when labels are kept as annotated.
    pub fn label_axis(&self, orientation: Option<&OrientationModel>) -> Result<Option<ProjectionAxis>> {
        Ok(match self {
            Self::Dynamic => Some(
                orientation
                    .ok_or_else(|| Error::domain("dynamic orientation mode needs a fitted orientation model"))?
                    .axis(),
            ),
            Self::FixedHorizontal => Some(ProjectionAxis::horizontal()),
            Self::FixedVertical => Some(ProjectionAxis::vertical()),
            Self::None => None,
        })
    }
}

impl std::str::FromStr for OrientationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown orientation mode {s:?}")))
    }
}

/// Applies an optional reordering axis to a pair in a frame of `dims`.
pub fn apply_label_axis(pair: &LandmarkPair, axis: Option<&ProjectionAxis>, dims: ImageDims) -> Result<LandmarkPair> {
    match axis {
        Some(axis) => reassign(pair, axis, dims),
        None => Ok(*pair),
    }
}

impl std::fmt::Display for OrientationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_drop_factor: f64,
    /// 0-based epochs from which the next drop applies.
    pub lr_drop_epochs: Vec<usize>,
    pub seed: u64,
    pub orientation_mode: OrientationMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            initial_lr: 1e-4,
            lr_drop_factor: 0.2,
            lr_drop_epochs: vec![10, 40, 90, 150],
            seed: 0,
            orientation_mode: OrientationMode::Dynamic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("epochs and batch size must be positive"));
        }
        if !(self.initial_lr > 0.0) || !(self.lr_drop_factor > 0.0) {
            return Err(Error::domain("learning rate and drop factor must be positive"));
        }
        if self.lr_drop_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("lr drop epochs must be strictly increasing"));
        }
        if self.lr_drop_epochs.last().is_some_and(|&e| e >= self.epochs) {
            return Err(Error::domain("lr drop epochs must come before the last epoch"));
        }
        Ok(())
    }

    /// Step schedule: one factor per drop epoch already reached.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let drops = self.lr_drop_epochs.iter().filter(|&&d| d <= epoch).count();
        self.initial_lr * self.lr_drop_factor.powi(drops as i32)
    }
}

/// An image resized (longest side to the input), standardized and padded.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub input: GrayImage,
    /// Input pixels per original pixel.
    pub ratio: f64,
    pub original: ImageDims,
    /// Part of the input frame covered by image content.
    pub content: ImageDims,
}

impl Preprocessed {
    pub fn to_original(&self, p: Point2D) -> Point2D {
        Point2D::new(p.x / self.ratio, p.y / self.ratio)
    }

    pub fn to_input(&self, p: Point2D) -> Point2D {
        Point2D::new(p.x * self.ratio, p.y * self.ratio)
    }
}

pub fn preprocess(image: &GrayImage, spec: &RegressorSpec) -> Result<Preprocessed> {
    let (w, h) = (image.width(), image.height());
    if w == 0 || h == 0 {
        return Err(Error::domain("cannot preprocess an empty image"));
    }
    let ratio = (spec.input_width as f64 / w as f64).min(spec.input_height as f64 / h as f64);
    let cw = ((w as f64 * ratio).round() as usize).clamp(1, spec.input_width);
    let ch = ((h as f64 * ratio).round() as usize).clamp(1, spec.input_height);
    let content = image.rescale(ratio, cw, ch).standardized();
    let mut input = GrayImage::zeros(spec.input_width, spec.input_height);
    input
        .data_mut()
        .slice_mut(ndarray::s![..ch, ..cw])
        .assign(content.data());
    Ok(Preprocessed {
        input,
        ratio,
        original: ImageDims::new(w, h),
        content: ImageDims::new(cw, ch),
    })
}

/// Predicted landmarks in original image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair: LandmarkPair,
    /// Peak heatmap value per channel.
    pub confidence: [f64; 2],
    pub low_confidence: [bool; 2],
}

/// Inference-only view of a trained checkpoint.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub network: Regressor<f32>,
    pub heatmap: HeatmapConfig,
    pub measurement: crate::geometry::MeasurementKind,
}

impl Predictor {
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        Ok(Self {
            network: Regressor::from_flat(checkpoint.spec.clone(), &checkpoint.weights)?,
            heatmap: checkpoint.heatmap,
            measurement: checkpoint.measurement,
        })
    }

    pub fn predict(&self, image: &GrayImage) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(image))?.remove(0))
    }

    pub fn predict_batch(&self, images: &[GrayImage]) -> Result<Vec<Prediction>> {
        let prepared = images
            .iter()
            .map(|img| preprocess(img, &self.network.spec))
            .collect::<Result<Vec<_>>>()?;
        let inputs: Vec<&GrayImage> = prepared.iter().map(|p| &p.input).collect();
        let stacks = self.network.heatmaps(&inputs)?;
        prepared
            .iter()
            .zip(stacks)
            .map(|(pre, stack)| {
                let d = decode(&stack, self.measurement, self.heatmap.subpixel_refinement)?;
                Ok(Prediction {
                    pair: d.pair.map_points(|p| pre.to_original(p)),
                    confidence: d.confidence,
                    low_confidence: d.low_confidence,
                })
            })
            .collect()
    }
}

/// Forward pass and decode of one image with a checkpoint.
pub fn predict(image: &GrayImage, checkpoint: &Checkpoint) -> Result<Prediction> {
    Predictor::from_checkpoint(checkpoint)?.predict(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_drops_at_listed_epochs() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate(0), 1e-4);
        assert_eq!(c.learning_rate(9), 1e-4);
        assert!((c.learning_rate(10) - 2e-5).abs() < 1e-18);
        assert!((c.learning_rate(39) - 2e-5).abs() < 1e-18);
        assert!((c.learning_rate(41) - 4e-6).abs() < 1e-18);
        assert!((c.learning_rate(199) - 1e-4 * 0.2f64.powi(4)).abs() < 1e-18);
    }

    #[test]
    fn invalid_train_configs() {
        let bad = TrainConfig {
            lr_drop_epochs: vec![10, 10],
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            initial_lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(RegressorSpec::default().validate().is_ok());
        let bad = RegressorSpec {
            input_width: 100,
            ..RegressorSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = RegressorSpec {
            output_stride: 3,
            ..RegressorSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn preprocessing_maps_coordinates() {
        let spec = RegressorSpec {
            input_height: 64,
            input_width: 64,
            ..RegressorSpec::default()
        };
        let img = GrayImage::from_fn(128, 96, |x, y| (x + 2 * y) as f64);
        let pre = preprocess(&img, &spec).unwrap();
        assert_eq!(pre.ratio, 0.5);
        assert_eq!(pre.content, ImageDims::new(64, 48));
        let p = Point2D::new(40.0, 30.0);
        assert_eq!(pre.to_original(pre.to_input(p)), p);
        // padding rows are zero, content is standardized
        assert!(pre.input.data().slice(ndarray::s![48.., ..]).iter().all(|v| *v == 0.0));
        let mean = pre.input.data().slice(ndarray::s![..48, ..]).mean().unwrap();
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in OrientationMode::ALL {
            assert_eq!(m.as_str().parse::<OrientationMode>().unwrap(), m);
        }
    }
}
