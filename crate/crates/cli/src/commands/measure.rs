use std::path::Path;

use fetal_biometry::measure::{compute_measurement, resolve_scale, RulerTemplate, ScalePreference, ScaleSource};
use fetal_biometry::model::{Checkpoint, Predictor};
use fetal_biometry::{GrayImage, LandmarkPair, MeasurementKind};
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

pub struct MeasureArgs<'a> {
    pub checkpoint: &'a Path,
    pub image: &'a Path,
    pub scale_source: Option<ScalePreference>,
    pub mm_per_pixel: Option<f64>,
    pub ruler_template: Option<&'a Path>,
}

#[derive(Debug, Serialize)]
pub struct MeasureOutput {
    pub image: String,
    pub measurement: MeasurementKind,
    pub landmarks: LandmarkPair,
    pub length_px: f64,
    pub length_mm: f64,
    pub mm_per_pixel: f64,
    pub scale_source: ScaleSource,
    pub confidence: [f64; 2],
    pub low_confidence: [bool; 2],
    pub config_fingerprint: String,
}

/// Predicts the landmarks of one image and prints the measurement as JSON.
pub fn run(loaded: &LoadedConfig, args: MeasureArgs<'_>) -> CliResult<()> {
    let config = &loaded.config;
    let ckpt = Checkpoint::load(args.checkpoint).map_err(|e| CliError::from(e).context(args.checkpoint.display()))?;
    let image = GrayImage::load(args.image).map_err(|e| CliError::from(e).context(args.image.display()))?;
    let template_path = args.ruler_template.or(config.scale.ruler_template.as_deref());
    let template = match template_path {
        Some(p) => Some(RulerTemplate::load(p).map_err(|e| CliError::from(e).context(p.display()))?),
        None => None,
    };
    let preference = args.scale_source.unwrap_or(config.scale.source);
    let prediction = Predictor::from_checkpoint(&ckpt)?.predict(&image)?;
    let scale = resolve_scale(preference, args.mm_per_pixel, &image, template.as_ref())?;
    let result = compute_measurement(&prediction.pair, scale)?;
    let out = MeasureOutput {
        image: args.image.display().to_string(),
        measurement: result.kind,
        landmarks: result.landmarks,
        length_px: result.length_px,
        length_mm: result.length_mm,
        mm_per_pixel: result.mm_per_pixel,
        scale_source: result.scale_source,
        confidence: prediction.confidence,
        low_confidence: prediction.low_confidence,
        config_fingerprint: loaded.fingerprint.clone(),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
