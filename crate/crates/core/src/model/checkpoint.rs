//! Checkpoint files: a JSON sidecar with all metadata plus little-endian f64
//! parameter blobs next to it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::dod::ProjectionAxis;
use crate::error::{Error, Result};
use crate::geometry::MeasurementKind;
use crate::heatmap::HeatmapConfig;
use crate::model::{RegressorSpec, TrainConfig};

/// Per-epoch training history, index = 0-based epoch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochCurves {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_median_px_error: Vec<f64>,
    pub learning_rate: Vec<f64>,
    /// Samples dropped by augmentation.
    pub skipped: Vec<usize>,
}

impl EpochCurves {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }

    /// Epoch with the lowest validation error; earliest on ties.
    pub fn best_epoch(&self) -> Option<usize> {
        self.val_median_px_error
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (e, &v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((e, v)),
            })
            .map(|(e, _)| e)
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumeState {
    pub weights: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub measurement: MeasurementKind,
    pub spec: RegressorSpec,
    pub train_config: TrainConfig,
    pub augment: AugmentConfig,
    pub heatmap: HeatmapConfig,
    /// Axis used to order labels, `None` for annotation order.
    pub label_axis: Option<ProjectionAxis>,
    pub orientation_model_path: Option<String>,
    pub config_fingerprint: Option<String>,
    /// Epoch whose weights are stored in `weights`.
    pub best_epoch: usize,
    pub epochs_completed: usize,
    pub curves: EpochCurves,
    pub n_train: usize,
    pub n_val: usize,
    /// Best-epoch parameters.
    pub weights: Vec<f64>,
    pub resume: Option<ResumeState>,
}

#[derive(Serialize, Deserialize)]
struct BlobRef {
    file: PathBuf,
    values: usize,
}

#[derive(Serialize, Deserialize)]
struct ResumeSidecar {
    blob: BlobRef,
    adam_step: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    measurement: MeasurementKind,
    spec: RegressorSpec,
    train_config: TrainConfig,
    augment: AugmentConfig,
    heatmap: HeatmapConfig,
    label_axis: Option<ProjectionAxis>,
    orientation_model_path: Option<String>,
    config_fingerprint: Option<String>,
    best_epoch: usize,
    epochs_completed: usize,
    n_train: usize,
    n_val: usize,
    curves: EpochCurves,
    weights: BlobRef,
    resume: Option<ResumeSidecar>,
}

fn write_blob(path: &Path, parts: &[&[f64]]) -> Result<()> {
    let mut bytes = Vec::with_capacity(parts.iter().map(|p| p.len() * 8).sum());
    for part in parts {
        for v in part.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_blob(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Parse(format!(
            "{}: expected {expected} values, found {} bytes",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    /// Writes `<stem>.json`, `<stem>.weights.bin` and, when resumable,
    /// `<stem>.state.bin` next to `json_path`.
    pub fn save(&self, json_path: impl AsRef<Path>) -> Result<()> {
        let json_path = json_path.as_ref();
        let dir = json_path.parent().unwrap_or_else(|| Path::new(""));
        let stem = json_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("checkpoint");
        let weights_file = PathBuf::from(format!("{stem}.weights.bin"));
        write_blob(&dir.join(&weights_file), &[&self.weights])?;
        let resume = match &self.resume {
            Some(r) => {
                let file = PathBuf::from(format!("{stem}.state.bin"));
                write_blob(&dir.join(&file), &[&r.weights, &r.adam_m, &r.adam_v])?;
                Some(ResumeSidecar {
                    blob: BlobRef {
                        file,
                        values: r.weights.len(),
                    },
                    adam_step: r.adam_step,
                })
            }
            None => None,
        };
        let sidecar = Sidecar {
            measurement: self.measurement,
            spec: self.spec.clone(),
            train_config: self.train_config.clone(),
            augment: self.augment,
            heatmap: self.heatmap,
            label_axis: self.label_axis,
            orientation_model_path: self.orientation_model_path.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
            best_epoch: self.best_epoch,
            epochs_completed: self.epochs_completed,
            n_train: self.n_train,
            n_val: self.n_val,
            curves: self.curves.clone(),
            weights: BlobRef {
                file: weights_file,
                values: self.weights.len(),
            },
            resume,
        };
        let text = serde_json::to_string_pretty(&sidecar)? + "\n";
        std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
    }

    pub fn load(json_path: impl AsRef<Path>) -> Result<Self> {
        let json_path = json_path.as_ref();
        let dir = json_path.parent().unwrap_or_else(|| Path::new(""));
        let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let s: Sidecar = serde_json::from_str(&text)?;
        let weights = read_blob(&dir.join(&s.weights.file), s.weights.values)?;
        let resume = match s.resume {
            Some(r) => {
                let n = r.blob.values;
                let mut all = read_blob(&dir.join(&r.blob.file), 3 * n)?;
                let adam_v = all.split_off(2 * n);
                let adam_m = all.split_off(n);
                Some(ResumeState {
                    weights: all,
                    adam_m,
                    adam_v,
                    adam_step: r.adam_step,
                })
            }
            None => None,
        };
        Ok(Self {
            measurement: s.measurement,
            spec: s.spec,
            train_config: s.train_config,
            augment: s.augment,
            heatmap: s.heatmap,
            label_axis: s.label_axis,
            orientation_model_path: s.orientation_model_path,
            config_fingerprint: s.config_fingerprint,
            best_epoch: s.best_epoch,
            epochs_completed: s.epochs_completed,
            n_train: s.n_train,
            n_val: s.n_val,
            curves: s.curves,
            weights,
            resume,
        })
    }

    /// Writes the curves as CSV: `epoch,train_loss,val_median_px_error`
    /// followed by the extra columns.
    pub fn write_curves_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_median_px_error", "val_loss", "learning_rate"])?;
        let c = &self.curves;
        for e in 0..c.len() {
            w.write_record([
                e.to_string(),
                c.train_loss[e].to_string(),
                c.val_median_px_error[e].to_string(),
                c.val_loss[e].to_string(),
                c.learning_rate[e].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
