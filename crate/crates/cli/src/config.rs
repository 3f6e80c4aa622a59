//! Experiment configuration: one TOML file per experiment plus `--set`
//! overrides, resolved against the file's directory and fingerprinted.
//!
//! ```toml
//! name = "femur-orientation"
//! measurements = ["FL"]
//! output_dir = "runs"
//!
//! [data]
//! train_manifest = "data/train/annotations.csv"
//! val_manifest = "data/val/annotations.csv"      # optional, else split off train
//! test_manifest = "data/test/annotations.csv"    # optional, else split off train
//! orientation_model = "dod_fl.json"              # optional, else fitted
//!
//! [split]
//! test_fraction = 0.2
//! val_fraction = 0.2
//! subject_disjoint = true
//! seed = 0
//!
//! [gmm]
//! max_iterations = 500
//!
//! [model]
//! variant = "tiny_encoder_decoder"
//! input_height = 128
//! input_width = 128
//! output_stride = 4
//! channels = [16, 21, 32, 42]
//!
//! [train]
//! epochs = 30
//! batch_size = 2
//! initial_lr = 1e-3
//! lr_drop_epochs = [20]
//! orientation_mode = "dynamic"
//!
//! [ablation]
//! modes = ["dynamic", "fixed_horizontal", "fixed_vertical", "none"]
//!
//! [augment]
//! rotation_range_deg = [-180.0, 180.0]
//! scale_range_pct = [-5.0, 5.0]
//!
//! [heatmap]
//! sigma = 2.0
//! stride = 4
//! target_center = "continuous"
//! subpixel_refinement = true
//!
//! [scale]
//! source = "auto"                 # metadata | recover | auto
//! ruler_template = "ruler.json"
//!
//! [evaluate]
//! ci95_form = "mean_abs_centered" # or "classical"
//! train_db = "synthetic"
//!
//! [synth]
//! n_images = 200
//! seed = 1
//! ```

use std::path::{Path, PathBuf};

use fetal_biometry::augment::AugmentConfig;
use fetal_biometry::data::SyntheticConfig;
use fetal_biometry::dod::GmmFitConfig;
use fetal_biometry::heatmap::HeatmapConfig;
use fetal_biometry::measure::ScalePreference;
use fetal_biometry::metrics::Ci95Form;
use fetal_biometry::model::{OrientationMode, RegressorSpec, TrainConfig};
use fetal_biometry::MeasurementKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    /// Previously fitted orientation model to reuse instead of fitting.
    pub orientation_model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Used only when no test manifest is given.
    pub test_fraction: f64,
    /// Used only when no validation manifest is given.
    pub val_fraction: f64,
    pub subject_disjoint: bool,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            val_fraction: 0.2,
            subject_disjoint: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Orientation modes to train side by side; empty means only
    /// `train.orientation_mode`.
    pub modes: Vec<OrientationMode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleConfig {
    pub source: ScalePreference,
    pub ruler_template: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub ci95_form: Ci95Form,
    /// Report label of the training data; the train manifest's directory
    /// name when unset.
    pub train_db: Option<String>,
    /// Report label of the configured test data.
    pub test_db: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub measurements: Vec<MeasurementKind>,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub gmm: GmmFitConfig,
    pub model: RegressorSpec,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    pub augment: AugmentConfig,
    pub heatmap: HeatmapConfig,
    pub scale: ScaleConfig,
    pub evaluate: EvaluateConfig,
    pub synth: SyntheticConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            measurements: vec![MeasurementKind::Fl],
            output_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            gmm: GmmFitConfig::default(),
            model: RegressorSpec::default(),
            train: TrainConfig::default(),
            ablation: AblationConfig::default(),
            augment: AugmentConfig::default(),
            heatmap: HeatmapConfig::default(),
            scale: ScaleConfig::default(),
            evaluate: EvaluateConfig::default(),
            synth: SyntheticConfig::default(),
        }
    }
}

/// A `dotted.key=value` override; the value is parsed as a TOML literal and
/// falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::invalid(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::invalid(format!("override key {key:?} is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::invalid(format!("override {key:?}: {part} is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// A validated configuration and where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Hex SHA-256 of the resolved configuration.
    pub fingerprint: String,
}

impl LoadedConfig {
    pub fn short_fingerprint(&self) -> &str {
        &self.fingerprint[..12]
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn require_exists(label: &str, p: &Option<PathBuf>) -> CliResult<()> {
    match p {
        Some(path) if !path.exists() => Err(CliError::invalid(format!(
            "{label} {} does not exist",
            path.display()
        ))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Parses TOML text, applies overrides and resolves relative paths
    /// against `base`.
    pub fn from_toml(text: &str, overrides: &[String], base: &Path) -> CliResult<LoadedConfig> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::invalid(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::invalid(format!("config: {e}")))?;
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        for p in [
            &mut config.data.train_manifest,
            &mut config.data.val_manifest,
            &mut config.data.test_manifest,
            &mut config.data.orientation_model,
            &mut config.scale.ruler_template,
        ] {
            resolve(base, p);
        }
        config.validate()?;
        let fingerprint = config.fingerprint()?;
        Ok(LoadedConfig { config, fingerprint })
    }

    pub fn load(path: &Path, overrides: &[String]) -> CliResult<LoadedConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, overrides, base)
    }

    /// Defaults plus overrides, for commands that can run without a file.
    pub fn from_overrides(overrides: &[String]) -> CliResult<LoadedConfig> {
        Self::from_toml("", overrides, Path::new(""))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.measurements.is_empty() {
            return Err(CliError::invalid("config lists no measurements"));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        self.heatmap.validate()?;
        self.gmm.validate()?;
        self.synth.validate()?;
        if self.heatmap.stride != self.model.output_stride {
            return Err(CliError::invalid(format!(
                "heatmap.stride ({}) must equal model.output_stride ({})",
                self.heatmap.stride, self.model.output_stride
            )));
        }
        for (label, f) in [("split.test_fraction", self.split.test_fraction), ("split.val_fraction", self.split.val_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(CliError::invalid(format!("{label} must lie in (0, 1), got {f}")));
            }
        }
        Ok(())
    }

    /// Fails when a referenced file does not exist. Run by every command
    /// that reads data; `synth` and the converters skip it because they
    /// create the files a config points at.
    pub fn check_paths(&self) -> CliResult<()> {
        require_exists("data.train_manifest", &self.data.train_manifest)?;
        require_exists("data.val_manifest", &self.data.val_manifest)?;
        require_exists("data.test_manifest", &self.data.test_manifest)?;
        require_exists("data.orientation_model", &self.data.orientation_model)?;
        require_exists("scale.ruler_template", &self.scale.ruler_template)?;
        Ok(())
    }

    /// Modes trained by the `train` command, in order.
    pub fn training_modes(&self) -> Vec<OrientationMode> {
        if self.ablation.modes.is_empty() {
            vec![self.train.orientation_mode]
        } else {
            self.ablation.modes.clone()
        }
    }

    /// SHA-256 over the canonical JSON form; the output location is left
    /// out so moving results does not change the fingerprint.
    pub fn fingerprint(&self) -> CliResult<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c)?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::internal(format!("config serialization: {e}")))
    }
}
