//! Manifest loading and the train/validation/test partition used by every
//! command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fetal_biometry::data::{load_point_annotations, make_split, ImageEntry, Rejection, SplitManifest, SplitPolicy};
use fetal_biometry::{AnnotatedImage, GrayImage, ImageDims, LandmarkPair, MeasurementKind};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// One annotated image and the file behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub entry: ImageEntry,
    pub path: PathBuf,
    /// Short name of the manifest the record came from.
    pub source: String,
}

impl Record {
    pub fn id(&self) -> &str {
        &self.entry.image
    }

    pub fn pair(&self, kind: MeasurementKind) -> Option<&LandmarkPair> {
        self.entry.pair(kind)
    }

    pub fn dims(&self) -> CliResult<ImageDims> {
        Ok(GrayImage::read_dims(&self.path)?)
    }

    pub fn load(&self) -> CliResult<AnnotatedImage> {
        let image = AnnotatedImage {
            pixels: GrayImage::load(&self.path)?,
            landmarks: self.entry.landmarks.clone(),
            mm_per_pixel: self.entry.mm_per_pixel,
            image_id: self.entry.image.clone(),
            subject_id: self.entry.subject_id.clone(),
            source_id: self.source.clone(),
        };
        image.validate()?;
        Ok(image)
    }
}

/// Label for a manifest in reports: its parent directory name, or the file
/// stem for a manifest with a generic name.
pub fn manifest_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    if stem == "annotations" {
        if let Some(dir) = path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
            return dir.to_string();
        }
    }
    stem.to_string()
}

/// All records of one manifest plus the rows it rejected.
pub fn load_manifest(path: &Path) -> CliResult<(Vec<Record>, Vec<Rejection>)> {
    let ann = load_point_annotations(path).map_err(|e| CliError::from(e).context(path.display()))?;
    let source = manifest_label(path);
    let records = ann
        .entries
        .iter()
        .map(|e| Record {
            entry: e.clone(),
            path: ann.image_path(e),
            source: source.clone(),
        })
        .collect();
    Ok((records, ann.rejected))
}

fn split_records(records: Vec<Record>, fraction: f64, subject_disjoint: bool, seed: u64) -> CliResult<(Vec<Record>, Vec<Record>, SplitManifest)> {
    let items: Vec<(&str, &str)> = records
        .iter()
        .map(|r| (r.entry.image.as_str(), r.entry.subject_id.as_str()))
        .collect();
    let policy = SplitPolicy {
        test_fraction: fraction,
        subject_disjoint,
    };
    let manifest = make_split(&items, policy, seed)?;
    let (held, kept): (Vec<Record>, Vec<Record>) = records.into_iter().partition(|r| manifest.is_test(r.id()));
    Ok((kept, held, manifest))
}

/// Train, validation and test records with the manifests that produced them.
#[derive(Debug, Clone, Default)]
pub struct Partition {
    pub train: Vec<Record>,
    pub val: Vec<Record>,
    pub test: Vec<Record>,
    pub rejected: Vec<Rejection>,
    /// Splits drawn here (as opposed to given as separate manifests).
    pub drawn: BTreeMap<&'static str, SplitManifest>,
    pub train_label: String,
    pub test_label: String,
}

impl Partition {
    /// Reads the configured manifests and draws any missing split. The test
    /// split is always drawn first, so every command sees the same training
    /// records for a given config.
    ///
    /// Splits are drawn over all records before filtering by measurement,
    /// so a subject never straddles two sides for any measurement.
    pub fn from_config(config: &ExperimentConfig) -> CliResult<Self> {
        let train_path = config
            .data
            .train_manifest
            .as_ref()
            .ok_or_else(|| CliError::invalid("config sets no data.train_manifest"))?;
        if std::fs::metadata(train_path).is_ok_and(|m| m.len() == 0) {
            return Err(CliError::invalid(format!("no training records in {}", train_path.display())));
        }
        let (mut trainval, mut rejected) = load_manifest(train_path)?;
        let mut p = Partition {
            train_label: config.evaluate.train_db.clone().unwrap_or_else(|| manifest_label(train_path)),
            ..Partition::default()
        };
        if trainval.is_empty() {
            return Err(CliError::invalid(format!("no training records in {}", train_path.display())));
        }
        let split = &config.split;
        match &config.data.test_manifest {
            Some(path) => {
                let (test, rej) = load_manifest(path)?;
                rejected.extend(rej);
                p.test = test;
                p.test_label = config.evaluate.test_db.clone().unwrap_or_else(|| manifest_label(path));
            }
            None => {
                let (kept, held, manifest) = split_records(trainval, split.test_fraction, split.subject_disjoint, split.seed)?;
                trainval = kept;
                p.test = held;
                p.test_label = config
                    .evaluate
                    .test_db
                    .clone()
                    .unwrap_or_else(|| format!("{}_test", p.train_label));
                p.drawn.insert("test", manifest);
            }
        }
        match &config.data.val_manifest {
            Some(path) => {
                let (val, rej) = load_manifest(path)?;
                rejected.extend(rej);
                p.val = val;
                p.train = trainval;
            }
            None => {
                let (kept, held, manifest) =
                    split_records(trainval, split.val_fraction, split.subject_disjoint, split.seed.wrapping_add(1))?;
                p.train = kept;
                p.val = held;
                p.drawn.insert("val", manifest);
            }
        }
        p.rejected = rejected;
        Ok(p)
    }

    /// Writes the drawn splits and any rejected rows into `dir`.
    pub fn save(&self, dir: &Path) -> CliResult<()> {
        for (name, manifest) in &self.drawn {
            manifest.save(dir.join(format!("split_{name}.json")))?;
        }
        if !self.rejected.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("rejected.csv"))?;
            w.write_record(["line", "record", "reason"])?;
            for r in &self.rejected {
                w.write_record([r.line.map(|l| l.to_string()).unwrap_or_default(), r.record.clone(), r.reason.clone()])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// Records carrying `kind`, reduced to that single pair.
pub fn with_measurement(records: &[Record], kind: MeasurementKind) -> Vec<Record> {
    records
        .iter()
        .filter_map(|r| {
            r.pair(kind).map(|p| Record {
                entry: ImageEntry {
                    landmarks: vec![*p],
                    ..r.entry.clone()
                },
                ..r.clone()
            })
        })
        .collect()
}

/// Decodes every record; unreadable ones are reported and skipped.
pub fn load_images(records: &[Record], rejected: &mut Vec<Rejection>) -> Vec<AnnotatedImage> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        match r.load() {
            Ok(img) => out.push(img),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", r.id());
                rejected.push(rejection(r.id(), e.to_string()));
            }
        }
    }
    out
}

pub fn rejection(record: &str, reason: String) -> Rejection {
    Rejection {
        line: None,
        record: record.to_string(),
        reason,
    }
}
