use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fetal_biometry::measure::{compute_measurement, resolve_scale, RulerTemplate, ScaleSource};
use fetal_biometry::metrics::{agreement_report, bland_altman_points, paired_t_test, MeasurementSet};
use fetal_biometry::model::{Checkpoint, Predictor};
use fetal_biometry::{euclidean_distance, Error as CoreError, LandmarkPair, MeasurementKind};
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::dataset::{load_manifest, manifest_label, with_measurement, Partition, Record};
use crate::error::{CliError, CliResult};
use crate::plot::bland_altman_plot;
use crate::report::{write_paired, write_report, PairedRow, ReportRow};
use crate::run::RunDir;

pub const REPORT_FILE: &str = "report.csv";
pub const PAIRED_FILE: &str = "paired_tests.csv";
pub const GROUND_TRUTH_METHOD: &str = "ground_truth";

enum Method {
    GroundTruth(MeasurementKind),
    Model { kind: MeasurementKind, predictor: Box<Predictor> },
}

impl Method {
    fn kind(&self) -> MeasurementKind {
        match self {
            Method::GroundTruth(k) => *k,
            Method::Model { kind, .. } => *kind,
        }
    }
}

struct NamedMethod {
    label: String,
    train_db: String,
    method: Method,
}

/// One scored test case.
#[derive(Debug, Clone, Serialize)]
struct Case {
    image: String,
    ground_truth_mm: f64,
    predicted_mm: f64,
    difference_mm: f64,
    mm_per_pixel: f64,
    scale_source: ScaleSource,
    /// Mean landmark distance under the better of the two label matchings.
    landmark_error_px: f64,
    gt_x1: f64,
    gt_y1: f64,
    gt_x2: f64,
    gt_y2: f64,
    pred_x1: f64,
    pred_y1: f64,
    pred_x2: f64,
    pred_y2: f64,
    min_confidence: f64,
}

fn landmark_error(gt: &LandmarkPair, pred: &LandmarkPair) -> f64 {
    let direct = euclidean_distance(&gt.first, &pred.first) + euclidean_distance(&gt.second, &pred.second);
    let crossed = euclidean_distance(&gt.first, &pred.second) + euclidean_distance(&gt.second, &pred.first);
    0.5 * direct.min(crossed)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Method label of a checkpoint: its file stem without the `model_<kind>_`
/// prefix the train command writes.
fn checkpoint_label(path: &Path, kind: MeasurementKind) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    stem.strip_prefix(&format!("model_{kind}_")).unwrap_or(stem).to_string()
}

fn discover_checkpoints(run_dir: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let Some(dir) = run_dir else {
        return Ok(Vec::new());
    };
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::missing(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("model_"))
        })
        .collect();
    found.sort();
    Ok(found)
}

struct Outcome {
    cases: Vec<Case>,
    unscaled: usize,
}

fn score(
    method: &Method,
    records: &[Record],
    config: &crate::config::ExperimentConfig,
    template: Option<&RulerTemplate>,
) -> CliResult<Outcome> {
    let kind = method.kind();
    let mut out = Outcome {
        cases: Vec::new(),
        unscaled: 0,
    };
    for record in with_measurement(records, kind) {
        let image = match record.load() {
            Ok(img) => img,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", record.id());
                continue;
            }
        };
        let scale = match resolve_scale(config.scale.source, image.mm_per_pixel, &image.pixels, template) {
            Ok(s) => s,
            Err(CoreError::NoScale(why)) => {
                eprintln!("warning: {}: {why}", record.id());
                out.unscaled += 1;
                continue;
            }
            Err(e) => return Err(CliError::from(e).context(record.id())),
        };
        let gt = image.landmarks[0];
        let (pred, confidence) = match method {
            Method::GroundTruth(_) => (gt, 1.0),
            Method::Model { predictor, .. } => {
                let p = predictor.predict(&image.pixels)?;
                (p.pair, p.confidence[0].min(p.confidence[1]))
            }
        };
        let g = compute_measurement(&gt, scale)?;
        let p = match compute_measurement(&pred, scale) {
            Ok(p) => p,
            // coincident predicted landmarks measure zero length
            Err(_) => fetal_biometry::measure::BiometricResult {
                length_px: 0.0,
                length_mm: 0.0,
                ..g
            },
        };
        out.cases.push(Case {
            image: record.id().to_string(),
            ground_truth_mm: g.length_mm,
            predicted_mm: p.length_mm,
            difference_mm: g.length_mm - p.length_mm,
            mm_per_pixel: scale.mm_per_pixel,
            scale_source: scale.source,
            landmark_error_px: landmark_error(&gt, &pred),
            gt_x1: gt.first.x,
            gt_y1: gt.first.y,
            gt_x2: gt.second.x,
            gt_y2: gt.second.y,
            pred_x1: pred.first.x,
            pred_y1: pred.first.y,
            pred_x2: pred.second.x,
            pred_y2: pred.second.y,
            min_confidence: confidence,
        });
    }
    Ok(out)
}

/// Scores every method on every test set and writes `report.csv`, per-case
/// CSVs, Bland-Altman plots and paired t-tests between methods.
pub fn run(
    loaded: &LoadedConfig,
    run_dir: Option<&Path>,
    checkpoints: &[PathBuf],
    test_manifests: &[PathBuf],
    ground_truth: bool,
) -> CliResult<()> {
    let config = &loaded.config;
    let checkpoints = if checkpoints.is_empty() {
        discover_checkpoints(run_dir)?
    } else {
        checkpoints.to_vec()
    };
    if checkpoints.is_empty() && !ground_truth {
        return Err(CliError::missing(
            "no checkpoints: pass --checkpoint, a --run-dir holding model_*.json, or --ground-truth",
        ));
    }

    // test sets: explicit manifests (cross-dataset), else the configured ones
    let mut train_db = config.evaluate.train_db.clone();
    let mut test_sets: Vec<(String, Vec<Record>)> = Vec::new();
    if test_manifests.is_empty() {
        let partition = Partition::from_config(config)?;
        train_db.get_or_insert(partition.train_label.clone());
        test_sets.push((partition.test_label.clone(), partition.test));
    } else {
        if train_db.is_none() {
            train_db = config.data.train_manifest.as_deref().map(manifest_label);
        }
        for path in test_manifests {
            let (records, rejected) = load_manifest(path)?;
            for r in &rejected {
                eprintln!("warning: {}: {r}", path.display());
            }
            test_sets.push((manifest_label(path), records));
        }
    }
    let train_db = train_db.unwrap_or_else(|| "-".into());

    let template = match &config.scale.ruler_template {
        Some(p) => Some(RulerTemplate::load(p).map_err(|e| CliError::from(e).context(p.display()))?),
        None => None,
    };

    let mut methods = Vec::new();
    if ground_truth {
        for &kind in &config.measurements {
            methods.push(NamedMethod {
                label: GROUND_TRUTH_METHOD.into(),
                train_db: "-".into(),
                method: Method::GroundTruth(kind),
            });
        }
    }
    for path in &checkpoints {
        let ckpt = Checkpoint::load(path).map_err(|e| CliError::from(e).context(path.display()))?;
        if ckpt.config_fingerprint.as_deref().is_some_and(|f| f != loaded.fingerprint) {
            eprintln!("note: {} was trained under a different config", path.display());
        }
        let kind = ckpt.measurement;
        methods.push(NamedMethod {
            label: checkpoint_label(path, kind),
            train_db: train_db.clone(),
            method: Method::Model {
                kind,
                predictor: Box::new(Predictor::from_checkpoint(&ckpt)?),
            },
        });
    }
    // labels must be unique per measurement
    let mut seen: BTreeMap<(MeasurementKind, String), usize> = BTreeMap::new();
    for m in &mut methods {
        let n = seen.entry((m.method.kind(), m.label.clone())).or_insert(0);
        *n += 1;
        if *n > 1 {
            m.label = format!("{}_{}", m.label, n);
        }
    }

    let run = RunDir::create(loaded, run_dir, "evaluate")?;
    let mut rows = Vec::new();
    let mut paired = Vec::new();
    let mut measurable = 0;
    let mut unscaled = 0;
    for (test_db, records) in &test_sets {
        let mut records = records.clone();
        records.sort_by(|a, b| a.id().cmp(b.id()));
        let mut scored: Vec<(&NamedMethod, Vec<Case>)> = Vec::new();
        for m in &methods {
            let kind = m.method.kind();
            let outcome = score(&m.method, &records, config, template.as_ref())?;
            measurable += outcome.cases.len();
            unscaled += outcome.unscaled;
            let cases = outcome.cases;
            let stem = file_safe(&format!("{test_db}_{kind}_{}", m.label));
            let mut w = csv::Writer::from_path(run.join(format!("cases_{stem}.csv")))?;
            for c in &cases {
                w.serialize(c)?;
            }
            w.flush()?;
            if cases.len() < 2 {
                eprintln!("warning: {test_db}/{kind}/{}: {} measurable cases, need 2", m.label, cases.len());
                continue;
            }
            let ids: Vec<String> = cases.iter().map(|c| c.image.clone()).collect();
            let gt = MeasurementSet::new(ids.clone(), cases.iter().map(|c| c.ground_truth_mm).collect())?;
            let pred = MeasurementSet::new(ids, cases.iter().map(|c| c.predicted_mm).collect())?;
            let report = agreement_report(&gt, &pred, config.evaluate.ci95_form)?;
            let ba = bland_altman_points(&gt, &pred, config.evaluate.ci95_form)?;
            bland_altman_plot(&run.join(format!("bland_altman_{stem}.png")), &format!("{kind} {} on {test_db}", m.label), &ba)?;
            println!(
                "{test_db} {kind} {}: n={} bias={:.3} mm CI95={:.3} mm mean L1={:.3} mm median L1={:.3} mm",
                m.label, report.n, report.bias, report.ci95, report.mean_abs, report.median_abs
            );
            rows.push(ReportRow::new(&m.train_db, test_db, &m.label, kind, &report));
            scored.push((m, cases));
        }
        // paired t-tests on absolute errors over the cases both methods scored
        for (i, (a, ca)) in scored.iter().enumerate() {
            for (b, cb) in &scored[i + 1..] {
                let kind = a.method.kind();
                if b.method.kind() != kind {
                    continue;
                }
                let lookup: BTreeMap<&str, f64> = cb.iter().map(|c| (c.image.as_str(), c.difference_mm)).collect();
                let (da, db): (Vec<f64>, Vec<f64>) = ca
                    .iter()
                    .filter_map(|c| lookup.get(c.image.as_str()).map(|&d| (c.difference_mm, d)))
                    .unzip();
                match paired_t_test(&da, &db) {
                    Ok(t) => paired.push(PairedRow {
                        test_db: test_db.clone(),
                        measurement: kind,
                        method_a: a.label.clone(),
                        method_b: b.label.clone(),
                        n: da.len(),
                        t: t.t,
                        p_value: t.p_value,
                    }),
                    Err(e) => eprintln!("note: {kind} {} vs {}: {e}", a.label, b.label),
                }
            }
        }
    }

    if measurable == 0 && unscaled > 0 {
        return Err(CliError::missing(format!(
            "no scale available for any of {unscaled} test cases (scale.source = {:?})",
            config.scale.source
        )));
    }
    if rows.is_empty() {
        return Err(CliError::invalid("no test records could be scored"));
    }
    write_report(&run.join(REPORT_FILE), &rows)?;
    if !paired.is_empty() {
        write_paired(&run.join(PAIRED_FILE), &paired)?;
    }
    println!("report: {}", run.join(REPORT_FILE).display());
    Ok(())
}
