//! Converter for point annotations exported by the VGG Image Annotator.
//!
//! Accepts both a full project file (entries under `_via_img_metadata`) and a
//! plain JSON export (entries at the top level). Each entry contributes its
//! `point` regions; the region attribute `measurement` names the biometric
//! and the file attributes `subject_id` and `mm_per_pixel` are optional.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::data::{ImageEntry, Rejection};
use crate::error::{Error, Result};
use crate::geometry::{LandmarkPair, MeasurementKind, Point2D};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViaConversion {
    pub entries: Vec<ImageEntry>,
    pub rejected: Vec<Rejection>,
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn text(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn regions(entry: &Value) -> Vec<&Value> {
    match entry.get("regions") {
        Some(Value::Array(list)) => list.iter().collect(),
        // older exports key regions by index
        Some(Value::Object(map)) => {
            let mut keyed: Vec<(&String, &Value)> = map.iter().collect();
            keyed.sort_by_key(|(k, _)| k.parse::<usize>().unwrap_or(usize::MAX));
            keyed.into_iter().map(|(_, v)| v).collect()
        }
        _ => Vec::new(),
    }
}

/// Converts VIA JSON text. `default_measurement` labels regions without a
/// `measurement` attribute.
pub fn convert_via(json: &str, default_measurement: Option<MeasurementKind>) -> Result<ViaConversion> {
    let root: Value = serde_json::from_str(json)?;
    let entries = root.get("_via_img_metadata").unwrap_or(&root);
    let Value::Object(entries) = entries else {
        return Err(Error::Parse("VIA export is not a JSON object".into()));
    };

    let mut out = ViaConversion::default();
    for (key, entry) in entries {
        let Some(filename) = text(entry.get("filename")) else {
            out.rejected.push(Rejection::new(None, key.clone(), "entry has no filename"));
            continue;
        };
        let mut points: BTreeMap<MeasurementKind, Vec<Point2D>> = BTreeMap::new();
        let mut bad = Vec::new();
        for region in regions(entry) {
            let shape = &region["shape_attributes"];
            if shape["name"].as_str() != Some("point") {
                continue;
            }
            let (Some(cx), Some(cy)) = (number(&shape["cx"]), number(&shape["cy"])) else {
                bad.push("point region without numeric cx/cy".to_string());
                continue;
            };
            let kind = match text(region["region_attributes"].get("measurement")) {
                Some(label) => match label.parse::<MeasurementKind>() {
                    Ok(k) => k,
                    Err(e) => {
                        bad.push(e.to_string());
                        continue;
                    }
                },
                None => match default_measurement {
                    Some(k) => k,
                    None => {
                        bad.push("point region without a measurement attribute".to_string());
                        continue;
                    }
                },
            };
            points.entry(kind).or_default().push(Point2D::new(cx, cy));
        }
        for reason in bad {
            out.rejected.push(Rejection::new(None, filename.clone(), reason));
        }
        if points.is_empty() {
            out.rejected.push(Rejection::new(None, filename.clone(), "no point regions"));
            continue;
        }

        let attrs = &entry["file_attributes"];
        let subject_id = text(attrs.get("subject_id")).unwrap_or_else(|| filename.clone());
        let mm_per_pixel = attrs.get("mm_per_pixel").and_then(number).filter(|v| *v > 0.0);
        let mut landmarks = Vec::new();
        for (kind, pts) in points {
            if pts.len() != 2 {
                out.rejected.push(Rejection::new(
                    None,
                    filename.clone(),
                    format!("{kind}: expected 2 points, found {}", pts.len()),
                ));
                continue;
            }
            match LandmarkPair::new(pts[0], pts[1], kind) {
                Ok(pair) => landmarks.push(pair),
                Err(e) => out.rejected.push(Rejection::new(None, filename.clone(), e.to_string())),
            }
        }
        if !landmarks.is_empty() {
            out.entries.push(ImageEntry {
                image: filename,
                landmarks,
                subject_id,
                mm_per_pixel,
            });
        }
    }
    Ok(out)
}
