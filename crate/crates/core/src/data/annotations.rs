use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::data::Rejection;
use crate::error::{Error, Result};
use crate::geometry::{LandmarkPair, MeasurementKind, Point2D};
use crate::image::{AnnotatedImage, GrayImage};

pub const CSV_COLUMNS: [&str; 8] = [
    "image",
    "measurement",
    "x1",
    "y1",
    "x2",
    "y2",
    "subject_id",
    "mm_per_pixel",
];

/// All annotations of one image, without pixel data.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    /// Path as written in the CSV.
    pub image: String,
    pub landmarks: Vec<LandmarkPair>,
    /// Falls back to `image` when the CSV leaves it empty.
    pub subject_id: String,
    pub mm_per_pixel: Option<f64>,
}

impl ImageEntry {
    pub fn pair(&self, kind: MeasurementKind) -> Option<&LandmarkPair> {
        self.landmarks.iter().find(|p| p.measurement == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointAnnotations {
    /// Directory that relative image paths resolve against.
    pub base_dir: PathBuf,
    pub entries: Vec<ImageEntry>,
    pub rejected: Vec<Rejection>,
    /// Data rows read; equals accepted pairs plus rejections.
    pub rows_read: usize,
}

impl PointAnnotations {
    pub fn rows_loaded(&self) -> usize {
        self.entries.iter().map(|e| e.landmarks.len()).sum()
    }

    pub fn image_path(&self, entry: &ImageEntry) -> PathBuf {
        self.base_dir.join(&entry.image)
    }

    /// Decodes the image behind `entry` and checks landmarks lie inside it.
    pub fn load_image(&self, entry: &ImageEntry, source_id: &str) -> Result<AnnotatedImage> {
        let pixels = GrayImage::load(self.image_path(entry))?;
        let image = AnnotatedImage {
            pixels,
            landmarks: entry.landmarks.clone(),
            mm_per_pixel: entry.mm_per_pixel,
            image_id: entry.image.clone(),
            subject_id: entry.subject_id.clone(),
            source_id: source_id.to_string(),
        };
        image.validate()?;
        Ok(image)
    }

    /// Decodes every image; failures become per-record rejections.
    pub fn load_images(&self, source_id: &str) -> (Vec<AnnotatedImage>, Vec<Rejection>) {
        let mut images = Vec::with_capacity(self.entries.len());
        let mut rejected = Vec::new();
        for entry in &self.entries {
            match self.load_image(entry, source_id) {
                Ok(img) => images.push(img),
                Err(e) => rejected.push(Rejection::new(None, entry.image.clone(), e.to_string())),
            }
        }
        (images, rejected)
    }

    /// Entries annotated with `kind`, each reduced to that single pair.
    pub fn for_measurement(&self, kind: MeasurementKind) -> Vec<ImageEntry> {
        self.entries
            .iter()
            .filter_map(|e| {
                e.pair(kind).map(|p| ImageEntry {
                    landmarks: vec![*p],
                    ..e.clone()
                })
            })
            .collect()
    }
}

struct Columns {
    image: usize,
    measurement: usize,
    coords: [usize; 4],
    subject: Option<usize>,
    scale: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::Parse(format!("annotation CSV lacks a {name:?} column")))
        };
        Ok(Self {
            image: need("image")?,
            measurement: need("measurement")?,
            coords: [need("x1")?, need("y1")?, need("x2")?, need("y2")?],
            subject: find("subject_id"),
            scale: find("mm_per_pixel"),
        })
    }
}

fn field<'a>(row: &'a csv::StringRecord, idx: usize) -> &'a str {
    row.get(idx).map(str::trim).unwrap_or("")
}

struct Row {
    image: String,
    pair: LandmarkPair,
    subject: String,
    scale: Option<f64>,
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> std::result::Result<Row, String> {
    let image = field(row, cols.image);
    if image.is_empty() {
        return Err("missing image path".into());
    }
    let kind: MeasurementKind = field(row, cols.measurement)
        .parse()
        .map_err(|e: Error| e.to_string())?;

    let mut coords = [None; 4];
    for (slot, &idx) in coords.iter_mut().zip(&cols.coords) {
        let text = field(row, idx);
        if !text.is_empty() {
            let v: f64 = text
                .parse()
                .map_err(|_| format!("invalid coordinate {text:?}"))?;
            if !v.is_finite() {
                return Err(format!("invalid coordinate {text:?}"));
            }
            *slot = Some(v);
        }
    }
    let points: Vec<Point2D> = coords
        .chunks(2)
        .filter_map(|c| Some(Point2D::new(c[0]?, c[1]?)))
        .collect();
    if points.len() != 2 {
        return Err(format!("expected 2 points, found {}", points.len()));
    }
    let pair = LandmarkPair::new(points[0], points[1], kind).map_err(|e| e.to_string())?;

    let subject = cols
        .subject
        .map(|i| field(row, i))
        .filter(|s| !s.is_empty())
        .unwrap_or(image)
        .to_string();
    let scale = match cols.scale.map(|i| field(row, i)).filter(|s| !s.is_empty()) {
        None => None,
        Some(text) => match text.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Some(v),
            _ => return Err(format!("invalid mm_per_pixel {text:?}")),
        },
    };
    Ok(Row {
        image: image.to_string(),
        pair,
        subject,
        scale,
    })
}

/// Parses annotation CSV text. Bad rows are collected, not fatal.
pub fn parse_point_annotations<R: Read>(reader: R, base_dir: impl Into<PathBuf>) -> Result<PointAnnotations> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = Columns::from_header(csv.headers()?)?;
    let mut out = PointAnnotations {
        base_dir: base_dir.into(),
        ..PointAnnotations::default()
    };
    let mut index: HashMap<String, usize> = HashMap::new();

    for result in csv.records() {
        let row = result?;
        out.rows_read += 1;
        let line = row.position().map(|p| p.line());
        let label = field(&row, cols.image).to_string();
        let parsed = parse_row(&row, &cols).and_then(|r| match index.get(&r.image) {
            None => Ok(r),
            Some(&i) => {
                let entry = &out.entries[i];
                if entry.pair(r.pair.measurement).is_some() {
                    Err(format!("duplicate {} annotation", r.pair.measurement))
                } else if entry.subject_id != r.subject {
                    Err(format!(
                        "subject_id {:?} conflicts with {:?} on an earlier row",
                        r.subject, entry.subject_id
                    ))
                } else if entry.mm_per_pixel != r.scale {
                    Err("mm_per_pixel conflicts with an earlier row".into())
                } else {
                    Ok(r)
                }
            }
        });
        match parsed {
            Ok(r) => match index.get(&r.image) {
                Some(&i) => out.entries[i].landmarks.push(r.pair),
                None => {
                    index.insert(r.image.clone(), out.entries.len());
                    out.entries.push(ImageEntry {
                        image: r.image,
                        landmarks: vec![r.pair],
                        subject_id: r.subject,
                        mm_per_pixel: r.scale,
                    });
                }
            },
            Err(reason) => out.rejected.push(Rejection::new(line, label, reason)),
        }
    }
    Ok(out)
}

/// Reads an annotation CSV and checks that every referenced image exists.
pub fn load_point_annotations(csv_path: impl AsRef<Path>) -> Result<PointAnnotations> {
    let csv_path = csv_path.as_ref();
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let base = csv_path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    let mut parsed = parse_point_annotations(file, base)?;
    let (present, missing): (Vec<_>, Vec<_>) = std::mem::take(&mut parsed.entries)
        .into_iter()
        .partition(|e| parsed.base_dir.join(&e.image).is_file());
    for entry in missing {
        for _ in &entry.landmarks {
            parsed
                .rejected
                .push(Rejection::new(None, entry.image.clone(), "image file not found"));
        }
    }
    parsed.entries = present;
    Ok(parsed)
}

fn format_optional(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_point_annotations<W: Write>(writer: W, entries: &[ImageEntry]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(CSV_COLUMNS)?;
    for entry in entries {
        for pair in &entry.landmarks {
            csv.write_record([
                entry.image.clone(),
                pair.measurement.to_string(),
                pair.first.x.to_string(),
                pair.first.y.to_string(),
                pair.second.x.to_string(),
                pair.second.y.to_string(),
                entry.subject_id.clone(),
                format_optional(entry.mm_per_pixel),
            ])?;
        }
    }
    csv.flush().map_err(|e| Error::Csv(e.into()))
}

pub fn save_point_annotations(path: impl AsRef<Path>, entries: &[ImageEntry]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_point_annotations(std::io::BufWriter::new(file), entries)
}
